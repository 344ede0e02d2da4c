#pragma once

#include <memory>
#include <string>
#include <vector>

#include "slsdrop/response.hpp"
#include "slsdrop/system_model.hpp"

namespace slsdrop {

struct SolverOptions {
  double eps_abs = 1e-8;        // absolute stopping residual
  double eps_rel = 1e-8;        // relative stopping residual
  int max_iterations = 100000;  // iteration cap
  double kkt_tolerance = 1e-6;  // certificate gate reported in SolveReport
  double rho = 1.0;             // initial penalty
  bool adaptive_rho = true;
};

enum class SolveStatus { kConverged, kInfeasible, kIterationLimit };

// Optimality certificate of a column solve. All measures are relative; a
// converged solve must push kkt_residual() below options.kkt_tolerance.
struct SolveReport {
  SolveStatus status = SolveStatus::kIterationLimit;
  double objective = 0.0;        // expected weighted Frobenius cost
  double achieved_lambda = 0.0;  // worst recomputed residual over the family
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double kkt_stationarity = 0.0;    // |sum of adjoint duals|
  double kkt_cone_gap = 0.0;        // dual norm bounds + complementarity
  double kkt_feasibility = 0.0;     // relative residual-budget violation
  double kkt_residual() const {
    return std::max({kkt_stationarity, kkt_cone_gap, kkt_feasibility});
  }
};

// One pattern of the objective expectation with its probability weight.
struct PatternWeight {
  std::vector<int> receivers;
  double probability = 0.0;
};

// Convex program for one subsystem's column: minimize the pmf-weighted
// expected weighted Frobenius norm of the pattern-projected column, subject
// to an l1 budget `lambda` on the achievability residual of every
// constraint-family projection, with rows outside `support` pinned to zero
// and the leading identity block fixed.
struct ColumnProblem {
  const SystemModel* system = nullptr;
  int owner = 0;
  int horizon = 0;
  Matrix q_sqrt;
  Matrix r_sqrt;
  std::vector<PatternWeight> objective_family;
  std::vector<std::vector<int>> constraint_family;
  std::vector<int> support;  // sorted subsystem indices, contains owner
  double lambda = 0.5;
  SolverOptions options;
};

struct ColumnSolution {
  ColumnResponse column;
  SolveReport report;
};

// Operator-splitting solver for ColumnProblem. The per-problem factorization
// does not depend on lambda, so one instance can be reused (and warm-started)
// across a lambda line search.
class ColumnAdmm {
 public:
  explicit ColumnAdmm(const ColumnProblem& problem);
  ~ColumnAdmm();
  ColumnAdmm(ColumnAdmm&&) noexcept;
  ColumnAdmm& operator=(ColumnAdmm&&) noexcept;

  // Solves at the given residual budget, warm-starting from the last call.
  ColumnSolution solve(double lambda);

  // Smallest achievable worst-case residual over the constraint family
  // (upper bound from a convergent min-max solve); any lambda above it is
  // feasible. Cached after the first call.
  double min_residual();

  // Residual of each constraint-family pattern at the min_residual() point;
  // the argmax names the pattern that blocks feasibility.
  const std::vector<double>& min_residual_by_pattern();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// One-shot convenience wrappers.
ColumnSolution solve_column(const ColumnProblem& problem);
double min_achievable_residual(const ColumnProblem& problem);

}  // namespace slsdrop
