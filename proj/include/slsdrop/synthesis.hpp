#pragma once

#include <functional>
#include <vector>

#include "slsdrop/dropout.hpp"
#include "slsdrop/response.hpp"
#include "slsdrop/solver.hpp"
#include "slsdrop/system_model.hpp"

namespace slsdrop {

enum class ControllerMode { kOffline, kOnline };

// Result of re-deriving every per-pattern residual of a bank from scratch.
struct CertificationRecord {
  bool certified = false;
  double worst_residual = 0.0;
  int worst_subsystem = -1;
  int worst_pattern = -1;
  double margin = 1e-9;  // residuals must stay below 1 - margin
};

// A complete dropout-aware controller: one column per subsystem (offline) or
// one column per subsystem and communication pattern (online), together with
// the pattern distribution they were designed for.  The bank carries no plant
// matrices; certification and simulation take the plant separately.
struct ControllerBank {
  ControllerMode mode = ControllerMode::kOffline;
  int horizon = 0;
  BlockPartition state_blocks, input_blocks;
  DropoutDistribution distribution;
  std::vector<ColumnResponse> offline_columns;
  std::vector<std::vector<ColumnResponse>> online_columns;
  double lambda = 0.0;  // contraction budget met by every stored column
  CertificationRecord certification;

  int subsystem_count() const { return distribution.subsystem_count(); }
  Index state_dim() const { return state_blocks.total(); }
  Index input_dim() const { return input_blocks.total(); }
  void validate() const;
};

struct LambdaSearchOptions {
  double lo = 0.01;
  double hi = 0.99;
  double tol = 1e-3;
  double floor_margin = 1e-3;  // offset above the feasibility floor
  int max_evals = 64;
};

struct LambdaSearchResult {
  double lambda = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

// Golden-section minimization over the contraction-budget line.  The
// evaluator returns +infinity for an infeasible budget; because feasibility
// is monotone in the budget, the standard comparison rule still contracts
// the bracket toward the minimizer.  Returns the best evaluated point.
LambdaSearchResult minimize_over_lambda(
    const std::function<double(double)>& value_at,
    const LambdaSearchOptions& options);

struct SynthesisOptions {
  Matrix q_sqrt;  // empty -> identity
  Matrix r_sqrt;  // empty -> identity
  SolverOptions solver;
  LambdaSearchOptions lambda_search;
};

struct SynthesisResult {
  ControllerBank bank;
  double lambda = 0.0;
  double objective = 0.0;  // (n / (1 - lambda)) * worst expected column norm
  double residual_floor = 0.0;
  int evaluations = 0;
};

// One column per subsystem, optimized in expectation over the pattern
// distribution and required to meet the budget under every pattern
// projection.
SynthesisResult synthesize_offline(const SystemModel& system,
                                   const DropoutDistribution& distribution,
                                   int horizon, const SynthesisOptions& options);

// One column per subsystem and pattern, each optimized for its own pattern;
// all columns share a single budget so the bank certifies as a whole.
SynthesisResult synthesize_online(const SystemModel& system,
                                  const DropoutDistribution& distribution,
                                  int horizon, const SynthesisOptions& options);

// Exact full-communication design: per-column equality-constrained least
// squares with a dead-beat endpoint, solved by one dense KKT factorization.
ColumnResponse nominal_column(const SystemModel& system, int owner, int horizon,
                              const Matrix& q_sqrt, const Matrix& r_sqrt);
ControllerBank synthesize_nominal(const SystemModel& system, int horizon,
                                  const Matrix& q_sqrt, const Matrix& r_sqrt);

// Degenerate distribution: every subsystem always reaches everyone.
DropoutDistribution full_communication_distribution(int subsystem_count);

// Recomputes every per-pattern residual of the bank against the plant and
// reports the worst offender.  Does not trust any number stored in the bank.
CertificationRecord certify_bank(const ControllerBank& bank,
                                 const SystemModel& system);

}  // namespace slsdrop
