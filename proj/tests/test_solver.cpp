#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracle.hpp"
#include "slsdrop/rng.hpp"
#include "slsdrop/solver.hpp"

using namespace slsdrop;
using slsdrop::testing::dense_program;
using slsdrop::testing::l1_residual_at;
using slsdrop::testing::least_squares_start;
using slsdrop::testing::solve_reference;

namespace {

SystemModel scalar_system(const Matrix& a, const Matrix& b) {
  SystemModel sys;
  sys.A = a;
  sys.B = b;
  std::vector<Index> state_ones(static_cast<std::size_t>(a.rows()), 1);
  std::vector<Index> input_ones(static_cast<std::size_t>(b.cols()), 1);
  sys.state_blocks = BlockPartition::from_sizes(state_ones);
  sys.input_blocks = BlockPartition::from_sizes(input_ones);
  sys.validate();
  return sys;
}

ColumnProblem base_problem(const SystemModel& sys, int owner, int horizon) {
  ColumnProblem problem;
  problem.system = &sys;
  problem.owner = owner;
  problem.horizon = horizon;
  problem.q_sqrt = Matrix::Identity(sys.state_dim(), sys.state_dim());
  problem.r_sqrt = Matrix::Identity(sys.input_dim(), sys.input_dim());
  for (Index j = 0; j < sys.subsystem_count(); ++j) {
    problem.support.push_back(static_cast<int>(j));
  }
  problem.objective_family = {{problem.support, 1.0}};
  problem.constraint_family = {problem.support};
  return problem;
}

}  // namespace

TEST_CASE("one-step scalar budget solve matches the closed form") {
  // Scalar plant, horizon one: the only decision is the first input tap u.
  // Objective sqrt(1 + u^2), constraint |a + u| <= lambda, so the optimum
  // shrinks u to the near edge of the interval: u* = -(a - lambda).
  const double a = 0.8;
  const double lambda = 0.3;
  const SystemModel sys = scalar_system(Matrix::Constant(1, 1, a),
                                        Matrix::Identity(1, 1));
  ColumnProblem problem = base_problem(sys, 0, 1);
  problem.lambda = lambda;
  const ColumnSolution sol = solve_column(problem);
  CHECK(sol.report.status == SolveStatus::kConverged);
  const double expected = std::sqrt(1.0 + (a - lambda) * (a - lambda));
  CHECK(sol.report.objective == doctest::Approx(expected).epsilon(1e-6));
  CHECK(sol.report.achieved_lambda == doctest::Approx(lambda).epsilon(1e-5));
  CHECK(sol.report.kkt_residual() <= problem.options.kkt_tolerance);
  CHECK(sol.column.phi_u[0](0, 0) == doctest::Approx(-(a - lambda)).epsilon(1e-5));
}

TEST_CASE("input-free scalar plant has residual floor |a|^T") {
  // With no usable input the best the column can do is follow the natural
  // rollout a^(k-1) and absorb the truncated tail |a|^T in the final tap.
  const double a = 0.5;
  const int horizon = 4;
  const SystemModel sys = scalar_system(Matrix::Constant(1, 1, a),
                                        Matrix::Zero(1, 1));
  ColumnProblem problem = base_problem(sys, 0, horizon);
  ColumnAdmm solver(problem);
  CHECK(solver.min_residual() ==
        doctest::Approx(std::pow(a, horizon)).epsilon(1e-3));

  ColumnProblem feasible = problem;
  feasible.lambda = 0.1;  // above the floor 0.0625
  const ColumnSolution good = solve_column(feasible);
  CHECK(good.report.status == SolveStatus::kConverged);

  ColumnProblem impossible = problem;
  impossible.lambda = 0.01;  // below the floor
  const ColumnSolution bad = solve_column(impossible);
  CHECK(bad.report.status == SolveStatus::kInfeasible);
}

TEST_CASE("local-only pattern floor equals the broadcast coupling") {
  // Projecting away subsystem 1 leaves the constant coupling A(1,0) in the
  // first residual tap with nothing to cancel it (B is diagonal), while all
  // later taps can be zeroed through the owner's own input.
  Matrix a(2, 2);
  a << 0.9, 0.2, -0.35, 0.8;
  const SystemModel sys = scalar_system(a, Matrix::Identity(2, 2));
  ColumnProblem problem = base_problem(sys, 0, 4);
  problem.constraint_family = {{0}, {0, 1}};
  problem.objective_family = {{{0}, 0.5}, {{0, 1}, 0.5}};
  ColumnAdmm solver(problem);
  CHECK(solver.min_residual() == doctest::Approx(0.35).epsilon(1e-3));
  // The min-max solve only pins the worst pattern; the other residual merely
  // cannot exceed it, and the argmax names the local-only pattern as blocker.
  const std::vector<double>& per_pattern = solver.min_residual_by_pattern();
  REQUIRE(per_pattern.size() == 2);
  CHECK(per_pattern[0] == doctest::Approx(0.35).epsilon(1e-3));
  CHECK(per_pattern[1] <= per_pattern[0] + 1e-6);
}

TEST_CASE("solver matches the interior-point reference on random programs") {
  SeedStream stream(2718);
  int solved = 0;
  int attempts = 0;
  while (solved < 20 && attempts < 60) {
    ++attempts;
    const int horizon = 2 + static_cast<int>(stream.next_u64() % 3);  // 2..4
    Matrix a(2, 2);
    for (Index r = 0; r < 2; ++r) {
      for (Index c = 0; c < 2; ++c) a(r, c) = 0.5 * stream.next_gaussian();
    }
    Matrix b = Matrix::Identity(2, 2);
    for (Index r = 0; r < 2; ++r) {
      for (Index c = 0; c < 2; ++c) b(r, c) += 0.3 * stream.next_gaussian();
    }
    const SystemModel sys = scalar_system(a, b);
    const int owner = attempts % 2;
    ColumnProblem problem = base_problem(sys, owner, horizon);
    const double w = 0.2 + 0.8 * stream.next_unit();
    problem.objective_family = {{{owner}, w}, {{0, 1}, 1.0 - w}};
    problem.constraint_family = {{owner}, {0, 1}};

    const slsdrop::testing::DenseColumnProgram dense = dense_program(problem);
    const Vector start = least_squares_start(dense);
    const double base_res = l1_residual_at(dense, start);
    const double lambda = 2.0 * base_res + 0.05;
    if (lambda >= 0.85) continue;  // keep budgets inside the solver's domain
    const auto reference = solve_reference(dense, lambda);
    if (!reference.feasible_start) continue;

    problem.lambda = lambda;
    const ColumnSolution sol = solve_column(problem);
    REQUIRE(sol.report.status == SolveStatus::kConverged);
    CHECK(sol.report.kkt_residual() <= problem.options.kkt_tolerance);
    const double rel = std::abs(sol.report.objective - reference.objective) /
                       std::max(1.0, std::abs(reference.objective));
    CAPTURE(attempts);
    CAPTURE(lambda);
    CAPTURE(sol.report.objective);
    CAPTURE(reference.objective);
    CHECK(rel <= 1e-4);
    ++solved;
  }
  CHECK(solved == 20);
}

TEST_CASE("objective is monotone in the residual budget") {
  Matrix a(2, 2);
  a << 1.1, 0.4, 0.3, 0.9;
  const SystemModel sys = scalar_system(a, Matrix::Identity(2, 2));
  ColumnProblem problem = base_problem(sys, 0, 5);
  problem.constraint_family = {{0}, {0, 1}};
  problem.objective_family = {{{0}, 0.5}, {{0, 1}, 0.5}};
  ColumnAdmm solver(problem);
  const double floor = solver.min_residual();
  REQUIRE(floor < 0.5);
  double previous = -1.0;
  bool first = true;
  for (double lambda : {floor + 0.01, floor + 0.1, floor + 0.3}) {
    const ColumnSolution sol = solver.solve(lambda);
    REQUIRE(sol.report.status == SolveStatus::kConverged);
    if (!first) CHECK(sol.report.objective <= previous + 1e-6);
    previous = sol.report.objective;
    first = false;
  }
}

TEST_CASE("extra constraint patterns never shrink the floor") {
  Matrix a(2, 2);
  a << 0.9, 0.25, -0.4, 0.7;
  const SystemModel sys = scalar_system(a, Matrix::Identity(2, 2));
  ColumnProblem loose = base_problem(sys, 0, 4);
  loose.constraint_family = {{0, 1}};
  ColumnProblem tight = loose;
  tight.constraint_family = {{0, 1}, {0}};
  const double floor_loose = min_achievable_residual(loose);
  const double floor_tight = min_achievable_residual(tight);
  CHECK(floor_tight >= floor_loose - 1e-8);

  loose.lambda = tight.lambda = 0.5;
  const double obj_loose = solve_column(loose).report.objective;
  const double obj_tight = solve_column(tight).report.objective;
  CHECK(obj_tight >= obj_loose - 1e-6);
}

TEST_CASE("a reused solver instance matches one-shot solves") {
  Matrix a(2, 2);
  a << 1.0, 0.3, 0.2, 0.8;
  const SystemModel sys = scalar_system(a, Matrix::Identity(2, 2));
  ColumnProblem problem = base_problem(sys, 1, 4);
  problem.constraint_family = {{1}, {0, 1}};
  problem.objective_family = {{{1}, 0.4}, {{0, 1}, 0.6}};

  ColumnAdmm warm(problem);
  const double first = warm.solve(0.6).report.objective;
  warm.solve(0.9);
  const double again = warm.solve(0.6).report.objective;
  CHECK(again == doctest::Approx(first).epsilon(1e-6));

  problem.lambda = 0.6;
  const double cold = solve_column(problem).report.objective;
  CHECK(cold == doctest::Approx(first).epsilon(1e-5));
}

TEST_CASE("problem validation rejects malformed inputs") {
  Matrix a = Matrix::Identity(2, 2);
  const SystemModel sys = scalar_system(a, Matrix::Identity(2, 2));

  ColumnProblem no_owner = base_problem(sys, 0, 3);
  no_owner.support = {1};
  CHECK_THROWS_AS(ColumnAdmm{no_owner}, Error);

  ColumnProblem no_objective = base_problem(sys, 0, 3);
  no_objective.objective_family.clear();
  CHECK_THROWS_AS(ColumnAdmm{no_objective}, Error);

  ColumnProblem no_constraints = base_problem(sys, 0, 3);
  no_constraints.constraint_family.clear();
  CHECK_THROWS_AS(ColumnAdmm{no_constraints}, Error);

  ColumnProblem bad_horizon = base_problem(sys, 0, 0);
  CHECK_THROWS_AS(ColumnAdmm{bad_horizon}, Error);
}
