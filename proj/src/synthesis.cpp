#include "slsdrop/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

#include <Eigen/LU>

#include "slsdrop/errors.hpp"

namespace slsdrop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBudgetCeiling = 1.0 - 1e-6;

Matrix weight_or_identity(const Matrix& given, Index dim, const char* name) {
  if (given.size() == 0) return Matrix::Identity(dim, dim);
  if (given.rows() != dim || given.cols() != dim) {
    throw DimensionError(std::string(name) +
                         " must be square with the matching dimension");
  }
  return given;
}

// Flat list of per-column programs plus the grouping used for the consensus
// objective: the search value is max over groups of the weighted member sum.
struct BankPrograms {
  std::vector<ColumnProblem> problems;
  std::vector<std::vector<std::pair<double, std::size_t>>> groups;
};

BankPrograms offline_programs(const SystemModel& sys,
                              const DropoutDistribution& dist, int horizon,
                              const Matrix& q_sqrt, const Matrix& r_sqrt,
                              const SolverOptions& solver_opts) {
  BankPrograms out;
  const int count = dist.subsystem_count();
  for (int i = 0; i < count; ++i) {
    ColumnProblem prob;
    prob.system = &sys;
    prob.owner = i;
    prob.horizon = horizon;
    prob.q_sqrt = q_sqrt;
    prob.r_sqrt = r_sqrt;
    prob.options = solver_opts;
    std::set<int> support;
    for (const auto& entry : dist.support_of(i)) {
      prob.objective_family.push_back({entry.receivers, entry.probability});
      prob.constraint_family.push_back(entry.receivers);
      support.insert(entry.receivers.begin(), entry.receivers.end());
    }
    prob.support.assign(support.begin(), support.end());
    out.groups.push_back({{1.0, out.problems.size()}});
    out.problems.push_back(std::move(prob));
  }
  return out;
}

BankPrograms online_programs(const SystemModel& sys,
                             const DropoutDistribution& dist, int horizon,
                             const Matrix& q_sqrt, const Matrix& r_sqrt,
                             const SolverOptions& solver_opts) {
  BankPrograms out;
  const int count = dist.subsystem_count();
  for (int i = 0; i < count; ++i) {
    std::vector<std::pair<double, std::size_t>> group;
    for (const auto& entry : dist.support_of(i)) {
      ColumnProblem prob;
      prob.system = &sys;
      prob.owner = i;
      prob.horizon = horizon;
      prob.q_sqrt = q_sqrt;
      prob.r_sqrt = r_sqrt;
      prob.options = solver_opts;
      prob.objective_family.push_back({entry.receivers, entry.probability});
      prob.constraint_family.push_back(entry.receivers);
      prob.support = entry.receivers;
      group.emplace_back(1.0, out.problems.size());
      out.problems.push_back(std::move(prob));
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

struct BankSearchOutcome {
  double lambda = 0.0;
  double objective = 0.0;
  double residual_floor = 0.0;
  int evaluations = 0;
  std::vector<ColumnSolution> solutions;  // parallel to the flat problem list
};

BankSearchOutcome search_bank(const BankPrograms& programs, Index state_dim,
                              LambdaSearchOptions search) {
  std::vector<ColumnAdmm> solvers;
  solvers.reserve(programs.problems.size());
  for (const auto& prob : programs.problems) solvers.emplace_back(prob);

  double floor = 0.0;
  for (auto& solver : solvers) floor = std::max(floor, solver.min_residual());

  search.hi = std::min(search.hi, kBudgetCeiling);
  search.lo = std::max(search.lo, floor + search.floor_margin);
  if (search.lo >= search.hi) {
    throw InfeasibleError(
        "no contraction budget below one is achievable (floor " +
        std::to_string(floor) + ")");
  }

  const double scale = static_cast<double>(state_dim);
  std::vector<ColumnSolution> best;
  double best_value = kInf;
  auto evaluate = [&](double lambda) {
    std::vector<ColumnSolution> current;
    current.reserve(solvers.size());
    for (auto& solver : solvers) {
      current.push_back(solver.solve(lambda));
      if (current.back().report.status == SolveStatus::kInfeasible) {
        return kInf;
      }
    }
    double worst_group = 0.0;
    for (const auto& group : programs.groups) {
      double total = 0.0;
      for (const auto& [weight, idx] : group) {
        total += weight * current[idx].report.objective;
      }
      worst_group = std::max(worst_group, total);
    }
    const double value = scale / (1.0 - lambda) * worst_group;
    if (value < best_value) {
      best_value = value;
      best = std::move(current);
    }
    return value;
  };

  const LambdaSearchResult result = minimize_over_lambda(evaluate, search);
  if (!std::isfinite(result.value) || best.empty()) {
    throw InfeasibleError(
        "every evaluated contraction budget was infeasible (floor " +
        std::to_string(floor) + ")");
  }

  BankSearchOutcome outcome;
  outcome.lambda = result.lambda;
  outcome.objective = result.value;
  outcome.residual_floor = floor;
  outcome.evaluations = result.evaluations;
  outcome.solutions = std::move(best);
  return outcome;
}

ControllerBank bank_shell(const SystemModel& sys,
                          const DropoutDistribution& dist, int horizon,
                          ControllerMode mode) {
  ControllerBank bank;
  bank.mode = mode;
  bank.horizon = horizon;
  bank.state_blocks = sys.state_blocks;
  bank.input_blocks = sys.input_blocks;
  bank.distribution = dist;
  return bank;
}

}  // namespace

// ---------------------------------------------------------------------------
// Budget line search
// ---------------------------------------------------------------------------

LambdaSearchResult minimize_over_lambda(
    const std::function<double(double)>& value_at,
    const LambdaSearchOptions& options) {
  double a = options.lo;
  double b = std::min(options.hi, kBudgetCeiling);
  if (!(a > 0.0) || !(a < b)) {
    throw DimensionError("minimize_over_lambda: need 0 < lo < hi < 1");
  }
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);

  LambdaSearchResult result;
  result.value = kInf;
  auto probe = [&](double x) {
    const double v = value_at(x);
    ++result.evaluations;
    if (v < result.value) {
      result.value = v;
      result.lambda = x;
    }
    return v;
  };

  double x1 = b - ratio * (b - a);
  double x2 = a + ratio * (b - a);
  double f1 = probe(x1);
  double f2 = probe(x2);
  while (b - a > options.tol && result.evaluations < options.max_evals) {
    if (f1 >= f2) {  // also taken when both are infeasible: move right
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + ratio * (b - a);
      f2 = probe(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - ratio * (b - a);
      f1 = probe(x1);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Bank synthesis
// ---------------------------------------------------------------------------

SynthesisResult synthesize_offline(const SystemModel& system,
                                   const DropoutDistribution& distribution,
                                   int horizon,
                                   const SynthesisOptions& options) {
  system.validate();
  if (distribution.subsystem_count() != system.subsystem_count()) {
    throw DimensionError(
        "synthesize_offline: distribution does not match the plant");
  }
  const Matrix q_sqrt =
      weight_or_identity(options.q_sqrt, system.state_dim(), "q_sqrt");
  const Matrix r_sqrt =
      weight_or_identity(options.r_sqrt, system.input_dim(), "r_sqrt");

  const BankPrograms programs = offline_programs(
      system, distribution, horizon, q_sqrt, r_sqrt, options.solver);
  BankSearchOutcome outcome =
      search_bank(programs, system.state_dim(), options.lambda_search);

  ControllerBank bank = bank_shell(system, distribution, horizon,
                                   ControllerMode::kOffline);
  bank.lambda = outcome.lambda;
  for (auto& solution : outcome.solutions) {
    bank.offline_columns.push_back(std::move(solution.column));
  }
  bank.certification = certify_bank(bank, system);

  SynthesisResult result;
  result.bank = std::move(bank);
  result.lambda = outcome.lambda;
  result.objective = outcome.objective;
  result.residual_floor = outcome.residual_floor;
  result.evaluations = outcome.evaluations;
  return result;
}

SynthesisResult synthesize_online(const SystemModel& system,
                                  const DropoutDistribution& distribution,
                                  int horizon,
                                  const SynthesisOptions& options) {
  system.validate();
  if (distribution.subsystem_count() != system.subsystem_count()) {
    throw DimensionError(
        "synthesize_online: distribution does not match the plant");
  }
  const Matrix q_sqrt =
      weight_or_identity(options.q_sqrt, system.state_dim(), "q_sqrt");
  const Matrix r_sqrt =
      weight_or_identity(options.r_sqrt, system.input_dim(), "r_sqrt");

  const BankPrograms programs = online_programs(
      system, distribution, horizon, q_sqrt, r_sqrt, options.solver);
  BankSearchOutcome outcome =
      search_bank(programs, system.state_dim(), options.lambda_search);

  ControllerBank bank =
      bank_shell(system, distribution, horizon, ControllerMode::kOnline);
  bank.lambda = outcome.lambda;
  std::size_t flat = 0;
  for (int i = 0; i < distribution.subsystem_count(); ++i) {
    std::vector<ColumnResponse> per_pattern;
    for (std::size_t k = 0; k < distribution.support_of(i).size(); ++k) {
      per_pattern.push_back(std::move(outcome.solutions[flat++].column));
    }
    bank.online_columns.push_back(std::move(per_pattern));
  }
  bank.certification = certify_bank(bank, system);

  SynthesisResult result;
  result.bank = std::move(bank);
  result.lambda = outcome.lambda;
  result.objective = outcome.objective;
  result.residual_floor = outcome.residual_floor;
  result.evaluations = outcome.evaluations;
  return result;
}

// ---------------------------------------------------------------------------
// Exact full-communication design
// ---------------------------------------------------------------------------

namespace {

// Shared KKT factorization for the dead-beat least-squares design; the
// matrix depends only on the plant and weights, so one factorization serves
// every column.
struct NominalSolver {
  Index n, p, mz, x_total;
  int horizon;
  Eigen::PartialPivLU<Matrix> kkt;
  Matrix solutions;  // mz x n, one column per unit initial condition

  NominalSolver(const SystemModel& sys, int T, const Matrix& q_sqrt,
                const Matrix& r_sqrt)
      : n(sys.state_dim()), p(sys.input_dim()), horizon(T) {
    if (T < 1) throw DimensionError("nominal_column: horizon must be >= 1");
    x_total = static_cast<Index>(T - 1) * n;
    mz = x_total + static_cast<Index>(T) * p;
    const Index mc = static_cast<Index>(T) * n;

    Matrix big = Matrix::Zero(mz + mc, mz + mc);
    const Matrix qq = q_sqrt.transpose() * q_sqrt;
    const Matrix rr = r_sqrt.transpose() * r_sqrt;
    for (int k = 2; k <= T; ++k) {
      big.block(x_col(k), x_col(k), n, n) = qq;
    }
    for (int k = 1; k <= T; ++k) {
      big.block(u_col(k), u_col(k), p, p) = rr;
    }
    for (int k = 1; k <= T; ++k) {
      const Index row = mz + static_cast<Index>(k - 1) * n;
      if (k + 1 <= T) {
        big.block(row, x_col(k + 1), n, n) = Matrix::Identity(n, n);
      }
      if (k >= 2) big.block(row, x_col(k), n, n) = -sys.A;
      big.block(row, u_col(k), n, p) = -sys.B;
    }
    big.block(0, mz, mz, mc) = big.block(mz, 0, mc, mz).transpose();
    kkt.compute(big);

    Matrix rhs = Matrix::Zero(mz + mc, n);
    rhs.block(mz, 0, n, n) = sys.A;  // step-one balance for each unit state
    solutions = kkt.solve(rhs).topRows(mz);
  }

  Index x_col(int spectral) const {
    return static_cast<Index>(spectral - 2) * n;
  }
  Index u_col(int spectral) const {
    return x_total + static_cast<Index>(spectral - 1) * p;
  }

  ColumnResponse column_for(const SystemModel& sys, int owner) const {
    ColumnResponse col;
    col.owner = owner;
    col.horizon = horizon;
    col.support.resize(static_cast<std::size_t>(sys.subsystem_count()));
    for (int s = 0; s < sys.subsystem_count(); ++s) {
      col.support[static_cast<std::size_t>(s)] = s;
    }
    const Index start = sys.state_blocks.start(owner);
    const Index w = sys.state_blocks.size(owner);
    const Matrix block = solutions.middleCols(start, w);
    col.phi_x.resize(static_cast<std::size_t>(horizon));
    col.phi_u.resize(static_cast<std::size_t>(horizon));
    col.phi_x[0] = identity_block_column(sys, owner);
    for (int k = 2; k <= horizon; ++k) {
      col.phi_x[static_cast<std::size_t>(k - 1)] =
          block.middleRows(x_col(k), n);
    }
    for (int k = 1; k <= horizon; ++k) {
      col.phi_u[static_cast<std::size_t>(k - 1)] =
          block.middleRows(u_col(k), p);
    }
    return col;
  }
};

}  // namespace

ColumnResponse nominal_column(const SystemModel& system, int owner, int horizon,
                              const Matrix& q_sqrt, const Matrix& r_sqrt) {
  system.validate();
  if (owner < 0 || owner >= system.subsystem_count()) {
    throw DimensionError("nominal_column: owner out of range");
  }
  const Matrix qh =
      weight_or_identity(q_sqrt, system.state_dim(), "q_sqrt");
  const Matrix rh =
      weight_or_identity(r_sqrt, system.input_dim(), "r_sqrt");
  const NominalSolver solver(system, horizon, qh, rh);
  return solver.column_for(system, owner);
}

ControllerBank synthesize_nominal(const SystemModel& system, int horizon,
                                  const Matrix& q_sqrt, const Matrix& r_sqrt) {
  system.validate();
  const Matrix qh =
      weight_or_identity(q_sqrt, system.state_dim(), "q_sqrt");
  const Matrix rh =
      weight_or_identity(r_sqrt, system.input_dim(), "r_sqrt");
  const NominalSolver solver(system, horizon, qh, rh);

  ControllerBank bank = bank_shell(
      system, full_communication_distribution(system.subsystem_count()),
      horizon, ControllerMode::kOffline);
  bank.lambda = 0.0;
  for (int i = 0; i < system.subsystem_count(); ++i) {
    bank.offline_columns.push_back(solver.column_for(system, i));
  }
  bank.certification = certify_bank(bank, system);
  return bank;
}

DropoutDistribution full_communication_distribution(int subsystem_count) {
  if (subsystem_count < 1) {
    throw DimensionError(
        "full_communication_distribution: need at least one subsystem");
  }
  std::vector<int> everyone(static_cast<std::size_t>(subsystem_count));
  for (int i = 0; i < subsystem_count; ++i) {
    everyone[static_cast<std::size_t>(i)] = i;
  }
  DropoutDistribution dist;
  dist.subsystems.assign(static_cast<std::size_t>(subsystem_count),
                         {PatternEntry{everyone, 1.0}});
  return dist;
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

namespace {

void check_bank_column(const ColumnResponse& col, int owner, int horizon,
                       const BlockPartition& state_blocks,
                       const BlockPartition& input_blocks) {
  if (col.owner != owner || col.horizon != horizon) {
    throw CertificationError("bank: column metadata is inconsistent");
  }
  const Index n = state_blocks.total();
  const Index p = input_blocks.total();
  const Index w = state_blocks.size(owner);
  if (static_cast<int>(col.phi_x.size()) != horizon ||
      static_cast<int>(col.phi_u.size()) != horizon) {
    throw CertificationError("bank: column has the wrong number of taps");
  }
  for (const auto& block : col.phi_x) {
    if (block.rows() != n || block.cols() != w) {
      throw CertificationError("bank: state block dimension mismatch");
    }
  }
  for (const auto& block : col.phi_u) {
    if (block.rows() != p || block.cols() != w) {
      throw CertificationError("bank: input block dimension mismatch");
    }
  }
  Matrix expected = Matrix::Zero(n, w);
  expected.middleRows(state_blocks.start(owner), w) = Matrix::Identity(w, w);
  if (col.phi_x[0] != expected) {
    throw CertificationError(
        "bank: the unit-lag state block must be the exact identity");
  }
  if (!std::is_sorted(col.support.begin(), col.support.end()) ||
      !std::binary_search(col.support.begin(), col.support.end(), owner)) {
    throw CertificationError(
        "bank: column support must be sorted and contain the owner");
  }
}

}  // namespace

void ControllerBank::validate() const {
  if (horizon < 1) throw CertificationError("bank: horizon must be >= 1");
  const int count = distribution.subsystem_count();
  if (count < 1) throw CertificationError("bank: empty pattern distribution");
  if (state_blocks.count() != count || input_blocks.count() != count) {
    throw CertificationError(
        "bank: block partitions do not match the subsystem count");
  }
  state_blocks.validate(state_blocks.total(), "bank state partition");
  input_blocks.validate(input_blocks.total(), "bank input partition");
  if (mode == ControllerMode::kOffline) {
    if (static_cast<int>(offline_columns.size()) != count) {
      throw CertificationError("bank: expected one column per subsystem");
    }
    for (int i = 0; i < count; ++i) {
      check_bank_column(offline_columns[static_cast<std::size_t>(i)], i,
                        horizon, state_blocks, input_blocks);
    }
  } else {
    if (static_cast<int>(online_columns.size()) != count) {
      throw CertificationError(
          "bank: expected one column list per subsystem");
    }
    for (int i = 0; i < count; ++i) {
      const auto& per_pattern = online_columns[static_cast<std::size_t>(i)];
      if (per_pattern.size() != distribution.support_of(i).size()) {
        throw CertificationError(
            "bank: expected one column per communication pattern");
      }
      for (const auto& col : per_pattern) {
        check_bank_column(col, i, horizon, state_blocks, input_blocks);
      }
    }
  }
}

CertificationRecord certify_bank(const ControllerBank& bank,
                                 const SystemModel& system) {
  system.validate();
  bank.validate();
  if (!(bank.state_blocks == system.state_blocks) ||
      !(bank.input_blocks == system.input_blocks)) {
    throw CertificationError("bank does not match the plant partitions");
  }
  if (bank.subsystem_count() != system.subsystem_count()) {
    throw CertificationError("bank does not match the plant dimensions");
  }

  CertificationRecord record;
  record.margin = 1e-9;
  for (int i = 0; i < bank.subsystem_count(); ++i) {
    const auto& entries = bank.distribution.support_of(i);
    for (std::size_t k = 0; k < entries.size(); ++k) {
      ColumnResponse col;
      if (bank.mode == ControllerMode::kOffline) {
        const auto& base = bank.offline_columns[static_cast<std::size_t>(i)];
        if (base.owner != i || base.horizon != bank.horizon) {
          throw CertificationError("bank: column metadata is inconsistent");
        }
        col = project(base, entries[k].receivers, system);
      } else {
        col = bank.online_columns[static_cast<std::size_t>(i)][k];
        if (col.owner != i || col.horizon != bank.horizon) {
          throw CertificationError("bank: column metadata is inconsistent");
        }
      }
      validate_column(col, system);
      const double residual =
          l1_column_norm(achievability_residual(col, system));
      if (residual > record.worst_residual) {
        record.worst_residual = residual;
        record.worst_subsystem = i;
        record.worst_pattern = static_cast<int>(k);
      }
    }
  }
  record.certified = record.worst_residual < 1.0 - record.margin;
  return record;
}

}  // namespace slsdrop
