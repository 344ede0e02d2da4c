#include "slsdrop/runtime.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "slsdrop/errors.hpp"

namespace slsdrop {

namespace {

constexpr double kDivergenceGuard = 1e12;

Matrix cost_or_identity(const Matrix& given, Index dim, const char* name) {
  if (given.size() == 0) return Matrix::Identity(dim, dim);
  if (given.rows() != dim || given.cols() != dim) {
    throw DimensionError(std::string(name) +
                         " must be square with the matching dimension");
  }
  return given;
}

}  // namespace

RuntimeColumns prepare_runtime(const ControllerBank& bank,
                               const SystemModel& system) {
  bank.validate();
  if (!(bank.state_blocks == system.state_blocks) ||
      !(bank.input_blocks == system.input_blocks)) {
    throw DimensionError("prepare_runtime: bank does not match the plant");
  }
  RuntimeColumns runtime;
  for (int i = 0; i < bank.subsystem_count(); ++i) {
    const auto& entries = bank.distribution.support_of(i);
    std::vector<ColumnResponse> per_pattern;
    per_pattern.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (bank.mode == ControllerMode::kOffline) {
        per_pattern.push_back(
            project(bank.offline_columns[static_cast<std::size_t>(i)],
                    entries[k].receivers, system));
      } else {
        per_pattern.push_back(
            bank.online_columns[static_cast<std::size_t>(i)][k]);
      }
    }
    runtime.columns.push_back(std::move(per_pattern));
  }
  return runtime;
}

DropoutController::DropoutController(const ControllerBank& bank,
                                     const SystemModel& system)
    : state_blocks_(bank.state_blocks),
      input_blocks_(bank.input_blocks),
      horizon_(bank.horizon),
      runtime_(prepare_runtime(bank, system)) {
  for (const auto& per_pattern : runtime_.columns) {
    entry_counts_.push_back(per_pattern.size());
  }
  last_estimate_ = Vector::Zero(state_blocks_.total());
}

void DropoutController::reset() {
  history_.clear();
  last_estimate_.setZero();
}

Vector DropoutController::step(const Vector& state,
                               const DropoutPattern& pattern) {
  const Index n = state_blocks_.total();
  const Index p = input_blocks_.total();
  const int count = static_cast<int>(entry_counts_.size());
  if (state.size() != n) {
    throw RolloutError("controller step: state dimension mismatch");
  }
  if (static_cast<int>(pattern.entry.size()) != count) {
    throw RolloutError("controller step: pattern size mismatch");
  }
  for (int i = 0; i < count; ++i) {
    const int e = pattern.entry[static_cast<std::size_t>(i)];
    if (e < 0 ||
        e >= static_cast<int>(entry_counts_[static_cast<std::size_t>(i)])) {
      throw RolloutError("controller step: pattern entry " +
                         std::to_string(e) + " unknown to subsystem " +
                         std::to_string(i));
    }
  }

  // Reconstruct this step's disturbance: the unit-lag response block is the
  // identity, so the fresh estimate is the state minus what older estimates
  // still explain.
  Vector estimate = state;
  int lag = 1;
  for (const Born& born : history_) {
    const std::size_t tap = static_cast<std::size_t>(lag);  // spectral lag+1
    for (int i = 0; i < count; ++i) {
      const auto& col =
          runtime_.columns[static_cast<std::size_t>(i)]
                          [static_cast<std::size_t>(
                              born.pattern.entry[static_cast<std::size_t>(i)])];
      estimate.noalias() -=
          col.phi_x[tap] * born.estimate.segment(state_blocks_.start(i),
                                                 state_blocks_.size(i));
    }
    ++lag;
  }

  // Play every live estimate through its birth-pattern column.
  Vector input = Vector::Zero(p);
  auto add_input = [&](const Vector& est, const DropoutPattern& pat,
                       std::size_t tap) {
    for (int i = 0; i < count; ++i) {
      const auto& col =
          runtime_.columns[static_cast<std::size_t>(i)]
                          [static_cast<std::size_t>(
                              pat.entry[static_cast<std::size_t>(i)])];
      input.noalias() += col.phi_u[tap] * est.segment(state_blocks_.start(i),
                                                      state_blocks_.size(i));
    }
  };
  add_input(estimate, pattern, 0);
  lag = 1;
  for (const Born& born : history_) {
    add_input(born.estimate, born.pattern, static_cast<std::size_t>(lag));
    ++lag;
  }

  history_.push_front(Born{estimate, pattern});
  while (static_cast<int>(history_.size()) > horizon_ - 1) {
    history_.pop_back();
  }
  last_estimate_ = std::move(estimate);
  return input;
}

PatternSource random_pattern_source(const DropoutDistribution& distribution,
                                    SeedStream stream) {
  return [distribution, stream](int) mutable {
    return sample_pattern(distribution, stream);
  };
}

PatternSource fixed_pattern_source(DropoutPattern pattern) {
  return [pattern](int) { return pattern; };
}

PatternSource round_robin_pattern_source(
    const DropoutDistribution& distribution) {
  std::vector<int> counts;
  for (int i = 0; i < distribution.subsystem_count(); ++i) {
    counts.push_back(static_cast<int>(distribution.support_of(i).size()));
  }
  return [counts](int step) {
    DropoutPattern pattern;
    pattern.entry.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      pattern.entry[i] = step % counts[i];
    }
    return pattern;
  };
}

Trace rollout(const ControllerBank& bank, const SystemModel& system,
              const RolloutOptions& options, SeedStream noise_stream,
              const PatternSource& pattern_source) {
  system.validate();
  if (!bank.certification.certified) {
    throw RolloutError("refusing to simulate an uncertified bank");
  }
  if (options.steps < 0) {
    throw RolloutError("rollout: steps must be nonnegative");
  }
  const Index n = system.state_dim();
  const Index p = system.input_dim();
  const Matrix q = cost_or_identity(options.q, n, "state cost");
  const Matrix r = cost_or_identity(options.r, p, "input cost");

  Vector x0 = options.initial_state;
  if (x0.size() == 0) x0 = Vector::Zero(n);
  if (x0.size() != n) {
    throw RolloutError("rollout: initial state dimension mismatch");
  }

  // Disturbances are drawn before any pattern so that the same stream yields
  // the same plant noise no matter which controller is being evaluated.
  Matrix noise = Matrix::Zero(n, std::max(options.steps, 1));
  for (int t = 0; t < options.steps; ++t) {
    for (Index j = 0; j < n; ++j) {
      noise(j, t) = options.noise_std * noise_stream.next_gaussian();
    }
  }

  DropoutController controller(bank, system);
  Trace trace;
  trace.states = Matrix::Zero(n, options.steps + 1);
  trace.inputs = Matrix::Zero(p, options.steps + 1);
  trace.estimates = Matrix::Zero(n, options.steps + 1);
  trace.patterns.reserve(static_cast<std::size_t>(options.steps) + 1);
  trace.step_cost.resize(static_cast<std::size_t>(options.steps) + 1);

  Vector x = x0;
  for (int t = 0; t <= options.steps; ++t) {
    if (x.lpNorm<Eigen::Infinity>() > kDivergenceGuard) {
      throw RolloutError("rollout diverged at step " + std::to_string(t));
    }
    const DropoutPattern pattern = pattern_source(t);
    const Vector u = controller.step(x, pattern);
    trace.states.col(t) = x;
    trace.inputs.col(t) = u;
    trace.estimates.col(t) = controller.last_estimate();
    trace.patterns.push_back(pattern);
    const double cost = x.dot(q * x) + u.dot(r * u);
    trace.step_cost[static_cast<std::size_t>(t)] = cost;
    trace.total_cost += cost;
    if (t < options.steps) {
      x = system.A * x + system.B * u + noise.col(t);
    }
  }
  return trace;
}

}  // namespace slsdrop
