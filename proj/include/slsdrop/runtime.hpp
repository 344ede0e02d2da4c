#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "slsdrop/dropout.hpp"
#include "slsdrop/rng.hpp"
#include "slsdrop/synthesis.hpp"
#include "slsdrop/system_model.hpp"

namespace slsdrop {

// Columns as applied at run time: entry [i][k] is the response with which
// subsystem i's disturbance estimate acts when the estimate was born while
// pattern entry k was in effect.  For a shared-column bank the entries are
// the pattern projections of the one stored column; for a per-pattern bank
// they are the stored columns themselves.
struct RuntimeColumns {
  std::vector<std::vector<ColumnResponse>> columns;
};

RuntimeColumns prepare_runtime(const ControllerBank& bank,
                               const SystemModel& system);

// State-feedback controller that reconstructs disturbances online and plays
// them back through the bank's finite impulse responses.  Each estimate is
// tagged with the communication pattern sensed at its birth and keeps using
// the matching column for its whole lifetime.
class DropoutController {
 public:
  DropoutController(const ControllerBank& bank, const SystemModel& system);

  // Consumes the measured state and the pattern sensed at this step and
  // returns the control action.
  Vector step(const Vector& state, const DropoutPattern& pattern);

  const Vector& last_estimate() const { return last_estimate_; }
  void reset();

 private:
  BlockPartition state_blocks_, input_blocks_;
  int horizon_ = 0;
  std::vector<std::size_t> entry_counts_;
  RuntimeColumns runtime_;
  struct Born {
    Vector estimate;
    DropoutPattern pattern;
  };
  std::deque<Born> history_;  // front = most recent, at most horizon-1 deep
  Vector last_estimate_;
};

using PatternSource = std::function<DropoutPattern(int step)>;

PatternSource random_pattern_source(const DropoutDistribution& distribution,
                                    SeedStream stream);
PatternSource fixed_pattern_source(DropoutPattern pattern);
// Cycles deterministically through every pattern entry of every subsystem.
PatternSource round_robin_pattern_source(
    const DropoutDistribution& distribution);

struct RolloutOptions {
  int steps = 100;         // number of simulated transitions
  double noise_std = 1.0;  // i.i.d. Gaussian disturbance scale
  Vector initial_state;    // empty -> zero
  Matrix q;                // quadratic state cost, empty -> identity
  Matrix r;                // quadratic input cost, empty -> identity
};

struct Trace {
  Matrix states;     // state_dim x (steps + 1)
  Matrix inputs;     // input_dim x (steps + 1)
  Matrix estimates;  // state_dim x (steps + 1)
  std::vector<DropoutPattern> patterns;  // sensed at each step
  std::vector<double> step_cost;         // x'Qx + u'Ru at each step
  double total_cost = 0.0;
};

// Closed-loop simulation.  The disturbance sequence is pregenerated from the
// stream before any pattern is drawn, so traces are pairable across
// controllers by reusing the same stream and pattern source.  Refuses to run
// a bank whose certification did not pass.
Trace rollout(const ControllerBank& bank, const SystemModel& system,
              const RolloutOptions& options, SeedStream noise_stream,
              const PatternSource& pattern_source);

}  // namespace slsdrop
