#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slsdrop/runtime.hpp"
#include "slsdrop/synthesis.hpp"

namespace slsdrop {

struct ScenarioSpec {
  std::string name;              // defaults to "reach" + the joined values
  std::vector<int> reach_values;  // communication reach drawn uniformly
};
bool operator==(const ScenarioSpec& a, const ScenarioSpec& b);

struct ExperimentConfig {
  std::string plant_preset = "chain10";  // empty when matrices are explicit
  Matrix plant_a, plant_b;
  std::vector<Index> state_sizes, input_sizes;
  int fir_horizon = 20;
  int sim_steps = 100;
  std::vector<std::uint64_t> seeds;  // empty -> 1..10
  double noise_std = 1.0;
  Vector initial_state;  // empty -> zero
  std::vector<ScenarioSpec> scenarios;  // empty -> the three stock mixes
  Matrix state_cost, input_cost;        // empty -> identity
  SolverOptions solver;
  LambdaSearchOptions lambda_search;
  std::string output_dir = "out";
};
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Fills every defaultable field so that two resolutions of the same input
// compare equal; idempotent.
ExperimentConfig resolve_experiment_config(const ExperimentConfig& config);

// Strict JSON: any unrecognized key anywhere raises ConfigError.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_text(const ExperimentConfig& config);
void save_experiment_config(const ExperimentConfig& config,
                            const std::string& path);

SystemModel build_plant(const ExperimentConfig& config);
// Ten coupled scalar subsystems on a line, uniformly scaled past the
// stability margin; the stock benchmark plant.
SystemModel build_chain10();

// Riccati fixed point (infinite-horizon discrete LQR).  Throws SolverError
// if the iteration fails to settle.
Matrix solve_discrete_riccati(const Matrix& a, const Matrix& b,
                              const Matrix& q, const Matrix& r,
                              double tol = 1e-10, int max_iterations = 200000);
// Expected stationary per-step cost of the optimal LQR loop driven by
// isotropic Gaussian noise.
double stationary_lqr_cost(const Matrix& a, const Matrix& b, const Matrix& q,
                           const Matrix& r, double noise_std);

double spectral_radius(const Matrix& a);

struct ModeOutcome {
  double lambda = 0.0;
  double objective = 0.0;
  double residual_floor = 0.0;
  int evaluations = 0;
  CertificationRecord certification;
  double synthesis_seconds = 0.0;
  std::vector<double> seed_totals;
  double mean_total = 0.0;
  std::vector<double> mean_step_cost;   // cross-seed mean at each step
  std::vector<double> moving_average;   // running time-average, t = 1..steps
};

struct ScenarioOutcome {
  ScenarioSpec spec;
  ModeOutcome offline, online;
};

struct ExperimentReport {
  ExperimentConfig resolved;
  std::vector<ScenarioOutcome> scenarios;
  double wall_seconds = 0.0;
};

// Synthesizes both controller variants for every scenario, certifies them,
// runs noise-paired closed-loop simulations over all seeds, and writes
// per-trace CSVs, metrics.csv, moving_average.csv, and manifest.json under
// the configured output directory.
ExperimentReport run_experiment(const ExperimentConfig& config);

}  // namespace slsdrop
