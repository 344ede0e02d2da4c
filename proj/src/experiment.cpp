#include "slsdrop/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "slsdrop/errors.hpp"

namespace slsdrop {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- small utilities -------------------------------------------------------

bool same_matrix(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.size() == 0) return true;
  return (a.array() == b.array()).all();
}

bool same_vector(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  if (a.size() == 0) return true;
  return (a.array() == b.array()).all();
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(what + " must be a nonempty array of rows");
  }
  const Index rows = static_cast<Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) {
    throw ConfigError(what + " rows must be nonempty arrays");
  }
  const Index cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw ConfigError(what + " must be rectangular");
    }
    for (Index c = 0; c < cols; ++c) {
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (allowed.count(it.key()) == 0) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + context);
    }
  }
}

std::string mode_name(ControllerMode mode) {
  return mode == ControllerMode::kOffline ? "offline" : "online";
}

Matrix sqrt_of_cost(const Matrix& cost, Index dim, const char* what) {
  if (cost.size() == 0) return Matrix::Identity(dim, dim);
  if (cost.rows() != dim || cost.cols() != dim) {
    throw ConfigError(std::string(what) + " has the wrong dimension");
  }
  Eigen::LLT<Matrix> llt(cost);
  if (llt.info() != Eigen::Success) {
    throw ConfigError(std::string(what) + " must be positive definite");
  }
  return Matrix(llt.matrixL().transpose());
}

}  // namespace

// ---------------------------------------------------------------------------
// Config model
// ---------------------------------------------------------------------------

bool operator==(const ScenarioSpec& a, const ScenarioSpec& b) {
  return a.name == b.name && a.reach_values == b.reach_values;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.plant_preset == b.plant_preset && same_matrix(a.plant_a, b.plant_a) &&
         same_matrix(a.plant_b, b.plant_b) && a.state_sizes == b.state_sizes &&
         a.input_sizes == b.input_sizes && a.fir_horizon == b.fir_horizon &&
         a.sim_steps == b.sim_steps && a.seeds == b.seeds &&
         a.noise_std == b.noise_std &&
         same_vector(a.initial_state, b.initial_state) &&
         a.scenarios == b.scenarios && same_matrix(a.state_cost, b.state_cost) &&
         same_matrix(a.input_cost, b.input_cost) &&
         a.solver.eps_abs == b.solver.eps_abs &&
         a.solver.eps_rel == b.solver.eps_rel &&
         a.solver.max_iterations == b.solver.max_iterations &&
         a.solver.kkt_tolerance == b.solver.kkt_tolerance &&
         a.solver.rho == b.solver.rho &&
         a.solver.adaptive_rho == b.solver.adaptive_rho &&
         a.lambda_search.lo == b.lambda_search.lo &&
         a.lambda_search.hi == b.lambda_search.hi &&
         a.lambda_search.tol == b.lambda_search.tol &&
         a.lambda_search.floor_margin == b.lambda_search.floor_margin &&
         a.lambda_search.max_evals == b.lambda_search.max_evals &&
         a.output_dir == b.output_dir;
}

ExperimentConfig resolve_experiment_config(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  if (cfg.seeds.empty()) {
    for (std::uint64_t s = 1; s <= 10; ++s) cfg.seeds.push_back(s);
  }
  if (cfg.scenarios.empty()) {
    cfg.scenarios = {{"", {5}}, {"", {3, 4, 5}}, {"", {2, 3, 4, 5}}};
  }
  for (auto& scenario : cfg.scenarios) {
    if (scenario.reach_values.empty()) {
      throw ConfigError("scenario without reach values");
    }
    for (int v : scenario.reach_values) {
      if (v < 0) throw ConfigError("scenario reach values must be >= 0");
    }
    // Canonical form: the mixture over reaches is a set, so order and
    // repetition in the input must not matter.
    std::sort(scenario.reach_values.begin(), scenario.reach_values.end());
    scenario.reach_values.erase(std::unique(scenario.reach_values.begin(),
                                            scenario.reach_values.end()),
                                scenario.reach_values.end());
    if (scenario.name.empty()) {
      std::string name = "reach";
      for (int v : scenario.reach_values) {
        name += "-" + std::to_string(v);
      }
      scenario.name = name;
    }
  }
  if (cfg.fir_horizon < 1) throw ConfigError("fir_horizon must be >= 1");
  if (cfg.sim_steps < 0) throw ConfigError("sim_steps must be >= 0");
  if (cfg.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  if (!(cfg.lambda_search.lo > 0.0 &&
        cfg.lambda_search.lo < cfg.lambda_search.hi &&
        cfg.lambda_search.hi < 1.0)) {
    throw ConfigError("lambda_search interval must satisfy 0 < lo < hi < 1");
  }
  if (cfg.lambda_search.tol <= 0.0 || cfg.lambda_search.max_evals < 3 ||
      cfg.lambda_search.floor_margin < 0.0) {
    throw ConfigError("lambda_search tolerances are out of range");
  }
  if (cfg.solver.eps_abs <= 0.0 || cfg.solver.eps_rel <= 0.0 ||
      cfg.solver.max_iterations < 1 || cfg.solver.kkt_tolerance <= 0.0 ||
      cfg.solver.rho <= 0.0) {
    throw ConfigError("solver options are out of range");
  }
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must be set");
  if (cfg.plant_preset.empty()) {
    if (cfg.plant_a.size() == 0 || cfg.plant_b.size() == 0) {
      throw ConfigError("explicit plant requires both matrices");
    }
  } else if (cfg.plant_preset != "chain10") {
    throw ConfigError("unknown plant preset \"" + cfg.plant_preset + "\"");
  }
  return cfg;
}

namespace {

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (!cfg.plant_preset.empty()) {
    j["plant"] = cfg.plant_preset;
  } else {
    j["plant"] = {{"a", matrix_to_json(cfg.plant_a)},
                  {"b", matrix_to_json(cfg.plant_b)},
                  {"state_blocks", cfg.state_sizes},
                  {"input_blocks", cfg.input_sizes}};
  }
  j["fir_horizon"] = cfg.fir_horizon;
  j["sim_steps"] = cfg.sim_steps;
  j["seeds"] = cfg.seeds;
  j["noise_std"] = cfg.noise_std;
  if (cfg.initial_state.size() != 0) {
    std::vector<double> x0(static_cast<std::size_t>(cfg.initial_state.size()));
    for (Index i = 0; i < cfg.initial_state.size(); ++i) {
      x0[static_cast<std::size_t>(i)] = cfg.initial_state[i];
    }
    j["initial_state"] = x0;
  }
  json scenarios = json::array();
  for (const auto& s : cfg.scenarios) {
    scenarios.push_back({{"name", s.name}, {"reach", s.reach_values}});
  }
  j["scenarios"] = std::move(scenarios);
  if (cfg.state_cost.size() != 0) j["state_cost"] = matrix_to_json(cfg.state_cost);
  if (cfg.input_cost.size() != 0) j["input_cost"] = matrix_to_json(cfg.input_cost);
  j["solver"] = {{"eps_abs", cfg.solver.eps_abs},
                 {"eps_rel", cfg.solver.eps_rel},
                 {"max_iterations", cfg.solver.max_iterations},
                 {"kkt_tolerance", cfg.solver.kkt_tolerance},
                 {"rho", cfg.solver.rho},
                 {"adaptive_rho", cfg.solver.adaptive_rho}};
  j["lambda_search"] = {{"lo", cfg.lambda_search.lo},
                        {"hi", cfg.lambda_search.hi},
                        {"tol", cfg.lambda_search.tol},
                        {"floor_margin", cfg.lambda_search.floor_margin},
                        {"max_evals", cfg.lambda_search.max_evals}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j,
             {"plant", "fir_horizon", "sim_steps", "seeds", "noise_std",
              "initial_state", "scenarios", "state_cost", "input_cost",
              "solver", "lambda_search", "output_dir"},
             "the configuration");
  ExperimentConfig cfg;
  if (j.contains("plant")) {
    const auto& plant = j.at("plant");
    if (plant.is_string()) {
      cfg.plant_preset = plant.get<std::string>();
    } else if (plant.is_object()) {
      check_keys(plant, {"a", "b", "state_blocks", "input_blocks"}, "plant");
      cfg.plant_preset.clear();
      cfg.plant_a = matrix_from_json(plant.at("a"), "plant a");
      cfg.plant_b = matrix_from_json(plant.at("b"), "plant b");
      if (plant.contains("state_blocks")) {
        cfg.state_sizes = plant.at("state_blocks").get<std::vector<Index>>();
      }
      if (plant.contains("input_blocks")) {
        cfg.input_sizes = plant.at("input_blocks").get<std::vector<Index>>();
      }
    } else {
      throw ConfigError("plant must be a preset name or an object");
    }
  }
  if (j.contains("fir_horizon")) cfg.fir_horizon = j.at("fir_horizon").get<int>();
  if (j.contains("sim_steps")) cfg.sim_steps = j.at("sim_steps").get<int>();
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (j.contains("noise_std")) cfg.noise_std = j.at("noise_std").get<double>();
  if (j.contains("initial_state")) {
    const auto x0 = j.at("initial_state").get<std::vector<double>>();
    cfg.initial_state.resize(static_cast<Index>(x0.size()));
    for (std::size_t i = 0; i < x0.size(); ++i) {
      cfg.initial_state[static_cast<Index>(i)] = x0[i];
    }
  }
  if (j.contains("scenarios")) {
    for (const auto& s : j.at("scenarios")) {
      check_keys(s, {"name", "reach"}, "a scenario");
      ScenarioSpec spec;
      if (s.contains("name")) spec.name = s.at("name").get<std::string>();
      spec.reach_values = s.at("reach").get<std::vector<int>>();
      cfg.scenarios.push_back(std::move(spec));
    }
  }
  if (j.contains("state_cost")) {
    cfg.state_cost = matrix_from_json(j.at("state_cost"), "state_cost");
  }
  if (j.contains("input_cost")) {
    cfg.input_cost = matrix_from_json(j.at("input_cost"), "input_cost");
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s,
               {"eps_abs", "eps_rel", "max_iterations", "kkt_tolerance", "rho",
                "adaptive_rho"},
               "solver");
    if (s.contains("eps_abs")) cfg.solver.eps_abs = s.at("eps_abs").get<double>();
    if (s.contains("eps_rel")) cfg.solver.eps_rel = s.at("eps_rel").get<double>();
    if (s.contains("max_iterations")) {
      cfg.solver.max_iterations = s.at("max_iterations").get<int>();
    }
    if (s.contains("kkt_tolerance")) {
      cfg.solver.kkt_tolerance = s.at("kkt_tolerance").get<double>();
    }
    if (s.contains("rho")) cfg.solver.rho = s.at("rho").get<double>();
    if (s.contains("adaptive_rho")) {
      cfg.solver.adaptive_rho = s.at("adaptive_rho").get<bool>();
    }
  }
  if (j.contains("lambda_search")) {
    const auto& s = j.at("lambda_search");
    check_keys(s, {"lo", "hi", "tol", "floor_margin", "max_evals"},
               "lambda_search");
    if (s.contains("lo")) cfg.lambda_search.lo = s.at("lo").get<double>();
    if (s.contains("hi")) cfg.lambda_search.hi = s.at("hi").get<double>();
    if (s.contains("tol")) cfg.lambda_search.tol = s.at("tol").get<double>();
    if (s.contains("floor_margin")) {
      cfg.lambda_search.floor_margin = s.at("floor_margin").get<double>();
    }
    if (s.contains("max_evals")) {
      cfg.lambda_search.max_evals = s.at("max_evals").get<int>();
    }
  }
  if (j.contains("output_dir")) {
    cfg.output_dir = j.at("output_dir").get<std::string>();
  }
  return resolve_experiment_config(cfg);
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") +
                      e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string experiment_config_text(const ExperimentConfig& config) {
  return config_to_json(config).dump(1, '\t') + "\n";
}

void save_experiment_config(const ExperimentConfig& config,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << experiment_config_text(config);
  if (!out) throw IoError("failed while writing " + path);
}

// ---------------------------------------------------------------------------
// Plants and the Riccati reference
// ---------------------------------------------------------------------------

SystemModel build_chain10() {
  constexpr int kCount = 10;
  constexpr double kScale = 1.2;
  Matrix a = Matrix::Zero(kCount, kCount);
  for (int i = 0; i < kCount; ++i) {
    for (int jj = 0; jj < kCount; ++jj) {
      const int gap = std::abs(i - jj);
      double coupling = 0.0;
      if (gap == 0) {
        coupling = (i == 0 || i == kCount - 1) ? 0.6 : 0.2;
      } else if (gap == 1) {
        coupling = 0.4;
      } else if (gap == 2) {
        coupling = 0.2;
      }
      a(i, jj) = kScale * coupling;
    }
  }
  SystemModel sys;
  sys.A = a;
  sys.B = kScale * Matrix::Identity(kCount, kCount);
  sys.state_blocks = BlockPartition::from_sizes(std::vector<Index>(kCount, 1));
  sys.input_blocks = BlockPartition::from_sizes(std::vector<Index>(kCount, 1));
  sys.validate();
  return sys;
}

SystemModel build_plant(const ExperimentConfig& config) {
  if (config.plant_preset == "chain10") return build_chain10();
  if (!config.plant_preset.empty()) {
    throw ConfigError("unknown plant preset \"" + config.plant_preset + "\"");
  }
  SystemModel sys;
  sys.A = config.plant_a;
  sys.B = config.plant_b;
  const Index n = sys.A.rows();
  const Index p = sys.B.cols();
  std::vector<Index> state_sizes = config.state_sizes;
  std::vector<Index> input_sizes = config.input_sizes;
  if (state_sizes.empty()) state_sizes.assign(static_cast<std::size_t>(n), 1);
  if (input_sizes.empty()) input_sizes.assign(static_cast<std::size_t>(p), 1);
  sys.state_blocks = BlockPartition::from_sizes(state_sizes);
  sys.input_blocks = BlockPartition::from_sizes(input_sizes);
  try {
    sys.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid explicit plant: ") + e.what());
  }
  return sys;
}

Matrix solve_discrete_riccati(const Matrix& a, const Matrix& b,
                              const Matrix& q, const Matrix& r, double tol,
                              int max_iterations) {
  const Index n = a.rows();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != b.cols() || r.cols() != b.cols()) {
    throw DimensionError("solve_discrete_riccati: dimension mismatch");
  }
  Matrix p_mat = q;
  for (int it = 0; it < max_iterations; ++it) {
    const Matrix btp = b.transpose() * p_mat;
    const Matrix gain =
        (r + btp * b).ldlt().solve(btp * a);  // (R + B'PB)^{-1} B'PA
    const Matrix next =
        q + a.transpose() * p_mat * a - (btp * a).transpose() * gain;
    const double diff = (next - p_mat).lpNorm<Eigen::Infinity>();
    p_mat = 0.5 * (next + next.transpose());
    if (!std::isfinite(diff) || p_mat.lpNorm<Eigen::Infinity>() > 1e100) {
      throw SolverError("solve_discrete_riccati: iteration diverged");
    }
    if (diff <= tol * (1.0 + p_mat.lpNorm<Eigen::Infinity>())) return p_mat;
  }
  throw SolverError("solve_discrete_riccati: did not converge");
}

double stationary_lqr_cost(const Matrix& a, const Matrix& b, const Matrix& q,
                           const Matrix& r, double noise_std) {
  const Matrix p_mat = solve_discrete_riccati(a, b, q, r);
  return noise_std * noise_std * p_mat.trace();
}

double spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// The paired-seed comparison experiment
// ---------------------------------------------------------------------------

namespace {

void write_trace_csv(const std::string& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const Index n = trace.states.rows();
  const Index p = trace.inputs.rows();
  out << "t,cost";
  for (Index i = 0; i < n; ++i) out << ",x" << i;
  for (Index i = 0; i < p; ++i) out << ",u" << i;
  for (Index i = 0; i < n; ++i) out << ",w_hat" << i;
  out << "\n";
  for (Index t = 0; t < trace.states.cols(); ++t) {
    out << t << "," << format_double(trace.step_cost[static_cast<std::size_t>(t)]);
    for (Index i = 0; i < n; ++i) {
      out << "," << format_double(trace.states(i, t));
    }
    for (Index i = 0; i < p; ++i) {
      out << "," << format_double(trace.inputs(i, t));
    }
    for (Index i = 0; i < n; ++i) {
      out << "," << format_double(trace.estimates(i, t));
    }
    out << "\n";
  }
  if (!out) throw IoError("failed while writing " + path);
}

ModeOutcome evaluate_mode(const SystemModel& sys,
                          const DropoutDistribution& dist,
                          const ExperimentConfig& cfg,
                          const SynthesisOptions& synth_opts,
                          ControllerMode mode, int scenario_index,
                          const std::string& scenario_name) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const SynthesisResult synth =
      mode == ControllerMode::kOffline
          ? synthesize_offline(sys, dist, cfg.fir_horizon, synth_opts)
          : synthesize_online(sys, dist, cfg.fir_horizon, synth_opts);
  const auto t1 = clock::now();

  ModeOutcome outcome;
  outcome.lambda = synth.lambda;
  outcome.objective = synth.objective;
  outcome.residual_floor = synth.residual_floor;
  outcome.evaluations = synth.evaluations;
  outcome.certification = synth.bank.certification;
  outcome.synthesis_seconds =
      std::chrono::duration<double>(t1 - t0).count();
  if (!synth.bank.certification.certified) {
    throw CertificationError("scenario " + scenario_name + ", " +
                             mode_name(mode) +
                             " variant: bank failed certification");
  }

  RolloutOptions ropts;
  ropts.steps = cfg.sim_steps;
  ropts.noise_std = cfg.noise_std;
  ropts.initial_state = cfg.initial_state;
  ropts.q = cfg.state_cost;
  ropts.r = cfg.input_cost;

  outcome.mean_step_cost.assign(static_cast<std::size_t>(cfg.sim_steps) + 1,
                                0.0);
  const double inv_seeds = 1.0 / static_cast<double>(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) {
    SeedStream base(seed);
    // Streams depend on (seed, scenario) only, never on the controller, so
    // the two variants face identical disturbances and pattern draws.
    SeedStream noise =
        base.substream(1000 + static_cast<std::uint64_t>(scenario_index));
    SeedStream patterns =
        base.substream(2000 + static_cast<std::uint64_t>(scenario_index));
    const Trace trace = rollout(synth.bank, sys, ropts, noise,
                                random_pattern_source(dist, patterns));
    const fs::path path =
        fs::path(cfg.output_dir) /
        ("trace_" + scenario_name + "_" + mode_name(mode) + "_seed" +
         std::to_string(seed) + ".csv");
    write_trace_csv(path.string(), trace);
    outcome.seed_totals.push_back(trace.total_cost);
    for (std::size_t t = 0; t < trace.step_cost.size(); ++t) {
      outcome.mean_step_cost[t] += inv_seeds * trace.step_cost[t];
    }
  }
  for (double total : outcome.seed_totals) {
    outcome.mean_total += total * inv_seeds;
  }
  double running = 0.0;
  for (int t = 1; t <= cfg.sim_steps; ++t) {
    running += outcome.mean_step_cost[static_cast<std::size_t>(t)];
    outcome.moving_average.push_back(running / static_cast<double>(t));
  }
  return outcome;
}

json mode_to_json(const ModeOutcome& m) {
  return {{"lambda", m.lambda},
          {"objective", m.objective},
          {"residual_floor", m.residual_floor},
          {"evaluations", m.evaluations},
          {"certified", m.certification.certified},
          {"worst_residual", m.certification.worst_residual},
          {"worst_subsystem", m.certification.worst_subsystem},
          {"worst_pattern", m.certification.worst_pattern},
          {"synthesis_seconds", m.synthesis_seconds},
          {"mean_total_cost", m.mean_total},
          {"seed_totals", m.seed_totals}};
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  ExperimentReport report;
  report.resolved = resolve_experiment_config(config);
  const ExperimentConfig& cfg = report.resolved;

  const SystemModel sys = build_plant(cfg);
  fs::create_directories(cfg.output_dir);

  SynthesisOptions synth_opts;
  synth_opts.q_sqrt = sqrt_of_cost(cfg.state_cost, sys.state_dim(), "state_cost");
  synth_opts.r_sqrt = sqrt_of_cost(cfg.input_cost, sys.input_dim(), "input_cost");
  synth_opts.solver = cfg.solver;
  synth_opts.lambda_search = cfg.lambda_search;

  for (int si = 0; si < static_cast<int>(cfg.scenarios.size()); ++si) {
    const ScenarioSpec& spec = cfg.scenarios[static_cast<std::size_t>(si)];
    const DropoutDistribution dist = uniform_reach_distribution(
        sys.subsystem_count(), spec.reach_values);
    ScenarioOutcome outcome;
    outcome.spec = spec;
    outcome.offline = evaluate_mode(sys, dist, cfg, synth_opts,
                                    ControllerMode::kOffline, si, spec.name);
    outcome.online = evaluate_mode(sys, dist, cfg, synth_opts,
                                   ControllerMode::kOnline, si, spec.name);
    report.scenarios.push_back(std::move(outcome));
  }

  // metrics.csv: one row per scenario, variant, and seed
  {
    std::ofstream out(fs::path(cfg.output_dir) / "metrics.csv");
    if (!out) throw IoError("cannot open metrics.csv for writing");
    out << "scenario,mode,seed,total_cost,mean_step_cost\n";
    for (const auto& sc : report.scenarios) {
      for (const ModeOutcome* m : {&sc.offline, &sc.online}) {
        const std::string mode =
            m == &sc.offline ? "offline" : "online";
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
          const double total = m->seed_totals[s];
          out << sc.spec.name << "," << mode << "," << cfg.seeds[s] << ","
              << format_double(total) << ","
              << format_double(total / static_cast<double>(cfg.sim_steps + 1))
              << "\n";
        }
      }
    }
    if (!out) throw IoError("failed while writing metrics.csv");
  }

  // moving_average.csv: running time-average of the cross-seed mean cost
  {
    std::ofstream out(fs::path(cfg.output_dir) / "moving_average.csv");
    if (!out) throw IoError("cannot open moving_average.csv for writing");
    out << "scenario,mode,t,value\n";
    for (const auto& sc : report.scenarios) {
      for (const ModeOutcome* m : {&sc.offline, &sc.online}) {
        const std::string mode =
            m == &sc.offline ? "offline" : "online";
        for (std::size_t t = 0; t < m->moving_average.size(); ++t) {
          out << sc.spec.name << "," << mode << "," << (t + 1) << ","
              << format_double(m->moving_average[t]) << "\n";
        }
      }
    }
    if (!out) throw IoError("failed while writing moving_average.csv");
  }

  const auto t1 = clock::now();
  report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

  {
    json manifest;
    manifest["format"] = "slsdrop-manifest";
    manifest["version"] = 1;
    manifest["config"] = config_to_json(cfg);
    manifest["plant"] = {{"state_dim", sys.state_dim()},
                         {"input_dim", sys.input_dim()},
                         {"spectral_radius", spectral_radius(sys.A)}};
    json scenarios = json::array();
    for (const auto& sc : report.scenarios) {
      scenarios.push_back({{"name", sc.spec.name},
                           {"reach", sc.spec.reach_values},
                           {"offline", mode_to_json(sc.offline)},
                           {"online", mode_to_json(sc.online)}});
    }
    manifest["scenarios"] = std::move(scenarios);
    manifest["wall_seconds"] = report.wall_seconds;
    std::ofstream out(fs::path(cfg.output_dir) / "manifest.json");
    if (!out) throw IoError("cannot open manifest.json for writing");
    out << manifest.dump(1, '\t') << "\n";
    if (!out) throw IoError("failed while writing manifest.json");
  }

  return report;
}

}  // namespace slsdrop
