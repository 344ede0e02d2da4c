// Command-line front end: synthesize controller banks, certify them against
// a plant, run closed-loop simulations, and reproduce the side-by-side
// comparison experiment.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slsdrop/bank_io.hpp"
#include "slsdrop/errors.hpp"
#include "slsdrop/experiment.hpp"
#include "slsdrop/runtime.hpp"
#include "slsdrop/synthesis.hpp"

namespace {

using namespace slsdrop;
namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const ScenarioSpec& pick_scenario(const ExperimentConfig& cfg,
                                  const std::string& name) {
  if (name.empty()) return cfg.scenarios.front();
  for (const auto& spec : cfg.scenarios) {
    if (spec.name == name) return spec;
  }
  throw ConfigError("no scenario named \"" + name + "\" in the configuration");
}

int cmd_synthesize(const std::string& config_path, const std::string& mode,
                   const std::string& scenario_name,
                   const std::string& out_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const SystemModel sys = build_plant(cfg);
  const ScenarioSpec& spec = pick_scenario(cfg, scenario_name);
  const DropoutDistribution dist =
      uniform_reach_distribution(static_cast<int>(sys.subsystem_count()),
                                 spec.reach_values);

  SynthesisOptions opts;
  opts.solver = cfg.solver;
  opts.lambda_search = cfg.lambda_search;
  if (cfg.state_cost.size() != 0) {
    opts.q_sqrt = Matrix(Eigen::LLT<Matrix>(cfg.state_cost).matrixL().transpose());
  }
  if (cfg.input_cost.size() != 0) {
    opts.r_sqrt = Matrix(Eigen::LLT<Matrix>(cfg.input_cost).matrixL().transpose());
  }

  const SynthesisResult result =
      mode == "online"
          ? synthesize_online(sys, dist, cfg.fir_horizon, opts)
          : synthesize_offline(sys, dist, cfg.fir_horizon, opts);
  save_bank(result.bank, out_path);
  std::cout << "scenario " << spec.name << ", " << mode
            << " variant: lambda " << fmt(result.lambda) << ", objective "
            << fmt(result.objective) << ", residual floor "
            << fmt(result.residual_floor) << ", worst residual "
            << fmt(result.bank.certification.worst_residual) << ", "
            << (result.bank.certification.certified ? "certified"
                                                    : "NOT certified")
            << "\n";
  std::cout << "bank written to " << out_path << "\n";
  if (!result.bank.certification.certified) return 2;
  return 0;
}

int cmd_certify(const std::string& bank_path, const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const SystemModel sys = build_plant(cfg);
  const ControllerBank bank = load_bank(bank_path);
  const CertificationRecord record = certify_bank(bank, sys);
  std::cout << "worst residual " << fmt(record.worst_residual)
            << " (subsystem " << record.worst_subsystem << ", pattern "
            << record.worst_pattern << "): "
            << (record.certified ? "certified" : "NOT certified") << "\n";
  return record.certified ? 0 : 2;
}

int cmd_simulate(const std::string& config_path, const std::string& bank_path,
                 std::string out_dir, std::uint64_t seed_offset) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const SystemModel sys = build_plant(cfg);
  ControllerBank bank = load_bank(bank_path);
  bank.certification = certify_bank(bank, sys);  // never trust the file
  if (out_dir.empty()) out_dir = cfg.output_dir;
  fs::create_directories(out_dir);

  RolloutOptions ropts;
  ropts.steps = cfg.sim_steps;
  ropts.noise_std = cfg.noise_std;
  ropts.initial_state = cfg.initial_state;
  ropts.q = cfg.state_cost;
  ropts.r = cfg.input_cost;
  const std::string mode =
      bank.mode == ControllerMode::kOffline ? "offline" : "online";

  std::ofstream metrics(fs::path(out_dir) / "metrics.csv");
  if (!metrics) throw IoError("cannot open metrics.csv for writing");
  metrics << "scenario,mode,seed,total_cost,mean_step_cost\n";
  double mean_total = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    const std::uint64_t effective = seed + seed_offset;
    SeedStream base(effective);
    SeedStream noise = base.substream(1000);
    SeedStream patterns = base.substream(2000);
    const Trace trace =
        rollout(bank, sys, ropts, noise,
                random_pattern_source(bank.distribution, patterns));
    std::ofstream out(fs::path(out_dir) /
                      ("trace_" + mode + "_seed" + std::to_string(effective) +
                       ".csv"));
    if (!out) throw IoError("cannot open trace file for writing");
    out << "t,cost\n";
    for (std::size_t t = 0; t < trace.step_cost.size(); ++t) {
      out << t << "," << fmt(trace.step_cost[t]) << "\n";
    }
    metrics << "bank," << mode << "," << effective << ","
            << fmt(trace.total_cost) << ","
            << fmt(trace.total_cost / static_cast<double>(cfg.sim_steps + 1))
            << "\n";
    mean_total += trace.total_cost / static_cast<double>(cfg.seeds.size());
  }
  std::cout << mode << " bank, " << cfg.seeds.size()
            << " seeds: mean total cost " << fmt(mean_total) << "\n";
  return 0;
}

int cmd_compare(const std::string& config_path, std::string out_dir) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  const ExperimentReport report = run_experiment(cfg);
  for (const auto& sc : report.scenarios) {
    std::cout << "scenario " << sc.spec.name << ": offline mean total "
              << fmt(sc.offline.mean_total) << ", online mean total "
              << fmt(sc.online.mean_total) << "\n";
  }
  std::cout << "outputs written to " << report.resolved.output_dir << " ("
            << fmt(report.wall_seconds) << " s)\n";
  return 0;
}

int cmd_oracle(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const SystemModel sys = build_plant(cfg);
  const Index n = sys.state_dim();
  const Index p = sys.input_dim();
  const Matrix q =
      cfg.state_cost.size() != 0 ? cfg.state_cost : Matrix::Identity(n, n);
  const Matrix r =
      cfg.input_cost.size() != 0 ? cfg.input_cost : Matrix::Identity(p, p);
  std::cout << "spectral radius " << fmt(spectral_radius(sys.A)) << "\n";
  std::cout << "stationary optimal cost "
            << fmt(stationary_lqr_cost(sys.A, sys.B, q, r, cfg.noise_std))
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Dropout-robust distributed controller synthesis and evaluation"};
  app.require_subcommand(1);

  std::string config_path, bank_path, out_path, out_dir, scenario_name;
  std::string mode = "offline";
  std::uint64_t seed_offset = 0;

  auto* synth = app.add_subcommand(
      "synthesize", "Design a controller bank for one dropout scenario");
  synth->add_option("--config", config_path, "experiment configuration JSON")
      ->required();
  synth->add_option("--mode", mode, "offline | online")
      ->check(CLI::IsMember({"offline", "online"}));
  synth->add_option("--scenario", scenario_name,
                    "scenario name (default: first in the configuration)");
  synth->add_option("--out", out_path, "bank file to write (.json or binary)")
      ->required();

  auto* certify =
      app.add_subcommand("certify", "Re-derive a bank's stability residuals");
  certify->add_option("--bank", bank_path, "bank file")->required();
  certify->add_option("--config", config_path, "configuration with the plant")
      ->required();

  auto* simulate = app.add_subcommand(
      "simulate", "Roll out a stored bank over the configured seeds");
  simulate->add_option("--config", config_path, "experiment configuration")
      ->required();
  simulate->add_option("--bank", bank_path, "bank file")->required();
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_option("--seed-offset", seed_offset,
                       "added to every configured seed");

  auto* compare = app.add_subcommand(
      "compare", "Full scenario sweep: synthesize, certify, and simulate both "
                 "variants with paired noise");
  compare->add_option("--config", config_path, "experiment configuration")
      ->required();
  compare->add_option("--out", out_dir, "overrides the configured output dir");

  auto* oracle = app.add_subcommand(
      "oracle", "Print the plant's spectral radius and the unconstrained "
                "optimal stationary cost");
  oracle->add_option("--config", config_path, "experiment configuration")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synthesize(config_path, mode, scenario_name, out_path);
    }
    if (certify->parsed()) return cmd_certify(bank_path, config_path);
    if (simulate->parsed()) {
      return cmd_simulate(config_path, bank_path, out_dir, seed_offset);
    }
    if (compare->parsed()) return cmd_compare(config_path, out_dir);
    if (oracle->parsed()) return cmd_oracle(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
