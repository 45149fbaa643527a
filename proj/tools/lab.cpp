#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <optional>

#include "lab/cli.hpp"
#include "lab/error.hpp"

namespace {

using namespace lab::cli;

void print_reports(const RunResult& r) {
  for (const auto& t : r.reports) {
    std::cout << (t.passed ? "PASS" : "FAIL") << "  " << t.name << "  statistic=" << std::setprecision(6)
              << t.statistic << " threshold=" << t.threshold << '\n';
  }
  for (const auto& [k, v] : r.summary) std::cout << "  " << k << " = " << v << '\n';
}

/// Uses the catalog's gamma or kappa when the configuration names neither.
void fill_parameter(ExperimentConfig& config) {
  if (config.gamma || config.kappa || config.experiment.empty()) return;
  const auto& entry = find_experiment(config.experiment);
  apply_override(config, entry.parameter.first, entry.parameter.second);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments on SLE, Liouville fields and mating of trees"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "List the experiments");

  auto* run = app.add_subcommand("run", "Run one experiment");
  std::string experiment, config_path, out;
  std::optional<std::string> kappa, gamma, samples, seed, workers;
  run->add_option("--experiment", experiment, "Experiment name (overrides the config file)");
  run->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  run->add_option("--kappa", kappa, "SLE parameter (replaces gamma)");
  run->add_option("--gamma", gamma, "LQG parameter (replaces kappa)")->excludes("--kappa");
  run->add_option("--samples", samples, "Sample count");
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--out", out, "Output directory");
  run->add_option("--workers", workers, "Worker threads");

  auto* check = app.add_subcommand("validate", "Check a configuration without running it");
  std::string check_path;
  check->add_option("--config", check_path, "Configuration file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigFailure;
  }

  try {
    if (*list) {
      for (const auto& e : catalog()) {
        std::cout << std::setw(2) << e.criterion << "  " << std::left << std::setw(22) << e.name << std::right
                  << e.summary << "\n    " << e.citation << '\n';
      }
      return kPass;
    }
    if (*check) {
      ExperimentConfig config = load_config(check_path);
      fill_parameter(config);
      validate(config);
      std::cout << "ok\n";
      return kPass;
    }
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (!experiment.empty()) config.experiment = experiment;
    if (config.experiment.empty()) throw ConfigError("no experiment given");
    if (kappa) apply_override(config, "kappa", *kappa);
    if (gamma) apply_override(config, "gamma", *gamma);
    if (samples) apply_override(config, "samples", *samples);
    if (seed) apply_override(config, "seed", *seed);
    if (workers) apply_override(config, "workers", *workers);
    if (!out.empty()) config.out = out;
    fill_parameter(config);
    const RunResult result = run_experiment(config);
    print_reports(result);
    std::cout << (result.passed() ? "passed" : "failed") << '\n';
    return result.passed() ? kPass : kTestFailure;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const lab::PreconditionError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "diagnostic failure: " << e.what() << '\n';
    return kDiagnosticFailure;
  }
}
