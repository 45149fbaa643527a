#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lab/loewner.hpp"
#include "lab/params.hpp"
#include "lab/stats.hpp"

namespace lab::cli {

/// Invalid or inconsistent experiment configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kPass = 0, kTestFailure = 1, kConfigFailure = 2, kDiagnosticFailure = 3 };

/// One named experiment; each acceptance criterion maps to exactly one entry.
struct CatalogEntry {
  std::string name;
  int criterion = 0;
  std::string citation;
  std::string summary;
  /// Keys the experiment reads besides the common ones, with default values.
  std::map<std::string, std::string> defaults;
  /// Default gamma or kappa, as "gamma" / "kappa" and a value.
  std::pair<std::string, std::string> parameter;
};

const std::vector<CatalogEntry>& catalog();
/// Throws ConfigError for names outside the catalog.
const CatalogEntry& find_experiment(std::string_view name);

/// Flat key = value configuration. Common keys: experiment, gamma | kappa,
/// samples, seed, out, workers, level. Everything else must be one of the
/// experiment's own keys.
struct ExperimentConfig {
  std::string experiment;
  std::optional<double> gamma;
  std::optional<double> kappa;
  std::optional<std::size_t> samples;
  std::uint64_t seed = 1;
  std::filesystem::path out;
  unsigned workers = 1;
  double level = 0.01;
  /// Experiment-specific keys as written, before defaults are merged in.
  std::map<std::string, std::string> values;

  LqgParams params() const;
  /// Value of an experiment key, falling back to the catalog default.
  std::string text(const std::string& key) const;
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::size_t sample_count() const;
  /// Every key with its effective value, for echoing in results.
  std::map<std::string, std::string> effective() const;
};

/// Parses key = value lines; '#' starts a comment. Keys may not repeat.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets one key as if it appeared in the file (later gamma/kappa replace each other).
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Checks the experiment name, exactly one of gamma/kappa, the parameter range
/// and that every key belongs to the experiment. Throws ConfigError.
void validate(const ExperimentConfig& config);

/// Complex literal such as 1, -3, 2i, 0.5i, 1+1i or 1-2i.
std::complex<double> parse_complex(std::string_view text);

/// Output of one experiment run.
struct RunResult {
  std::string experiment;
  std::vector<stats::TestReport> reports;
  std::map<std::string, double> summary;
  std::vector<std::string> artifacts;
  nlohmann::json document;
  bool passed() const;
};

/// Runs a validated configuration and writes results.json, CSVs and SVG plots
/// under config.out. Diagnostic failures propagate as exceptions.
RunResult run_experiment(const ExperimentConfig& config);

/// Hitting-order probabilities for whole-plane SLE.
struct ReversibilityRow {
  std::complex<double> z, w;
  /// P[tau_z < tau_w] from the first arm.
  double p1 = 0.0;
  /// P[tau_{map w} < tau_{map z}] from an independent second arm.
  double p2 = 0.0;
  std::size_t n1 = 0, n2 = 0;
  std::size_t censored1 = 0, censored2 = 0;
  stats::TestReport test;
};

enum class SecondArmMap { Inversion, Identity };

struct ReversibilityOptions {
  double T0 = 6.0;
  double T = 8.0;
  double step = 1e-3;
  unsigned workers = 1;
  double level = 0.01;
  /// Abort when more than this fraction of an arm is undecided at the horizon.
  double max_censored = 0.05;
  SecondArmMap map = SecondArmMap::Inversion;
};

/// For each pair (z != w, both nonzero) estimates p1 = P[tau_z < tau_w] and, from independent runs,
/// p2 = P[tau_{1/w} < tau_{1/z}]; reversibility composed with inversion
/// predicts p1 = p2. With SecondArmMap::Identity the second arm estimates
/// P[tau_w < tau_z] instead, which must differ on asymmetric pairs.
std::vector<ReversibilityRow> reversibility_statistic(double kappa,
                                                      const std::vector<std::pair<std::complex<double>, std::complex<double>>>& pairs,
                                                      std::size_t n, std::uint64_t seed,
                                                      const ReversibilityOptions& options = {});

}  // namespace lab::cli
