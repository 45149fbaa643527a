#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>

#include "lab/cli.hpp"
#include "lab/svg.hpp"

namespace lab::cli::detail {

/// Shared state of one run: the configuration, its output directory and the
/// result being filled in.
struct Context {
  const ExperimentConfig& config;
  LqgParams params;
  std::filesystem::path out;
  RunResult& result;

  void report(stats::TestReport r) { result.reports.push_back(std::move(r)); }
  void summary(const std::string& key, double value) { result.summary[key] = value; }
  /// Writes a CSV artifact; body receives the stream after the header line.
  void csv(const std::string& name, const std::string& header, const std::function<void(std::ostream&)>& body);
  void plot(const std::string& name, const svg::Plot& plot);
  std::map<std::string, std::string> provenance() const;
};

using Runner = std::function<void(Context&)>;

void capacity_convergence(Context& c);
void fixed_time_symmetry(Context& c);
void crt_covariance(Context& c);
void girsanov_exactness(Context& c);
void area_law(Context& c);
void first_passage_oracle(Context& c);
void radial_mot(Context& c);
void reversibility(Context& c);
void excursion_limit(Context& c);
void sphere_mot(Context& c);

}  // namespace lab::cli::detail
