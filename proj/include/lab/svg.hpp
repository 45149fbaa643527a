#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lab::svg {

enum class Style { Line, Points, Steps };

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  Style style = Style::Line;
};

struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

/// Empirical cdf as a step series; weights are optional and self-normalized.
Series ecdf(const std::string& label, std::vector<double> samples, const std::vector<double>& weights = {});

/// Self-contained SVG with a provenance comment block listing `provenance`.
void write(const Plot& plot, const std::filesystem::path& path, const std::map<std::string, std::string>& provenance);

}  // namespace lab::svg
