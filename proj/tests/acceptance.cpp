// Acceptance suite: one PASS/FAIL line per criterion, run at the catalog settings.
#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "lab/cli.hpp"

using namespace lab::cli;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

Outcome run_one(const CatalogEntry& e, const std::filesystem::path& out, bool heavy) {
  ExperimentConfig c;
  c.experiment = e.name;
  apply_override(c, e.parameter.first, e.parameter.second);
  if (e.name == "radial-mot" && heavy) {
    // full scale, matching configs/radial-mot-heavy.conf
    apply_override(c, "samples", "200");
    apply_override(c, "grid", "128");
    apply_override(c, "boundary_nodes", "1024");
  }
  c.out = out / e.name;
  std::ostringstream detail;
  try {
    const RunResult r = run_experiment(c);
    for (const auto& t : r.reports) {
      detail << "    " << (t.passed ? "pass" : "fail") << "  " << t.name << ": " << t.statistic << " vs " << t.threshold
             << '\n';
    }
    return {r.passed(), detail.str()};
  } catch (const std::exception& ex) {
    return {false, "    error: " + std::string(ex.what()) + '\n'};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-10"};
  std::filesystem::path out = "acceptance";
  bool heavy = false;
  std::vector<int> only, expected;
  app.add_option("--out", out, "Directory for per-experiment results");
  app.add_flag("--heavy", heavy, "Run criterion 7 at full scale (hours)");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--expect-fail", expected,
                 "Criteria known to fail at this scale; they still print FAIL but do not fail the suite");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end()), known(expected.begin(), expected.end());
  std::filesystem::create_directories(out);
  // the same lines go to summary.txt, since ctest hides the output of passing tests
  std::ofstream summary(out / "summary.txt");
  int unexpected = 0;
  for (const auto& e : catalog()) {
    if (!selected.empty() && !selected.count(e.criterion)) continue;
    const auto start = std::chrono::steady_clock::now();
    const Outcome o = run_one(e, out, heavy);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream line;
    line << "criterion " << e.criterion << " " << e.name << ": " << (o.passed ? "PASS" : "FAIL");
    if (!o.passed && known.count(e.criterion)) line << " (expected failure)";
    if (e.name == "radial-mot" && !heavy) line << " [reduced scale: 8 pairs, 64 x 64 grid]";
    line << "  (" << std::fixed << std::setprecision(1) << secs << " s)\n";
    line.unsetf(std::ios::fixed);
    line << std::setprecision(6) << o.detail;
    std::cout << line.str() << std::flush;
    summary << line.str() << std::flush;
    if (!o.passed && !known.count(e.criterion)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
