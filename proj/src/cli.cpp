#include "lab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "experiment.hpp"
#include "lab/error.hpp"

namespace lab::cli {

namespace {

const std::set<std::string> kCommonKeys = {"experiment", "gamma", "kappa", "samples", "seed", "out", "workers", "level"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_number(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end || !std::isfinite(x)) throw ConfigError("key '" + key + "': not a number: " + v);
  return x;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec == std::errc() && ptr == end) return x;
  // accept integral values written in floating notation, e.g. 1e5
  const double d = to_number(key, v);
  if (d < 0.0 || d != std::floor(d) || d > 1.8e19) throw ConfigError("key '" + key + "': not a count: " + v);
  return static_cast<std::uint64_t>(d);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

const std::map<std::string, detail::Runner>& runners() {
  static const std::map<std::string, detail::Runner> r = {
      {"capacity-convergence", detail::capacity_convergence},
      {"fixed-time-symmetry", detail::fixed_time_symmetry},
      {"crt-covariance", detail::crt_covariance},
      {"girsanov-exactness", detail::girsanov_exactness},
      {"area-law", detail::area_law},
      {"first-passage-oracle", detail::first_passage_oracle},
      {"radial-mot", detail::radial_mot},
      {"reversibility", detail::reversibility},
      {"excursion-limit", detail::excursion_limit},
      {"sphere-mot", detail::sphere_mot},
  };
  return r;
}

}  // namespace

const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries = {
      {"capacity-convergence", 1, "radial Loewner chain in capacity parametrization, \"g_t'(0) = e^t\"",
       "forward radial chains: max |log g'_t(0) - t| over [0, T] decreases with fitted order >= min_order",
       {{"T", "1"}, {"steps", "1e-3, 5e-4, 2.5e-4"}, {"min_order", "0.9"}},
       {"kappa", "10"}},
      {"fixed-time-symmetry", 2, "reverse radial SLE at a fixed time \"has the law of forward radial SLE run for time t\"",
       "two-sample KS on Re and Im of the reverse map image of z0 against the forward inverse image g_T^{-1}(U_T z0)",
       {{"T", "0.25"}, {"step", "1e-3"}, {"z0", "0.4"}},
       {"kappa", "10"}},
      {"crt-covariance", 3, "mating-of-trees Brownian motion: \"Var(X_t) = Var(Y_t) = a^2|t|\", covariance -cos(4 pi/kappa) a^2 |t|",
       "variances, correlation and the X+Y / X-Y variances of the correlated Brownian motion at time T",
       {{"T", "1"}, {"step", "0.01"}, {"variance_tolerance", "0.03"}, {"corr_tolerance", "0.02"}},
       {"kappa", "16"}},
      {"girsanov-exactness", 4, "Girsanov reweighting of insertions, factor eps^{(a2^2 - a1^2)/2} e^{(a2 - a1)(phi, theta_eps)}",
       "weighted mean of the field at 8 probes shifts by (a2 - a1) G(., 0) within 5 standard errors",
       {{"grid", "128"}, {"eps", "0.024543692606170259"}, {"radius", "0.1"}, {"max_se", "5"}},
       {"gamma", "1"}},
      {"area-law", 5, "quantum area of the disk: \"inverse gamma distribution with shape parameter 1/2\"",
       "weighted one-sample KS of the total area of fixed-length disks against InverseGamma(1/2, b* ell^2)",
       {{"method", "logpolar"}, {"angles", "256"}, {"depth", "60"}, {"grid", "256"}, {"eps", "0.012271846303085129"},
        {"ell", "1"}, {"max_distance", "0.05"}},
       {"gamma", "1"}},
      {"first-passage-oracle", 6, "area as first passage: the disk is explored until \"the first time that 1 + X + Y = 0\"",
       "KS of the first-passage time of ell0 + X + Y against InverseGamma(1/2, ell0^2 / (2 sigma^2)); fixes b*",
       {{"ell0", "1"}, {"step_factor", "0.02"}, {"guard_factor", "1e4"}, {"max_censored", "0.01"}},
       {"kappa", "16"}},
      {"radial-mot", 7, "boundary lengths of radial SLE on a Liouville disk form the mating-of-trees Brownian motion",
       "pooled covariance of (dX, dY) per unit area time within 25%; L_t = ell0 + X_t + Y_t within 2%",
       {{"grid", "64"}, {"eps", "auto"}, {"T", "1"}, {"step", "1e-3"}, {"schedule", "50"}, {"boundary_nodes", "512"},
        {"inner_offset", "0.15"}, {"covariance_tolerance", "0.25"}, {"identity_tolerance", "0.02"}},
       {"kappa", "16"}},
      {"reversibility", 8, "\"Whole-plane SLE_kappa is reversible when kappa > 8\"",
       "P[tau_z < tau_w] against P[tau_{1/w} < tau_{1/z}] from independent whole-plane runs, plus conjugate and power checks",
       {{"T0", "6"}, {"T", "8"}, {"step", "1e-3"}, {"pairs", "1:2i, 2:0.5i, 1+1i:-3"}, {"conjugate", "0.5+1i"},
        {"max_censored", "0.05"}},
       {"kappa", "10"}},
      {"excursion-limit", 9, "the excursion arises as the small-start limit of the conditioned first-passage process",
       "KS distance at time t between the process from ell and from ell_min decreases with ell and is small at the last ell",
       {{"t", "0.5"}, {"ells", "0.05, 0.025"}, {"ell_min", "1e-3"}, {"max_distance", "0.03"}},
       {"gamma", "1"}},
      {"sphere-mot", 10, "sphere boundary length is a \"Brownian excursion ... conditioned to have duration at least 1\"",
       "durations >= 1 and the quadratic variation ratio of Z to L equal to cot^2(pi gamma^2 / 8) within 5%",
       {{"step", "1e-2"}, {"ell_min", "1e-3"}, {"max_steps", "100000"}, {"ratio_tolerance", "0.05"},
        {"extraction_pairs", "0"}, {"extraction_grid", "48"}, {"extraction_T0", "3"}, {"extraction_T", "1"}},
       {"gamma", "1"}},
  };
  return entries;
}

const CatalogEntry& find_experiment(std::string_view name) {
  for (const CatalogEntry& e : catalog()) {
    if (e.name == name) return e;
  }
  throw ConfigError("unknown experiment '" + std::string(name) + "' (see 'lab list')");
}

LqgParams ExperimentConfig::params() const {
  try {
    if (gamma) return LqgParams::from_gamma(*gamma);
    if (kappa) return LqgParams::from_kappa(*kappa);
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("exactly one of gamma or kappa is required");
}

std::string ExperimentConfig::text(const std::string& key) const {
  if (auto it = values.find(key); it != values.end()) return it->second;
  const CatalogEntry& e = find_experiment(experiment);
  if (auto it = e.defaults.find(key); it != e.defaults.end()) return it->second;
  throw ConfigError("experiment '" + experiment + "' has no key '" + key + "'");
}

double ExperimentConfig::number(const std::string& key) const { return to_number(key, text(key)); }

std::size_t ExperimentConfig::count(const std::string& key) const {
  return static_cast<std::size_t>(to_unsigned(key, text(key)));
}

std::vector<double> ExperimentConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split(text(key), ',')) out.push_back(to_number(key, item));
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value");
  return out;
}

std::size_t ExperimentConfig::sample_count() const {
  if (samples) return *samples;
  static const std::map<std::string, std::size_t> defaults = {
      {"capacity-convergence", 8},   {"fixed-time-symmetry", 2000}, {"crt-covariance", 100000},
      {"girsanov-exactness", 10000}, {"area-law", 5000},           {"first-passage-oracle", 100000},
      {"radial-mot", 8},             {"reversibility", 4000},      {"excursion-limit", 10000},
      {"sphere-mot", 10000}};
  return defaults.at(experiment);
}

std::map<std::string, std::string> ExperimentConfig::effective() const {
  std::map<std::string, std::string> m = find_experiment(experiment).defaults;
  for (const auto& [k, v] : values) m[k] = v;
  m["experiment"] = experiment;
  if (gamma) m["gamma"] = format(*gamma);
  if (kappa) m["kappa"] = format(*kappa);
  m["samples"] = std::to_string(sample_count());
  m["seed"] = std::to_string(seed);
  m["workers"] = std::to_string(workers);
  m["level"] = format(level);
  m["out"] = out.string();
  return m;
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key.empty()) throw ConfigError("empty key");
  if (v.empty()) throw ConfigError("key '" + key + "' has an empty value");
  if (key == "experiment") {
    c.experiment = v;
  } else if (key == "gamma") {
    c.gamma = to_number(key, v);
    c.kappa.reset();
  } else if (key == "kappa") {
    c.kappa = to_number(key, v);
    c.gamma.reset();
  } else if (key == "samples") {
    c.samples = static_cast<std::size_t>(to_unsigned(key, v));
  } else if (key == "seed") {
    c.seed = to_unsigned(key, v);
  } else if (key == "out") {
    c.out = v;
  } else if (key == "workers") {
    c.workers = static_cast<unsigned>(to_unsigned(key, v));
  } else if (key == "level") {
    c.level = to_number(key, v);
  } else {
    c.values[key] = v;
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(number) + ": repeated key '" + key + "'");
    if (key == "gamma" && seen.count("kappa")) throw ConfigError("both gamma and kappa given");
    if (key == "kappa" && seen.count("gamma")) throw ConfigError("both gamma and kappa given");
    apply_override(c, key, value);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  if (c.experiment.empty()) throw ConfigError("missing key 'experiment'");
  const CatalogEntry& e = find_experiment(c.experiment);
  if (c.gamma.has_value() == c.kappa.has_value()) throw ConfigError("exactly one of gamma or kappa is required");
  (void)c.params();
  for (const auto& [k, v] : c.values) {
    if (!kCommonKeys.count(k) && !e.defaults.count(k)) {
      throw ConfigError("unknown key '" + k + "' for experiment '" + c.experiment + "'");
    }
  }
  if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (c.sample_count() == 0) throw ConfigError("samples must be positive");
  if (c.workers == 0) throw ConfigError("workers must be positive");
  // every default must parse as the experiment reads it; numbers are checked here
  for (const auto& [k, v] : c.effective()) {
    if (k == "pairs") {
      for (const std::string& p : split(v, ',')) {
        const auto parts = split(p, ':');
        if (parts.size() != 2) throw ConfigError("pairs entries must read z:w, got " + p);
        parse_complex(parts[0]);
        parse_complex(parts[1]);
      }
    } else if (k == "method" && v != "logpolar" && v != "grid") {
      throw ConfigError("method must be logpolar or grid");
    } else if (k == "conjugate" || k == "z0") {
      parse_complex(v);
    }
  }
}

std::complex<double> parse_complex(std::string_view text) {
  std::string s;
  for (char ch : text) {
    if (ch != ' ') s += ch;
  }
  if (s.empty()) throw ConfigError("empty complex number");
  if (s.back() != 'i') return {to_number("complex", s), 0.0};
  s.pop_back();
  // split at the last sign that is not an exponent sign or the leading sign
  std::size_t cut = std::string::npos;
  for (std::size_t i = s.size(); i-- > 1;) {
    if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') {
      cut = i;
      break;
    }
  }
  auto imag_of = [](const std::string& t) {
    if (t.empty() || t == "+") return 1.0;
    if (t == "-") return -1.0;
    return to_number("complex", t[0] == '+' ? t.substr(1) : t);
  };
  if (cut == std::string::npos) return {0.0, imag_of(s)};
  return {to_number("complex", s.substr(0, cut)), imag_of(s.substr(cut))};
}

bool RunResult::passed() const {
  return std::all_of(reports.begin(), reports.end(), [](const stats::TestReport& r) { return r.passed; });
}

namespace detail {

void Context::csv(const std::string& name, const std::string& header, const std::function<void(std::ostream&)>& body) {
  const auto path = out / name;
  std::ofstream os(path);
  if (!os) throw DiagnosticError("cannot open " + path.string());
  os.precision(17);
  os << header << '\n';
  body(os);
  if (!os) throw DiagnosticError("failed writing " + path.string());
  result.artifacts.push_back(name);
}

void Context::plot(const std::string& name, const svg::Plot& p) {
  svg::write(p, out / name, provenance());
  result.artifacts.push_back(name);
}

std::map<std::string, std::string> Context::provenance() const {
  std::map<std::string, std::string> m = config.effective();
  m.erase("out");
  return m;
}

}  // namespace detail

RunResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  RunResult result;
  result.experiment = config.experiment;
  const std::filesystem::path out = config.out.empty() ? std::filesystem::path("results") / config.experiment : config.out;
  std::filesystem::create_directories(out);
  detail::Context ctx{config, config.params(), out, result};
  runners().at(config.experiment)(ctx);

  const LqgParams& p = ctx.params;
  nlohmann::json doc;
  doc["experiment"] = config.experiment;
  nlohmann::json params;
  for (const auto& [k, v] : ctx.provenance()) params["config"][k] = v;
  params["gamma"] = p.gamma;
  params["kappa"] = p.kappa;
  params["Q"] = p.Q;
  params["a2"] = p.a2;
  params["corr"] = p.corr;
  params["sum_variance"] = p.sum_variance();
  params["difference_variance"] = p.difference_variance();
  params["first_passage_scale"] = p.first_passage_scale();
  doc["params"] = params;
  doc["reports"] = nlohmann::json::array();
  for (const auto& r : result.reports) {
    auto j = r.to_json();
    j["metadata"]["seed"] = config.seed;
    doc["reports"].push_back(j);
  }
  doc["summary"] = result.summary;
  doc["artifacts"] = result.artifacts;
  doc["passed"] = result.passed();
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  doc["timestamp"] = stamp;
  std::ofstream os(out / "results.json");
  if (!os) throw DiagnosticError("cannot write " + (out / "results.json").string());
  os << doc.dump(2) << '\n';
  result.document = std::move(doc);
  return result;
}

}  // namespace lab::cli
