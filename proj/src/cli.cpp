#include "hqsd/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "hqsd/csv.hpp"
#include "hqsd/flow.hpp"
#include "hqsd/model.hpp"
#include "hqsd/stats.hpp"

namespace hqsd {

namespace fs = std::filesystem;

namespace {

constexpr std::pair<ExperimentKind, const char*> kKinds[] = {
    {ExperimentKind::check, "check"},     {ExperimentKind::flow, "flow"},
    {ExperimentKind::simulate, "simulate"}, {ExperimentKind::lln, "lln"},
    {ExperimentKind::qsd, "qsd"},         {ExperimentKind::spectral, "spectral"},
    {ExperimentKind::scaling, "scaling"}, {ExperimentKind::beta, "beta"},
    {ExperimentKind::convergence, "convergence"},
};

std::string spectral_name(SpectralMethod m) {
  return m == SpectralMethod::finite_difference ? "finite_difference" : "shooting";
}

// Value problems are raised without a line and re-raised by the caller with one.
struct ValueError {
  std::string message;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValueError{"expects a number, got '" + s + "'"};
  }
  return v;
}

long long parse_integer(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValueError{"expects an integer, got '" + s + "'"};
  }
  return v;
}

std::uint64_t parse_unsigned(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValueError{"expects a non-negative integer, got '" + s + "'"};
  }
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValueError{"has an empty list entry in '" + s + "'"};
    out.push_back(item);
  }
  if (out.empty()) throw ValueError{"expects a non-empty list"};
  return out;
}

struct Range {
  double lo;
  double hi;
  bool lo_open = false;
  bool hi_open = false;

  bool contains(double v) const {
    return (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
  std::string text() const {
    return std::string(lo_open ? "(" : "[") + format_double(lo) + ", " + format_double(hi) +
           (hi_open ? ")" : "]");
  }
};

void check_range(double v, const Range& r) {
  if (!r.contains(v)) throw ValueError{"value " + format_double(v) + " outside " + r.text()};
}

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

using Cfg = ExperimentConfig;

struct Field {
  std::string key;
  std::string help;
  std::function<void(Cfg&, const std::string&)> set;
  // nullopt: key omitted from the echo (unset optional value).
  std::function<std::optional<std::string>(const Cfg&)> get;
};

Field real_field(std::string key, double Cfg::*m, Range r, std::string help) {
  return {std::move(key), std::move(help),
          [m, r](Cfg& c, const std::string& s) {
            const double v = parse_real(s);
            check_range(v, r);
            c.*m = v;
          },
          [m](const Cfg& c) { return std::optional(format_double(c.*m)); }};
}

Field int_field(std::string key, int Cfg::*m, long long lo, long long hi, std::string help) {
  return {std::move(key), std::move(help),
          [m, lo, hi](Cfg& c, const std::string& s) {
            const long long v = parse_integer(s);
            if (v < lo || v > hi) {
              throw ValueError{"value " + s + " outside [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]"};
            }
            c.*m = static_cast<int>(v);
          },
          [m](const Cfg& c) { return std::optional(std::to_string(c.*m)); }};
}

Field count_field(std::string key, std::size_t Cfg::*m, long long lo, long long hi,
                  std::string help) {
  return {std::move(key), std::move(help),
          [m, lo, hi](Cfg& c, const std::string& s) {
            const long long v = parse_integer(s);
            if (v < lo || v > hi) {
              throw ValueError{"value " + s + " outside [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]"};
            }
            c.*m = static_cast<std::size_t>(v);
          },
          [m](const Cfg& c) { return std::optional(std::to_string(c.*m)); }};
}

// `optional_list`: an empty value is allowed on echo, and the key is omitted.
Field reals_field(std::string key, std::vector<double> Cfg::*m, Range r, bool optional_list,
                  std::string help) {
  return {std::move(key), std::move(help),
          [m, r](Cfg& c, const std::string& s) {
            std::vector<double> v;
            for (const auto& item : split_list(s)) {
              v.push_back(parse_real(item));
              check_range(v.back(), r);
            }
            c.*m = std::move(v);
          },
          [m, optional_list](const Cfg& c) -> std::optional<std::string> {
            if (optional_list && (c.*m).empty()) return std::nullopt;
            return join_reals(c.*m);
          }};
}

template <class Enum>
Field choice_field(std::string key, Enum Cfg::*m, std::vector<std::pair<Enum, std::string>> names,
                   std::string help) {
  return {std::move(key), std::move(help),
          [m, names](Cfg& c, const std::string& s) {
            std::string allowed;
            for (const auto& [e, n] : names) {
              if (n == s) {
                c.*m = e;
                return;
              }
              allowed += (allowed.empty() ? "" : ", ") + n;
            }
            throw ValueError{"unknown value '" + s + "' (expected one of: " + allowed + ")"};
          },
          [m, names](const Cfg& c) -> std::optional<std::string> {
            for (const auto& [e, n] : names) {
              if (e == c.*m) return n;
            }
            return std::nullopt;
          }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    std::vector<std::pair<ExperimentKind, std::string>> kinds;
    for (const auto& [k, n] : kKinds) kinds.emplace_back(k, n);
    f.push_back(choice_field("experiment", &Cfg::experiment, kinds, "experiment kind (required)"));
    f.push_back({"model", "builtin model name",
                 [](Cfg& c, const std::string& s) {
                   const auto names = builtin_names();
                   if (std::find(names.begin(), names.end(), s) == names.end()) {
                     std::string allowed;
                     for (const auto& n : names) allowed += (allowed.empty() ? "" : ", ") + n;
                     throw ValueError{"unknown model '" + s + "' (builtins: " + allowed + ")"};
                   }
                   c.model = s;
                 },
                 [](const Cfg& c) { return std::optional(c.model); }});
    f.push_back({"rates", "constant d x d rate table, row-major; replaces model",
                 [](Cfg& c, const std::string& s) {
                   std::vector<double> v;
                   for (const auto& item : split_list(s)) {
                     v.push_back(parse_real(item));
                     check_range(v.back(), {0.0, 1e6});
                   }
                   const auto d = static_cast<std::size_t>(std::lround(std::sqrt(v.size())));
                   if (d < 2 || d * d != v.size()) {
                     throw ValueError{"needs d*d entries with d >= 2, got " + std::to_string(v.size())};
                   }
                   c.rates = std::move(v);
                 },
                 [](const Cfg& c) -> std::optional<std::string> {
                   if (c.rates.empty()) return std::nullopt;
                   return join_reals(c.rates);
                 }});
    f.push_back(int_field("n_size", &Cfg::n_size, 1, 10000000, "population size N"));
    f.push_back(choice_field("scheme", &Cfg::scheme,
                             {{Scheme::euler_clamp, "euler_clamp"}, {Scheme::euler_reflect, "euler_reflect"}},
                             "positivity fix of the Euler step"));
    f.push_back(real_field("dt", &Cfg::dt, {0.0, 0.1, true, false}, "time step"));
    f.push_back(real_field("horizon", &Cfg::horizon, {0.0, 1e7, true, false},
                           "time horizon (path length, flow length or Fleming-Viot run length)"));
    f.push_back({"seed", "random seed; required for stochastic experiments",
                 [](Cfg& c, const std::string& s) { c.seed = parse_unsigned(s); },
                 [](const Cfg& c) -> std::optional<std::string> {
                   if (!c.seed) return std::nullopt;
                   return std::to_string(*c.seed);
                 }});
    f.push_back(int_field("workers", &Cfg::workers, 1, 1024, "worker threads"));
    f.push_back({"output", "output directory",
                 [](Cfg& c, const std::string& s) { c.output = s; },
                 [](const Cfg& c) { return std::optional(c.output); }});
    f.push_back(reals_field("start", &Cfg::start, {0.0, 1.0}, true,
                            "initial point x1,...,xd (barycenter when unset)"));
    f.push_back(count_field("paths", &Cfg::paths, 1, 100000000, "paths per batch"));
    f.push_back({"n_values", "ladder of N values, strictly increasing",
                 [](Cfg& c, const std::string& s) {
                   std::vector<int> v;
                   for (const auto& item : split_list(s)) {
                     const long long n = parse_integer(item);
                     if (n < 1 || n > 10000000) throw ValueError{"N value " + item + " outside [1, 10000000]"};
                     if (!v.empty() && n <= v.back()) throw ValueError{"N values must be strictly increasing"};
                     v.push_back(static_cast<int>(n));
                   }
                   c.n_values = std::move(v);
                 },
                 [](const Cfg& c) { return std::optional(join_ints(c.n_values)); }});
    f.push_back(reals_field("deltas", &Cfg::deltas, {0.0, 2.0, true, false}, false,
                            "deviation levels for the LLN check"));
    f.push_back(real_field("absorb_target", &Cfg::absorb_target, {0.0, 1.0},
                           "absorbed fraction required by the simulate claim"));
    f.push_back(count_field("particles", &Cfg::particles, 2, 10000000, "Fleming-Viot particles"));
    f.push_back(real_field("burn_in", &Cfg::burn_in, {0.0, 1e7}, "Fleming-Viot burn-in time"));
    f.push_back(real_field("eps", &Cfg::eps, {0.0, 0.5, false, true}, "killing margin (0: true boundary)"));
    f.push_back(reals_field("eps_list", &Cfg::eps_list, {0.0, 0.5, true, true}, false,
                            "killing margins for the shrink study"));
    f.push_back(count_field("tau_samples", &Cfg::tau_samples, 0, 100000000,
                            "absorption-time samples from the QSD"));
    f.push_back(real_field("tau_horizon", &Cfg::tau_horizon, {0.0, 1e9, true, false},
                           "censoring horizon for absorption times"));
    f.push_back(int_field("grid_resolution", &Cfg::grid_resolution, 2, 5000, "lattice resolution"));
    f.push_back(real_field("margin", &Cfg::margin, {0.0, 0.5, false, true},
                           "interior margin for the hypothesis audit"));
    f.push_back(real_field("lyapunov_delta", &Cfg::lyapunov_delta, {0.0, 0.5, true, true},
                           "collar width for the Lyapunov check"));
    f.push_back(count_field("grid_size", &Cfg::grid_size, 100, 10000000, "spectral grid size"));
    f.push_back(real_field("lambda_lo", &Cfg::lambda_lo, {0.0, 1e6, true, false}, "eigenvalue bracket low end"));
    f.push_back(real_field("lambda_hi", &Cfg::lambda_hi, {0.0, 1e6, true, false}, "eigenvalue bracket high end"));
    f.push_back(choice_field("spectral_method", &Cfg::spectral_method,
                             {{SpectralMethod::finite_difference, "finite_difference"},
                              {SpectralMethod::shooting, "shooting"}},
                             "spectral solver"));
    f.push_back(reals_field("attractor", &Cfg::attractor, {0.0, 1.0}, true,
                            "attractor candidate point (model hint when unset)"));
    f.push_back(real_field("radius", &Cfg::radius, {0.0, 2.0, true, false}, "attractor neighbourhood radius"));
    f.push_back(reals_field("probe_eps", &Cfg::probe_eps, {0.0, 1.0, true, false}, false,
                            "convergence tolerances for the attractor probe"));
    f.push_back(real_field("k_margin", &Cfg::k_margin, {0.0, 0.5, true, true},
                           "K = {min_i x_i >= k_margin}"));
    f.push_back(real_field("delta", &Cfg::delta, {0.0, 2.0, true, false}, "neighbourhood size for beta"));
    f.push_back(count_field("trials", &Cfg::trials, 1, 100000000, "paths per grid point for beta"));
    f.push_back({"attach_theta", "run Fleming-Viot for the beta comparisons",
                 [](Cfg& c, const std::string& s) {
                   if (s == "true" || s == "1" || s == "yes") {
                     c.attach_theta = true;
                   } else if (s == "false" || s == "0" || s == "no") {
                     c.attach_theta = false;
                   } else {
                     throw ValueError{"expects true or false, got '" + s + "'"};
                   }
                 },
                 [](const Cfg& c) { return std::optional(std::string(c.attach_theta ? "true" : "false")); }});
    return f;
  }();
  return fields;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "unknown";
}

bool needs_seed(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::check:
    case ExperimentKind::flow:
    case ExperimentKind::spectral:
      return false;
    default:
      return true;
  }
}

ConfigError::ConfigError(int line, const std::string& what)
    : InvalidArgument(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : schema()) by_key[f.key] = &f;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(line_no, "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(line_no, "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(line_no, "'" + key + "' has no value");
    try {
      it->second->set(c, value);
    } catch (const ValueError& e) {
      throw ConfigError(line_no, "'" + key + "' " + e.message);
    }
  }
  if (!seen.count("experiment")) throw ConfigError(0, "experiment required");
  if (!(c.burn_in < c.horizon) &&
      (c.experiment == ExperimentKind::qsd || c.experiment == ExperimentKind::convergence ||
       c.experiment == ExperimentKind::scaling || c.experiment == ExperimentKind::beta)) {
    throw ConfigError(0, "burn_in must be smaller than horizon");
  }
  if (!(c.lambda_lo < c.lambda_hi)) throw ConfigError(0, "lambda_lo must be smaller than lambda_hi");
  return c;
}

std::string echo_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : schema()) {
    if (const auto v = f.get(config)) out += f.key + " = " + *v + "\n";
  }
  return out;
}

std::string config_reference() {
  const ExperimentConfig defaults;
  std::string out;
  for (const auto& f : schema()) {
    const auto v = f.get(defaults);
    out += f.key + " (" + (v ? *v : std::string("unset")) + "): " + f.help + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// run

namespace {

struct Session {
  const ExperimentConfig& cfg;
  std::ostream& log;
  fs::path dir;
  std::vector<Verdict> verdicts;
  std::vector<std::string> files;

  void write(const std::string& name, const std::string& text) {
    write_text_file(dir / name, text);
    files.push_back(name);
  }

  void claim(std::string id, VerdictStatus status, double value, double bound, double lo, double hi) {
    Verdict v;
    v.id = std::move(id);
    v.status = status;
    v.value = value;
    v.bound = bound;
    v.ci_lo = lo;
    v.ci_hi = hi;
    log << v.line() << "\n";
    verdicts.push_back(std::move(v));
  }

  std::uint64_t seed() const { return cfg.seed.value_or(0); }

  BatchOptions batch_options(int coarsening = 1) const {
    BatchOptions bo;
    bo.workers = cfg.workers;
    bo.coarsening = coarsening;
    return bo;
  }

  FvOptions fv_options(const SimplexPoint& x0) const {
    FvOptions o;
    o.scheme = cfg.scheme;
    o.workers = cfg.workers;
    o.start_point = x0;
    return o;
  }
};

VerdictStatus pass_if(bool ok) { return ok ? VerdictStatus::pass : VerdictStatus::fail; }

std::string id_number(double v) {
  std::string s = format_double(v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

ModelSpec resolve_model(const ExperimentConfig& c) {
  if (!c.rates.empty()) {
    const auto d = static_cast<std::size_t>(std::lround(std::sqrt(c.rates.size())));
    return from_rates(constant_rates(d, c.rates, "custom"), c.n_size);
  }
  return builtin(c.model, c.n_size);
}

SimplexPoint resolve_start(const ExperimentConfig& c, const ModelSpec& m) {
  if (c.start.empty()) return barycenter(m.d);
  if (c.start.size() != m.d) {
    throw InvalidArgument("start has " + std::to_string(c.start.size()) + " coordinates, model has d = " +
                          std::to_string(m.d));
  }
  return SimplexPoint::validate(c.start, 1e-9);
}

std::vector<std::vector<double>> resolve_attractor(const ExperimentConfig& c, const ModelSpec& m) {
  if (!c.attractor.empty()) {
    if (c.attractor.size() != m.d) throw InvalidArgument("attractor dimension does not match the model");
    return {c.attractor};
  }
  if (m.attractor_hint.empty()) {
    throw InvalidArgument("model '" + m.name +
                          "' has no interior attractor candidate; the scaling study needs an attractor "
                          "inside the open simplex (set 'attractor' to probe one explicitly)");
  }
  return m.attractor_hint;
}

void run_check(Session& s, const ModelSpec& m) {
  const auto rep = check_hypotheses(m, s.cfg.grid_resolution, s.cfg.margin);
  s.write("hypotheses.txt", rep.to_text());
  s.log << rep.to_text();
  std::string csv = "coordinate,delta,grid_points,max_value,alpha,passed\n";
  for (std::size_t i = 0; i < m.d; ++i) {
    const auto ly = lyapunov_drift_check(m, i, s.cfg.lyapunov_delta, s.cfg.grid_resolution);
    csv += std::to_string(i + 1) + "," + format_double(ly.delta) + "," + std::to_string(ly.grid_points) + "," +
           format_double(ly.max_value) + "," + format_double(ly.alpha) + "," + (ly.passed ? "1" : "0") + "\n";
    s.claim("lyapunov_x" + std::to_string(i + 1), pass_if(ly.passed), ly.alpha, 0.0, ly.alpha, ly.alpha);
  }
  s.write("lyapunov.csv", csv);
}

void run_flow(Session& s, const ModelSpec& m, const SimplexPoint& x0) {
  s.write("flow.csv", integrate_flow(m, x0, s.cfg.horizon, s.cfg.dt).to_csv());
  std::vector<std::vector<double>> cand;
  if (!s.cfg.attractor.empty()) {
    cand = resolve_attractor(s.cfg, m);
  } else {
    cand = m.attractor_hint;
  }
  if (cand.empty()) return;
  ProbeOptions po;
  po.workers = s.cfg.workers;
  const auto probe = probe_attractor(m, cand, s.cfg.radius, s.cfg.probe_eps, s.cfg.grid_resolution, po);
  std::string text = "converged = " + std::string(probe.converged ? "true" : "false") + "\n" +
                     "message = " + probe.message + "\n" + "grid_points = " + std::to_string(probe.grid_points) +
                     "\n";
  for (std::size_t e = 0; e < probe.eps.size(); ++e) {
    text += "convergence_time_eps_" + format_double(probe.eps[e]) + " = " +
            format_double(probe.convergence_time[e]) + "\n";
  }
  s.write("probe.txt", text);
  s.log << text;
}

void run_simulate(Session& s, const ModelSpec& m, const SimplexPoint& x0) {
  const auto& c = s.cfg;
  const auto batch = simulate_batch(m, x0, c.horizon, c.dt, c.scheme, s.seed(), c.paths, s.batch_options());
  s.write("batch.csv", batch.to_csv());
  s.write("survival.csv", survival_curve(batch).to_csv());
  PathOptions po;
  po.record_every = std::max<std::size_t>(1, steps_for(c.horizon, c.dt) / 10000);
  s.write("path.csv", simulate_path(m, x0, c.horizon, c.dt, c.scheme, s.seed(), 0, po).to_csv());
  const auto& sum = batch.summary;
  s.log << "absorbed " << sum.absorbed << " of " << sum.count << ", mean tau " << format_double(sum.tau_mean)
        << "\n";
  const auto [lo, hi] = wilson_interval(sum.absorbed, sum.count);
  s.claim("absorption", pass_if(sum.absorbed_fraction >= c.absorb_target), sum.absorbed_fraction,
          c.absorb_target, lo, hi);
}

void run_lln(Session& s, const ModelSpec& m, const SimplexPoint& x0) {
  const auto& c = s.cfg;
  const auto rep = lln_bound_check(m, x0, c.horizon, c.deltas, c.n_values, c.dt, s.seed(), c.paths,
                                   s.batch_options(), c.scheme);
  s.write("lln.csv", rep.to_csv());
  for (const auto& r : rep.rows) {
    const auto status = r.vacuous ? VerdictStatus::vacuous : pass_if(r.passed);
    s.claim("lln_N" + std::to_string(r.n) + "_delta" + id_number(r.delta), status, r.p_hat, r.bound, r.ci_lo,
            r.ci_hi);
  }
  if (c.n_values.size() < 2) return;
  for (double dl : c.deltas) {
    bool decreasing = true;
    bool all_zero = true;
    for (std::size_t k = 0; k < c.n_values.size(); ++k) {
      const double p = rep.row(c.n_values[k], dl).p_hat;
      if (p > 0.0) all_zero = false;
      if (k > 0) {
        const double prev = rep.row(c.n_values[k - 1], dl).p_hat;
        if (!(p < prev || (p == 0.0 && prev == 0.0))) decreasing = false;
      }
    }
    const auto& first = rep.row(c.n_values.front(), dl);
    const auto& last = rep.row(c.n_values.back(), dl);
    s.claim("lln_trend_delta" + id_number(dl), all_zero ? VerdictStatus::vacuous : pass_if(decreasing),
            last.p_hat, first.p_hat, last.ci_lo, last.ci_hi);
  }
}

void run_qsd(Session& s, const ModelSpec& m, const SimplexPoint& x0) {
  const auto& c = s.cfg;
  const auto fv = fleming_viot(m, c.particles, c.horizon, c.dt, c.burn_in, s.seed(), c.eps, s.fv_options(x0));
  s.write("qsd.csv", fv.to_csv());
  s.write("qsd_sidecar.txt", fv.sidecar() + "\n");
  s.log << fv.sidecar() << "\n";
  if (c.tau_samples == 0) return;
  const auto fit = theta_from_qsd(m, fv, c.tau_horizon, c.dt, s.seed() + 1, c.tau_samples, s.batch_options(),
                                  c.scheme);
  std::string csv = "tau\n";
  for (double t : fit.taus) csv += format_double(t) + "\n";
  s.write("taus.csv", csv);
  if (!fit.warning.empty()) s.log << "warning: " << fit.warning << "\n";
  s.log << "theta from absorption times " << format_double(fit.theta) << " +- " << format_double(fit.se) << "\n";
  if (fit.taus.size() < 100) {
    s.claim("exponential_law", VerdictStatus::unavailable, 0.0, 0.0, 0.0, 0.0);
  } else {
    const auto ex = exponentiality_test(fit.taus);
    s.claim("exponential_law", pass_if(ex.passed), ex.modified, ex.critical, ex.modified, ex.modified);
  }
  const double gap = std::fabs(fv.theta - fit.theta);
  const double tol = 3.0 * std::hypot(fv.theta_se, fit.se);
  s.claim("theta_consistency", pass_if(gap <= tol), gap, tol, fit.ci_lo, fit.ci_hi);
}

void run_spectral(Session& s, const SimplexPoint& x0) {
  const auto& c = s.cfg;
  if (!c.rates.empty() || c.model != "logistic1d" || c.n_size != 1) {
    throw InvalidArgument("the spectral solver covers the logistic1d example with n_size = 1 only");
  }
  const auto sol = spectral_qsd(c.grid_size, c.lambda_lo, c.lambda_hi, c.spectral_method);
  s.write("spectral.csv", sol.to_csv());
  const std::string text = "lambda = " + format_double(sol.lambda) + "\nresidual = " + format_double(sol.residual) +
                           "\nmethod = " + spectral_name(sol.method) + "\nexponent_left = " +
                           format_double(sol.exponent_left) + "\nexponent_right = " +
                           format_double(sol.exponent_right) + "\n";
  s.write("spectral.txt", text);
  s.log << text;
  s.claim("spectral_residual", pass_if(sol.residual < 1e-6), sol.residual, 1e-6, sol.residual, sol.residual);
  if (!c.seed) return;
  const auto m = builtin("logistic1d", 1);
  const auto fv = fleming_viot(m, c.particles, c.horizon, c.dt, c.burn_in, s.seed(), 0.0, s.fv_options(x0));
  s.write("qsd.csv", fv.to_csv());
  const double w1 = wasserstein1_to_density(fv.support.marginal(0), sol.x, sol.g);
  s.claim("spectral_vs_particles", pass_if(w1 < 0.05), w1, 0.05, w1, w1);
  const double tol = 3.0 * fv.theta_se;
  s.claim("spectral_theta", pass_if(std::fabs(fv.theta - sol.lambda) <= tol), fv.theta, sol.lambda,
          fv.theta - tol, fv.theta + tol);
}

void run_scaling(Session& s, const ModelSpec& m) {
  const auto& c = s.cfg;
  if (c.n_values.size() < 2) throw InvalidArgument("scaling needs at least two N values to fit a slope");
  ProbeOptions po;
  po.workers = c.workers;
  const auto probe = probe_attractor(m, resolve_attractor(c, m), c.radius, c.probe_eps, c.grid_resolution, po);
  s.log << "attractor probe: " << probe.message << "\n";
  if (!probe.converged) throw InvalidArgument("attractor probe failed: " + probe.message);
  ScalingConfig sc;
  sc.particles = c.particles;
  sc.fv_horizon = c.horizon;
  sc.burn_in = c.burn_in;
  sc.dt = c.dt;
  sc.tau_samples = c.tau_samples;
  sc.tau_horizon = c.tau_horizon;
  sc.eps = c.eps;
  sc.scheme = c.scheme;
  sc.workers = c.workers;
  const auto rep = scaling_study(m, probe, c.n_values, sc, s.seed());
  s.write("scaling.csv", rep.to_csv());
  for (std::size_t k = 0; k < rep.qsds.size(); ++k) {
    s.write("qsd_N" + std::to_string(rep.points[k].n) + ".csv", rep.qsds[k].to_csv());
  }
  s.claim("scaling_slope", pass_if(rep.slope_lower >= 0.9), rep.slope_lower, 0.9, rep.slope_lower,
          rep.slope + kZ99 * rep.slope_se);
  const auto& first = rep.points.front();
  const auto& last = rep.points.back();
  s.claim("n_theta_nonincreasing", pass_if(rep.n_theta_nonincreasing), last.n_theta, first.n_theta,
          last.n_theta - kZ99 * last.n_theta_se, last.n_theta + kZ99 * last.n_theta_se);
}

void run_beta(Session& s, const ModelSpec& m, const SimplexPoint& x0) {
  const auto& c = s.cfg;
  BetaConfig bc;
  bc.k_margin = c.k_margin;
  bc.delta = c.delta;
  bc.n_size = c.n_size;
  bc.grid_resolution = c.grid_resolution;
  bc.dt = c.dt;
  bc.trials = c.trials;
  bc.scheme = c.scheme;
  bc.workers = c.workers;
  auto rep = beta_study(m, bc, s.seed());
  s.log << "beta (grid sup over K) = " << format_double(rep.beta) << ", inf absorption over U_K = "
        << format_double(rep.inf_absorb) << "\n";
  if (!c.attach_theta) {
    s.write("beta.csv", rep.to_csv());
    s.claim("beta_theta", VerdictStatus::unavailable, rep.beta, 0.0, rep.beta_ci_lo, rep.beta_ci_hi);
    s.claim("beta_mass_bound", VerdictStatus::unavailable, 0.0, 0.0, 0.0, 0.0);
    return;
  }
  const auto fv = fleming_viot(m, c.particles, c.horizon, c.dt, c.burn_in, s.seed() + 1, 0.0, s.fv_options(x0));
  rep.theta = fv.theta;
  rep.theta_se = fv.theta_se;
  rep.theta_attached = true;
  s.write("beta.csv", rep.to_csv());
  s.write("qsd.csv", fv.to_csv());

  const double survive = std::exp(-fv.theta);
  const double tol = 3.0 * std::hypot(rep.beta_se, survive * fv.theta_se);
  s.claim("beta_theta", pass_if(1.0 - rep.beta <= survive + tol), 1.0 - rep.beta, survive,
          1.0 - rep.beta_ci_hi, 1.0 - rep.beta_ci_lo);

  if (!rep.bound_available) {
    s.claim("beta_mass_bound", VerdictStatus::unavailable, 0.0, 0.0, 0.0, 0.0);
    return;
  }
  std::size_t in_collar = 0;
  for (std::size_t k = 0; k < fv.support.size(); ++k) {
    const auto p = fv.support.point(k);
    if (*std::min_element(p.begin(), p.end()) < c.k_margin) ++in_collar;
  }
  const auto [lo, hi] = wilson_interval(in_collar, fv.support.size());
  const double mass = static_cast<double>(in_collar) / static_cast<double>(fv.support.size());
  const auto status = rep.mass_bound >= 1.0 ? VerdictStatus::vacuous : pass_if(lo <= rep.mass_bound);
  s.claim("beta_mass_bound", status, mass, rep.mass_bound, lo, hi);
}

void run_convergence(Session& s, const ModelSpec& m, const SimplexPoint& x0) {
  const auto& c = s.cfg;
  std::string csv = "check,param,value,se\n";

  // Killing-margin shrink: distance of each ε-law to the ε = 0 law, against
  // the distance between two independent ε = 0 replicates.
  const auto base = fleming_viot(m, c.particles, c.horizon, c.dt, c.burn_in, s.seed(), 0.0, s.fv_options(x0));
  const auto twin =
      fleming_viot(m, c.particles, c.horizon, c.dt, c.burn_in, s.seed() + 1, 0.0, s.fv_options(x0));
  const double floor = measure_distance(base.support, twin.support);
  csv += "eps_floor,0," + format_double(floor) + ",\n";
  std::vector<double> eps_sorted(c.eps_list);
  std::sort(eps_sorted.rbegin(), eps_sorted.rend());
  std::vector<double> dist;
  for (double e : eps_sorted) {
    const auto est = fleming_viot(m, c.particles, c.horizon, c.dt, c.burn_in, s.seed(), e, s.fv_options(x0));
    dist.push_back(measure_distance(est.support, base.support));
    csv += "eps_distance," + format_double(e) + "," + format_double(dist.back()) + ",\n";
  }
  bool shrinking = true;
  for (std::size_t k = 1; k < dist.size(); ++k) {
    if (dist[k] > dist[k - 1] + floor) shrinking = false;
  }
  s.claim("eps_shrink", pass_if(shrinking), dist.back(), dist.front(), std::max(0.0, dist.back() - floor),
          dist.back() + floor);

  // dt halving on a shared Brownian path, and the two positivity schemes.
  const auto coarse = simulate_batch(m, x0, c.horizon, c.dt, c.scheme, s.seed(), c.paths, s.batch_options(2));
  const auto fine = simulate_batch(m, x0, c.horizon, 0.5 * c.dt, c.scheme, s.seed(), c.paths, s.batch_options());
  const Scheme other = c.scheme == Scheme::euler_clamp ? Scheme::euler_reflect : Scheme::euler_clamp;
  const auto alt = simulate_batch(m, x0, c.horizon, c.dt, other, s.seed(), c.paths, s.batch_options(2));
  csv += "mean_tau_dt," + format_double(c.dt) + "," + format_double(coarse.summary.tau_mean) + "," +
         format_double(coarse.summary.tau_se) + "\n";
  csv += "mean_tau_dt," + format_double(0.5 * c.dt) + "," + format_double(fine.summary.tau_mean) + "," +
         format_double(fine.summary.tau_se) + "\n";
  csv += "mean_tau_" + to_string(other) + "," + format_double(c.dt) + "," + format_double(alt.summary.tau_mean) +
         "," + format_double(alt.summary.tau_se) + "\n";
  s.write("convergence.csv", csv);
  if (coarse.summary.absorbed == 0 || fine.summary.absorbed == 0 || alt.summary.absorbed == 0) {
    s.claim("dt_halving", VerdictStatus::unavailable, 0.0, 0.05, 0.0, 0.0);
    s.claim("scheme_agreement", VerdictStatus::unavailable, 0.0, 0.0, 0.0, 0.0);
    return;
  }
  const double rel = std::fabs(fine.summary.tau_mean - coarse.summary.tau_mean) / coarse.summary.tau_mean;
  s.claim("dt_halving", pass_if(rel < 0.05), rel, 0.05, rel, rel);
  const double gap = std::fabs(alt.summary.tau_mean - coarse.summary.tau_mean);
  const double tol = 3.0 * std::hypot(alt.summary.tau_se, coarse.summary.tau_se);
  s.claim("scheme_agreement", pass_if(gap <= tol), gap, tol, gap, gap);
}

void dispatch(Session& s) {
  const auto& c = s.cfg;
  const auto m = resolve_model(c);
  const auto x0 = resolve_start(c, m);
  switch (c.experiment) {
    case ExperimentKind::check: run_check(s, m); break;
    case ExperimentKind::flow: run_flow(s, m, x0); break;
    case ExperimentKind::simulate: run_simulate(s, m, x0); break;
    case ExperimentKind::lln: run_lln(s, m, x0); break;
    case ExperimentKind::qsd: run_qsd(s, m, x0); break;
    case ExperimentKind::spectral: run_spectral(s, x0); break;
    case ExperimentKind::scaling: run_scaling(s, m); break;
    case ExperimentKind::beta: run_beta(s, m, x0); break;
    case ExperimentKind::convergence: run_convergence(s, m, x0); break;
  }
}

}  // namespace

int run(const ExperimentConfig& config, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  Session s{config, log, fs::path(config.output), {}, {}};
  int code = 0;
  std::string status = "ok";
  try {
    fs::create_directories(s.dir);
    s.write("config.txt", echo_config(config));
    if (needs_seed(config.experiment) && !config.seed) {
      throw ConfigError(0, "seed required for " + to_string(config.experiment) + " experiments");
    }
    dispatch(s);
    const bool failed = std::any_of(s.verdicts.begin(), s.verdicts.end(),
                                    [](const Verdict& v) { return v.status == VerdictStatus::fail; });
    if (failed) {
      code = 3;
      status = "claim_failed";
    }
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << "\n";
    code = 2;
    status = "numerical_error";
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    code = 1;
    status = "config_error";
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    code = 1;
    status = "io_error";
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    if (needs_seed(config.experiment) || !s.verdicts.empty()) {
      std::string text;
      for (const auto& v : s.verdicts) text += v.line() + "\n";
      s.write("verdicts.txt", text);
    }
    std::string manifest = "tool = hqsd\nversion = " + std::string(kToolVersion) +
                           "\nexperiment = " + to_string(config.experiment) +
                           "\nseed = " + (config.seed ? std::to_string(*config.seed) : "none") +
                           "\nworkers = " + std::to_string(config.workers) + "\nwall_time = " + format_double(wall) +
                           "\nstatus = " + status + "\nexit_code = " + std::to_string(code) + "\nfiles = ";
    for (std::size_t i = 0; i < s.files.size(); ++i) manifest += (i ? "," : "") + s.files[i];
    manifest += "\n";
    std::istringstream echo(echo_config(config));
    for (std::string line; std::getline(echo, line);) manifest += "config." + line + "\n";
    write_text_file(s.dir / "manifest.txt", manifest);
  } catch (const std::exception& e) {
    log << "error: cannot write outputs: " << e.what() << "\n";
    if (code == 0) code = 1;
  }
  return code;
}

}  // namespace hqsd
