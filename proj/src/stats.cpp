#include "hqsd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "hqsd/csv.hpp"
#include "hqsd/error.hpp"
#include "hqsd/linalg.hpp"
#include "hqsd/parallel.hpp"

namespace hqsd {

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // Keep the point estimate inside despite rounding at p = 0 or 1.
  return {std::clamp(std::min(center - half, p), 0.0, 1.0),
          std::clamp(std::max(center + half, p), 0.0, 1.0)};
}

// ---------------------------------------------------------------------------
// Survival

double SurvivalCurve::at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

double SurvivalCurve::se_at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return se[static_cast<std::size_t>(it - times.begin()) - 1];
}

std::string SurvivalCurve::to_csv() const {
  std::string out = "t,survival,se\n0,1,0\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    out += format_double(times[k]) + "," + format_double(survival[k]) + "," + format_double(se[k]) + "\n";
  }
  return out;
}

SurvivalCurve survival_curve(const std::vector<double>& times, const std::vector<bool>& absorbed) {
  if (times.size() != absorbed.size()) throw InvalidArgument("survival_curve: size mismatch");
  SurvivalCurve curve;
  curve.at_risk0 = times.size();
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return times[a] < times[b];
  });
  std::size_t at_risk = times.size();
  double s = 1.0, green = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = times[order[i]];
    std::size_t events = 0, leaving = 0;
    while (i < order.size() && times[order[i]] == t) {
      if (absorbed[order[i]]) ++events;
      ++leaving;
      ++i;
    }
    if (events > 0) {
      const double n = static_cast<double>(at_risk), dd = static_cast<double>(events);
      s *= 1.0 - dd / n;
      if (at_risk > events) green += dd / (n * (n - dd));
      curve.times.push_back(t);
      curve.survival.push_back(s);
      curve.se.push_back(at_risk > events ? s * std::sqrt(green) : 0.0);
    }
    at_risk -= leaving;
  }
  curve.fully_censored = curve.times.empty();
  return curve;
}

SurvivalCurve survival_curve(const TrajectoryBatch& batch) {
  const double run = static_cast<double>(steps_for(batch.horizon, batch.dt)) * batch.dt;
  std::vector<double> t;
  std::vector<bool> a;
  for (const auto& r : batch.records) {
    t.push_back(r.absorbed ? r.tau : run);
    a.push_back(r.absorbed);
  }
  return survival_curve(t, a);
}

// ---------------------------------------------------------------------------
// Exponentiality

double ks_distance_exponential(std::vector<double> samples, double rate) {
  if (samples.empty()) throw InvalidArgument("ks_distance_exponential: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double exponential_ks_critical(double level) {
  // Stephens (1974), exponential with estimated mean, modified statistic.
  struct Row {
    double level, value;
  };
  static constexpr Row table[] = {{0.15, 0.926}, {0.10, 0.990}, {0.05, 1.094}, {0.025, 1.190}, {0.01, 1.308}};
  for (const auto& r : table) {
    if (std::fabs(r.level - level) < 1e-12) return r.value;
  }
  throw InvalidArgument("exponentiality_test: unsupported level (use 0.15, 0.1, 0.05, 0.025 or 0.01)");
}

ExponentialityResult exponentiality_test(const std::vector<double>& taus, double level) {
  if (taus.size() < 100) {
    throw InvalidArgument("exponentiality_test: need at least 100 uncensored samples, got " +
                          std::to_string(taus.size()));
  }
  ExponentialityResult r;
  r.n = taus.size();
  r.level = level;
  r.critical = exponential_ks_critical(level);
  const double n = static_cast<double>(r.n);
  const double mean = std::accumulate(taus.begin(), taus.end(), 0.0) / n;
  if (!(mean > 0.0)) throw InvalidArgument("exponentiality_test: samples must have a positive mean");
  r.rate = 1.0 / mean;
  r.ks = ks_distance_exponential(taus, r.rate);
  r.modified = (r.ks - 0.2 / n) * (std::sqrt(n) + 0.26 + 0.5 / std::sqrt(n));
  r.passed = r.modified < r.critical;
  return r;
}

// ---------------------------------------------------------------------------
// Distances

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("wasserstein1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s / na;
  }
  // ∫ |F_a − F_b| over the merged breakpoints.
  std::size_t i = 0, j = 0;
  double prev = std::min(a.front(), b.front()), total = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    total += std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    while (i < a.size() && a[i] == next) ++i;
    while (j < b.size() && b[j] == next) ++j;
    prev = next;
  }
  return total;
}

double energy_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("energy_distance: empty sample");
  if (a.dim() != b.dim()) throw InvalidArgument("energy_distance: dimension mismatch");
  auto mean_dist = [](const EmpiricalMeasure& p, const EmpiricalMeasure& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < q.size(); ++j) s += euclidean_distance(p.point(i), q.point(j));
    }
    return s / (static_cast<double>(p.size()) * static_cast<double>(q.size()));
  };
  const double e = 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
  return std::sqrt(std::max(0.0, e));
}

std::string measure_distance_name(std::size_t d) { return d == 2 ? "w1_x1" : "energy"; }

namespace {

double distance_capped(const EmpiricalMeasure& a, const EmpiricalMeasure& b, std::size_t energy_cap) {
  if (a.dim() != b.dim()) throw InvalidArgument("distance: dimension mismatch");
  if (a.dim() == 2) return wasserstein1(a.marginal(0), b.marginal(0));
  return energy_distance(a.thinned(energy_cap), b.thinned(energy_cap));
}

}  // namespace

double measure_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  return distance_capped(a, b, DistanceOptions{}.energy_estimate_points);
}

double wasserstein1_to_density(std::vector<double> samples, const std::vector<double>& grid,
                               const std::vector<double>& density) {
  if (samples.empty()) throw InvalidArgument("wasserstein1_to_density: no samples");
  if (grid.size() != density.size() || grid.size() < 2) {
    throw InvalidArgument("wasserstein1_to_density: bad grid");
  }
  std::vector<double> nodes, cdf;
  nodes.reserve(grid.size() + 2);
  nodes.push_back(0.0);
  nodes.insert(nodes.end(), grid.begin(), grid.end());
  nodes.push_back(1.0);
  std::vector<double> dens;
  dens.push_back(density.front());
  dens.insert(dens.end(), density.begin(), density.end());
  dens.push_back(density.back());
  cdf.assign(nodes.size(), 0.0);
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    cdf[k] = cdf[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * (nodes[k] - nodes[k - 1]);
  }
  for (double& c : cdf) c /= cdf.back();
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());

  // |c − L| integrated over [u, v], L linear from lu to lv.
  auto piece = [](double c, double u, double v, double lu, double lv) {
    const double a = lu - c, b = lv - c, len = v - u;
    if (len <= 0.0) return 0.0;
    if ((a >= 0.0) == (b >= 0.0)) return 0.5 * (std::fabs(a) + std::fabs(b)) * len;
    const double root = len * a / (a - b);
    return 0.5 * std::fabs(a) * root + 0.5 * std::fabs(b) * (len - root);
  };

  double total = 0.0;
  std::size_t s = 0;
  // Samples below 0 or above 1 (none for simplex marginals) would add tails.
  while (s < samples.size() && samples[s] <= 0.0) ++s;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    double u = nodes[k - 1];
    const double lo = nodes[k - 1], hi = nodes[k];
    auto lin = [&](double x) { return cdf[k - 1] + (cdf[k] - cdf[k - 1]) * (x - lo) / (hi - lo); };
    while (s < samples.size() && samples[s] < hi) {
      const double v = samples[s];
      total += piece(static_cast<double>(s) / n, u, v, lin(u), lin(v));
      while (s < samples.size() && samples[s] == v) ++s;
      u = v;
    }
    total += piece(static_cast<double>(s) / n, u, hi, lin(u), lin(hi));
  }
  return total;
}

DistanceReport qsd_vs_invariant(const EmpiricalMeasure& qsd, const EmpiricalMeasure& invariant,
                                std::uint64_t seed, const DistanceOptions& options) {
  if (qsd.empty() || invariant.empty()) throw InvalidArgument("qsd_vs_invariant: empty sample set");
  if (qsd.dim() != invariant.dim()) throw InvalidArgument("qsd_vs_invariant: dimension mismatch");
  DistanceReport rep;
  rep.metric = measure_distance_name(qsd.dim());
  rep.size_a = qsd.size();
  rep.size_b = invariant.size();
  rep.value = distance_capped(qsd, invariant, options.energy_estimate_points);

  const std::size_t cap = qsd.dim() == 2 ? options.w1_points : options.energy_points;
  const auto a = qsd.thinned(cap);
  const auto b = invariant.thinned(cap);
  const CounterRng rng(seed);
  std::vector<double> boot(options.resamples);
  for (std::size_t r = 0; r < options.resamples; ++r) {
    EmpiricalMeasure ra(a.dim()), rb(b.dim());
    ra.reserve(a.size());
    rb.reserve(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ra.add(a.point(rng.below(Purpose::bootstrap, 2 * r, i, a.size())));
    for (std::size_t i = 0; i < b.size(); ++i) rb.add(b.point(rng.below(Purpose::bootstrap, 2 * r + 1, i, b.size())));
    boot[r] = distance_capped(ra, rb, cap);
  }
  if (boot.empty()) {
    rep.ci_lo = rep.ci_hi = rep.value;
    return rep;
  }
  std::sort(boot.begin(), boot.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(boot.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, boot.size() - 1);
    return boot[lo] + (pos - static_cast<double>(lo)) * (boot[hi] - boot[lo]);
  };
  rep.ci_lo = std::min(quantile(0.005), rep.value);
  rep.ci_hi = std::max(quantile(0.995), rep.value);
  return rep;
}

DistanceTrend qsd_vs_invariant_sequence(const std::vector<int>& n_values,
                                        const std::vector<EmpiricalMeasure>& qsds,
                                        const EmpiricalMeasure& invariant, std::uint64_t seed,
                                        const DistanceOptions& options) {
  if (n_values.size() != qsds.size() || qsds.empty()) {
    throw InvalidArgument("qsd_vs_invariant_sequence: need one estimate per N");
  }
  DistanceTrend trend;
  trend.n_values = n_values;
  for (std::size_t k = 0; k < qsds.size(); ++k) {
    trend.reports.push_back(qsd_vs_invariant(qsds[k], invariant, seed + k, options));
  }
  trend.decreasing = true;
  trend.min_relative_drop = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < qsds.size(); ++k) {
    const double prev = trend.reports[k - 1].value, cur = trend.reports[k].value;
    if (!(cur < prev)) trend.decreasing = false;
    trend.min_relative_drop = std::min(trend.min_relative_drop, prev > 0.0 ? 1.0 - cur / prev : 0.0);
  }
  if (qsds.size() < 2) trend.min_relative_drop = 0.0;
  return trend;
}

// ---------------------------------------------------------------------------
// Law of large numbers

double sigma_sup_norm(const ModelSpec& model, std::size_t points) {
  const std::size_t d = model.d;
  // Smallest resolution whose strictly interior lattice has >= points entries.
  int r = static_cast<int>(d);
  auto interior_count = [&](int res) {
    double c = 1.0;  // C(res − 1, d − 1)
    for (std::size_t i = 1; i < d; ++i) c = c * static_cast<double>(res - static_cast<int>(i)) / static_cast<double>(i);
    return c;
  };
  while (interior_count(r) < static_cast<double>(points)) ++r;
  double best = 0.0;
  for (const auto& p : simplex_lattice(d, r, 1)) {
    best = std::max(best, operator_norm(model.eval_sigma(p.coords()), d, model.l));
  }
  return best;
}

double lln_bound(double horizon, double sigma_sup, int n, double delta) {
  return horizon * sigma_sup / (static_cast<double>(n) * delta);
}

const LlnRow& LlnReport::row(int n, double delta) const {
  for (const auto& r : rows) {
    if (r.n == n && r.delta == delta) return r;
  }
  throw InvalidArgument("LlnReport: no row for the requested (N, delta)");
}

std::string LlnReport::to_csv() const {
  std::string out = "N,delta,count,exceed,p_hat,ci_lo,ci_hi,bound,bound_delta2,vacuous,pass\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n) + "," + format_double(r.delta) + "," + std::to_string(r.count) + "," +
           std::to_string(r.exceed) + "," + format_double(r.p_hat) + "," + format_double(r.ci_lo) + "," +
           format_double(r.ci_hi) + "," + format_double(r.bound) + "," + format_double(r.bound_delta2) +
           "," + (r.vacuous ? "1" : "0") + "," + (r.passed ? "1" : "0") + "\n";
  }
  return out;
}

LlnReport lln_bound_check(const ModelSpec& model, const SimplexPoint& x0, double horizon,
                          const std::vector<double>& deltas, const std::vector<int>& n_values,
                          double dt, std::uint64_t seed, std::size_t count,
                          const BatchOptions& options, Scheme scheme) {
  if (deltas.empty() || n_values.empty()) throw InvalidArgument("lln_bound_check: empty delta or N list");
  for (double dl : deltas) {
    if (!(dl > 0.0)) throw InvalidArgument("lln_bound_check: delta must be positive");
  }
  LlnReport rep;
  rep.horizon = horizon;
  rep.sigma_sup = sigma_sup_norm(model);
  rep.lipschitz = model.lipschitz_bound;
  for (int n : n_values) {
    if (n < 1) throw InvalidArgument("lln_bound_check: N must be >= 1");
    const auto m = model.with_size(n);
    const auto dev = deviation_batch(m, x0, horizon, dt, scheme, seed, count, options);
    std::vector<double> values;
    values.reserve(dev.size());
    for (const auto& s : dev) values.push_back(s.value);
    for (double dl : deltas) {
      LlnRow row;
      row.n = n;
      row.delta = dl;
      row.count = count;
      row.exceed = static_cast<std::size_t>(
          std::count_if(values.begin(), values.end(), [&](double v) { return v >= dl; }));
      row.p_hat = static_cast<double>(row.exceed) / static_cast<double>(count);
      std::tie(row.ci_lo, row.ci_hi) = wilson_interval(row.exceed, count);
      const double nd = static_cast<double>(n);
      row.bound = lln_bound(horizon, rep.sigma_sup, n, dl);
      row.bound_delta2 = horizon * rep.sigma_sup * std::exp(rep.lipschitz * horizon) / (nd * dl * dl);
      row.vacuous = row.bound >= 1.0;
      row.passed = row.vacuous || row.ci_hi <= row.bound;
      row.passed_delta2 = row.bound_delta2 >= 1.0 || row.ci_hi <= row.bound_delta2;
      rep.rows.push_back(row);
    }
    rep.deviations.push_back(std::move(values));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Scaling

LineFit weighted_line_fit(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& se) {
  if (x.size() != y.size() || x.size() != se.size() || x.size() < 2) {
    throw InvalidArgument("weighted_line_fit: need at least two points");
  }
  double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(se[i] > 0.0)) throw InvalidArgument("weighted_line_fit: standard errors must be positive");
    const double w = 1.0 / (se[i] * se[i]);
    s += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = s * sxx - sx * sx;
  if (!(det > 0.0)) throw InvalidArgument("weighted_line_fit: x values must not all coincide");
  LineFit fit;
  fit.slope = (s * sxy - sx * sy) / det;
  fit.intercept = (sxx * sy - sx * sxy) / det;
  fit.slope_se = std::sqrt(s / det);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = (y[i] - fit.intercept - fit.slope * x[i]) / se[i];
    fit.chi2 += r * r;
  }
  return fit;
}

std::string ScalingReport::to_csv() const {
  std::string out = "N,theta,theta_se,mean_tau,tau_se,N_theta,N_theta_se,samples,censored\n";
  for (const auto& p : points) {
    out += std::to_string(p.n) + "," + format_double(p.theta) + "," + format_double(p.theta_se) + "," +
           format_double(p.mean_tau) + "," + format_double(p.tau_se) + "," + format_double(p.n_theta) +
           "," + format_double(p.n_theta_se) + "," + std::to_string(p.tau_samples) + "," +
           std::to_string(p.censored) + "\n";
  }
  return out;
}

ScalingReport scaling_study(const ModelSpec& model, const AttractorProbe& probe,
                            const std::vector<int>& n_values, const ScalingConfig& config,
                            std::uint64_t seed) {
  if (!probe.converged || probe.candidate.empty()) {
    throw InvalidArgument("scaling_study: no interior attractor has been certified for model '" +
                          model.name + "'; run probe_attractor with an interior candidate first" +
                          (probe.message.empty() ? "" : " (" + probe.message + ")"));
  }
  if (n_values.size() < 2) throw InvalidArgument("scaling_study: at least two N values are needed to fit a slope");
  for (std::size_t k = 1; k < n_values.size(); ++k) {
    if (n_values[k] <= n_values[k - 1]) throw InvalidArgument("scaling_study: N values must increase");
  }
  ScalingReport rep;
  FvOptions fv;
  fv.scheme = config.scheme;
  fv.workers = config.workers;
  fv.coarsening = config.coarsening;
  fv.start_point = validate_simplex(probe.candidate.front());
  BatchOptions bo;
  bo.workers = config.workers;
  bo.coarsening = config.coarsening;
  bo.extra_threshold = config.eps;
  for (int n : n_values) {
    const auto m = model.with_size(n);
    auto qsd = fleming_viot(m, config.particles, config.fv_horizon, config.dt, config.burn_in, seed,
                            config.eps, fv);
    const auto fit = theta_from_qsd(m, qsd, config.tau_horizon, config.dt, seed + 1, config.tau_samples,
                                    bo, config.scheme);
    ScalingPoint p;
    p.n = n;
    p.theta = qsd.theta;
    p.theta_se = qsd.theta_se;
    p.tau_samples = fit.samples;
    p.censored = fit.censored;
    p.ks = fit.ks_distance;
    const double k = static_cast<double>(fit.taus.size());
    if (fit.censored == 0) {
      p.mean_tau = fit.mean_tau;
      double ss = 0.0;
      for (double t : fit.taus) ss += (t - p.mean_tau) * (t - p.mean_tau);
      p.tau_se = std::sqrt(ss / (k - 1.0) / k);
    } else {
      p.mean_tau = 1.0 / fit.theta;
      p.tau_se = p.mean_tau / std::sqrt(k);
    }
    p.n_theta = n * p.theta;
    p.n_theta_se = n * p.theta_se;
    rep.points.push_back(p);
    rep.qsds.push_back(std::move(qsd));
  }
  std::vector<double> lx, ly, ls;
  for (const auto& p : rep.points) {
    lx.push_back(std::log(static_cast<double>(p.n)));
    ly.push_back(std::log(p.mean_tau));
    ls.push_back(p.tau_se / p.mean_tau);
  }
  const auto fit = weighted_line_fit(lx, ly, ls);
  rep.slope = fit.slope;
  rep.intercept = fit.intercept;
  rep.slope_se = fit.slope_se;
  rep.chi2 = fit.chi2;
  rep.slope_lower = fit.slope - kZ99 * fit.slope_se;
  rep.n_theta_nonincreasing = true;
  for (std::size_t k = 1; k < rep.points.size(); ++k) {
    const auto& a = rep.points[k - 1];
    const auto& b = rep.points[k];
    const double tol = kZ99 * std::hypot(a.n_theta_se, b.n_theta_se);
    if (b.n_theta > a.n_theta + tol) rep.n_theta_nonincreasing = false;
  }
  rep.consistent = rep.slope_lower >= 0.9 && rep.n_theta_nonincreasing;
  return rep;
}

// ---------------------------------------------------------------------------
// β_{δ,K}(N)

std::string BetaReport::to_csv() const {
  const std::size_t d = k_points.empty() ? (collar_points.empty() ? 0 : collar_points.front().x.size())
                                         : k_points.front().x.size();
  std::string out = "set," + coord_header(d) + ",trials,hits,p_hat,se\n";
  auto rows = [&](const std::vector<BetaPoint>& pts, const char* tag) {
    for (const auto& p : pts) {
      out += tag;
      for (double v : p.x) out += "," + format_double(v);
      out += "," + std::to_string(p.trials) + "," + std::to_string(p.hits) + "," + format_double(p.p_hat) +
             "," + format_double(p.se) + "\n";
    }
  };
  rows(k_points, "K");
  rows(collar_points, "U_K");
  return out;
}

BetaReport beta_study(const ModelSpec& model, const BetaConfig& config, std::uint64_t seed) {
  if (!(config.delta > 0.0)) throw InvalidArgument("beta_study: delta must be positive");
  if (!(config.k_margin > 0.0)) throw InvalidArgument("beta_study: K margin must be positive");
  if (config.trials < 1) throw InvalidArgument("beta_study: trials must be >= 1");
  const auto m = model.with_size(config.n_size);
  const auto k_grid = simplex_lattice_with_margin(m.d, config.grid_resolution, config.k_margin);
  if (k_grid.empty()) throw InvalidArgument("beta_study: K has no grid points at this resolution");
  std::vector<SimplexPoint> collar;
  for (const auto& p : simplex_lattice(m.d, config.grid_resolution, 1)) {
    if (p.min_coord() < config.k_margin) collar.push_back(p);
  }

  BetaReport rep;
  rep.config = config;
  BatchOptions bo;
  bo.workers = config.workers;
  auto point_seed = [&](std::size_t idx) { return seed + 0x9E3779B97F4A7C15ULL * (idx + 1); };
  auto finish = [](BetaPoint& bp) {
    bp.p_hat = static_cast<double>(bp.hits) / static_cast<double>(bp.trials);
    bp.se = std::sqrt(bp.p_hat * (1.0 - bp.p_hat) / static_cast<double>(bp.trials));
  };

  std::size_t best = 0;
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    const auto target = integrate_flow(m, k_grid[i], 1.0, config.dt).final_state();
    const auto batch = simulate_batch(m, k_grid[i], 1.0, config.dt, config.scheme, point_seed(i), config.trials, bo);
    BetaPoint bp;
    bp.x = k_grid[i].vec();
    bp.trials = config.trials;
    for (const auto& r : batch.records) {
      if (euclidean_distance(r.final_state, target.coords()) >= config.delta) ++bp.hits;
    }
    finish(bp);
    if (rep.k_points.empty() || bp.p_hat > rep.beta) {
      rep.beta = bp.p_hat;
      best = i;
    }
    rep.k_points.push_back(std::move(bp));
  }
  rep.beta_se = rep.k_points[best].se;
  std::tie(rep.beta_ci_lo, rep.beta_ci_hi) = wilson_interval(rep.k_points[best].hits, config.trials);

  rep.inf_absorb = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < collar.size(); ++i) {
    const auto batch = simulate_batch(m, collar[i], 1.0, config.dt, config.scheme,
                                      point_seed(k_grid.size() + i), config.trials, bo);
    BetaPoint bp;
    bp.x = collar[i].vec();
    bp.trials = config.trials;
    bp.hits = batch.summary.absorbed;
    finish(bp);
    rep.inf_absorb = std::min(rep.inf_absorb, bp.p_hat);
    rep.collar_points.push_back(std::move(bp));
  }
  if (collar.empty()) rep.inf_absorb = 0.0;
  rep.bound_available = rep.inf_absorb > 0.0;
  rep.mass_bound = rep.bound_available ? rep.beta / rep.inf_absorb : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

// ---------------------------------------------------------------------------
// Verdicts

std::string to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::pass: return "PASS";
    case VerdictStatus::fail: return "FAIL";
    case VerdictStatus::vacuous: return "VACUOUS";
    case VerdictStatus::unavailable: return "UNAVAILABLE";
  }
  return "UNAVAILABLE";
}

std::string Verdict::line() const {
  return "CLAIM " + id + ": " + to_string(status) + " value=" + format_double(value) +
         " bound=" + format_double(bound) + " ci=[" + format_double(ci_lo) + "," + format_double(ci_hi) + "]";
}

}  // namespace hqsd
