#include "hqsd/qsd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hqsd/csv.hpp"
#include "hqsd/error.hpp"
#include "hqsd/parallel.hpp"
#include "hqsd/stats.hpp"

namespace hqsd {

std::string QsdEstimate::sidecar() const {
  return "theta=" + format_double(theta) + " se=" + format_double(theta_se) + " method=" + method +
         " eps=" + format_double(eps) + "\n";
}

// ---------------------------------------------------------------------------
// Fleming–Viot

QsdEstimate fleming_viot(const ModelSpec& model, std::size_t particles, double horizon, double dt,
                         double burn_in, std::uint64_t seed, double eps,
                         const FvOptions& options) {
  if (particles < 2) {
    throw InvalidArgument("fleming_viot: at least 2 particles are required (a killed particle "
                          "needs a survivor to jump to)");
  }
  if (particles > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("fleming_viot: particle count exceeds the stream id range");
  }
  if (!(dt > 0.0)) throw InvalidArgument("fleming_viot: dt must be positive");
  if (!(burn_in >= 0.0 && burn_in < horizon)) {
    throw InvalidArgument("fleming_viot: need 0 <= burn_in < horizon");
  }
  if (!(eps >= 0.0)) throw InvalidArgument("fleming_viot: killing margin must be >= 0");
  if (!(options.snapshot_interval > 0.0)) {
    throw InvalidArgument("fleming_viot: snapshot_interval must be positive");
  }

  const std::size_t d = model.d;
  const std::size_t m = particles;
  const CounterRng rng(seed);
  std::size_t w = static_cast<std::size_t>(options.workers <= 0 ? default_workers() : options.workers);
  w = std::min(w, m);
  std::vector<EulerStepper> steppers;
  steppers.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    steppers.emplace_back(model, dt, options.scheme, seed, options.coarsening, eps);
  }
  const double threshold = steppers.front().threshold();

  std::vector<double> pos(m * d);
  for (std::size_t j = 0; j < m; ++j) {
    std::span<const double> start;
    std::vector<double> fallback;
    if (options.start_set) {
      if (options.start_set->dim() != d || options.start_set->empty()) {
        throw InvalidArgument("fleming_viot: start set is empty or has the wrong dimension");
      }
      start = options.start_set->point(rng.below(Purpose::initial, j, 0, options.start_set->size()));
    } else {
      fallback = options.start_point ? options.start_point->vec() : barycenter(d).vec();
      if (fallback.size() != d) throw InvalidArgument("fleming_viot: start point dimension mismatch");
      start = fallback;
    }
    if (*std::min_element(start.begin(), start.end()) <= threshold) {
      throw InvalidArgument("fleming_viot: start " + format_coords(start) +
                            " is already inside the killing boundary");
    }
    std::copy(start.begin(), start.end(), pos.begin() + static_cast<std::ptrdiff_t>(j * d));
  }

  const std::size_t steps = steps_for(horizon, dt);
  const std::size_t burn_steps = burn_in > 0.0 ? steps_for(burn_in, dt) : 0;
  if (burn_steps >= steps) throw InvalidArgument("fleming_viot: burn_in leaves no sampling time");
  const std::size_t post_steps = steps - burn_steps;
  const auto snap_steps = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(options.snapshot_interval / dt)));
  const std::size_t batches = std::max<std::size_t>(1, std::min(options.theta_batches, post_steps));
  std::vector<std::size_t> batch_events(batches, 0), batch_steps(batches, 0);

  QsdEstimate est;
  est.support = EmpiricalMeasure(d);
  est.support.reserve(m * (post_steps / snap_steps + 1));
  est.method = "fleming_viot";
  est.eps = eps;
  est.burn_in = static_cast<double>(burn_steps) * dt;
  est.particles = m;

  std::vector<char> killed(m, 0);
  std::vector<std::size_t> survivors;
  survivors.reserve(m);
  bool snapped = false;
  for (std::size_t k = 1; k <= steps; ++k) {
    parallel_for(m, static_cast<int>(w), [&](std::size_t j, int t) {
      killed[j] = steppers[static_cast<std::size_t>(t)].step(
          std::span<double>(pos.data() + j * d, d), static_cast<std::uint32_t>(j), k - 1);
    });
    survivors.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (!killed[j]) survivors.push_back(j);
    }
    if (survivors.empty()) {
      throw NumericalError("fleming_viot: all " + std::to_string(m) +
                           " particles were killed in the same step (t=" +
                           format_double(static_cast<double>(k) * dt) +
                           "); reduce dt or increase the particle count");
    }
    std::size_t events = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!killed[j]) continue;
      const std::size_t pick = survivors[rng.below(Purpose::resample, k, events, survivors.size())];
      std::copy_n(pos.begin() + static_cast<std::ptrdiff_t>(pick * d), d,
                  pos.begin() + static_cast<std::ptrdiff_t>(j * d));
      ++events;
    }
    if (k > burn_steps) {
      const std::size_t local = k - burn_steps;
      const std::size_t b = (local - 1) * batches / post_steps;
      batch_events[b] += events;
      ++batch_steps[b];
      est.events += events;
      if (local % snap_steps == 0 || (k == steps && !snapped)) {
        for (std::size_t j = 0; j < m; ++j) est.support.add({pos.data() + j * d, d});
        snapped = true;
      }
    }
  }

  est.elapsed = static_cast<double>(post_steps) * dt;
  const double md = static_cast<double>(m);
  est.theta = static_cast<double>(est.events) / (md * est.elapsed);
  if (batches > 1) {
    std::vector<double> rates(batches);
    for (std::size_t b = 0; b < batches; ++b) {
      rates[b] = static_cast<double>(batch_events[b]) / (md * static_cast<double>(batch_steps[b]) * dt);
    }
    const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(batches);
    double ss = 0.0;
    for (double r : rates) ss += (r - mean) * (r - mean);
    est.theta_se = std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
  } else {
    est.theta_se = std::sqrt(static_cast<double>(est.events)) / (md * est.elapsed);
  }
  return est;
}

// ---------------------------------------------------------------------------
// Pruning

QsdEstimate pruning_estimate(const ModelSpec& model, const SimplexPoint& x0, double t, double dt,
                             std::uint64_t seed, std::size_t trials, const BatchOptions& options,
                             Scheme scheme) {
  if (trials < 1) throw InvalidArgument("pruning_estimate: trials must be >= 1");
  if (!(t > 0.0)) throw InvalidArgument("pruning_estimate: t must be positive");
  const auto batch = simulate_batch(model, x0, t, dt, scheme, seed, trials, options);
  QsdEstimate est;
  est.support = EmpiricalMeasure(model.d);
  for (const auto& r : batch.records) {
    if (!r.absorbed) est.support.add(r.final_state);
  }
  const std::size_t alive = est.support.size();
  if (alive == 0) {
    throw NumericalError("pruning_estimate: no path survived to t=" + format_double(t) +
                         "; use a smaller t or more trials");
  }
  const double elapsed = static_cast<double>(steps_for(t, dt)) * dt;
  const double p = static_cast<double>(alive) / static_cast<double>(trials);
  est.method = "pruning";
  est.particles = trials;
  est.events = trials - alive;
  est.elapsed = elapsed;
  est.theta = alive < trials ? -std::log(p) / elapsed : 0.0;
  est.theta_se = std::sqrt((1.0 - p) / (p * static_cast<double>(trials))) / elapsed;
  return est;
}

// ---------------------------------------------------------------------------
// Spectral solver for the logistic example

namespace {

// h'' = 2h' − 2λh/(x(1−x)) from the left; k'' = −2k' − 2λk/(y(1−y)) in
// y = 1 − x from the right.
struct Side {
  std::vector<double> value;  // at grid points, in integration order
  double slope_end = 0.0;     // derivative at the last point (own variable)
};

Side integrate_side(double lambda, std::size_t n, std::size_t count, bool from_right) {
  const double step = 1.0 / static_cast<double>(n + 1);
  const double sgn = from_right ? -1.0 : 1.0;
  auto rhs = [&](double s, double u, double du) {
    return 2.0 * sgn * du - 2.0 * lambda * u / (s * (1.0 - s));
  };
  double a2, a3;
  if (!from_right) {
    a2 = 1.0 - lambda;
    a3 = (2.0 * a2 - lambda * (a2 + 1.0)) / 3.0;
  } else {
    a2 = -1.0 - lambda;
    a3 = -(2.0 * a2 + lambda * (a2 + 1.0)) / 3.0;
  }
  double s = step;
  double u = s + a2 * s * s + a3 * s * s * s;
  double du = 1.0 + 2.0 * a2 * s + 3.0 * a3 * s * s;
  Side side;
  side.value.reserve(count);
  side.value.push_back(u);
  for (std::size_t k = 1; k < count; ++k) {
    const double k1u = du, k1v = rhs(s, u, du);
    const double k2u = du + 0.5 * step * k1v, k2v = rhs(s + 0.5 * step, u + 0.5 * step * k1u, du + 0.5 * step * k1v);
    const double k3u = du + 0.5 * step * k2v, k3v = rhs(s + 0.5 * step, u + 0.5 * step * k2u, du + 0.5 * step * k2v);
    const double k4u = du + step * k3v, k4v = rhs(s + step, u + step * k3u, du + step * k3v);
    u += step / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    du += step / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    s = static_cast<double>(k + 1) * step;
    side.value.push_back(u);
  }
  side.slope_end = du;
  return side;
}

std::size_t match_index(std::size_t n) { return (n + 1) / 2; }

double mismatch_from(const Side& left, const Side& right) {
  const double hl = left.value.back(), dhl = left.slope_end;
  const double hr = right.value.back(), dhr = -right.slope_end;
  return hl * dhr - dhl * hr;
}

void thomas_solve(const std::vector<double>& diag, const std::vector<double>& off,
                  std::vector<double>& rhs, std::vector<double>& work) {
  const std::size_t n = diag.size();
  work.resize(n);
  double denom = diag[0];
  rhs[0] /= denom;
  for (std::size_t i = 1; i < n; ++i) {
    work[i] = off[i - 1] / denom;
    denom = diag[i] - off[i - 1] * work[i];
    rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= work[i + 1] * rhs[i + 1];
}

double endpoint_exponent(const std::vector<double>& g, const std::vector<double>& dist,
                         std::size_t near, std::size_t far) {
  return std::log(g[far] / g[near]) / std::log(dist[far] / dist[near]);
}

}  // namespace

double shooting_mismatch(double lambda, std::size_t n) {
  const std::size_t m = match_index(n);
  const auto left = integrate_side(lambda, n, m, false);
  const auto right = integrate_side(lambda, n, n + 1 - m, true);
  return mismatch_from(left, right);
}

std::string SpectralSolution::to_csv() const {
  std::string out = "x,g,h\n";
  for (std::size_t k = 0; k < x.size(); ++k) {
    out += format_double(x[k]) + "," + format_double(g[k]) + "," + format_double(h[k]) + "\n";
  }
  return out;
}

EmpiricalMeasure SpectralSolution::sample(std::size_t count, std::uint64_t seed) const {
  // Nodes 0, x_1..x_n, 1 with g extended by its end values.
  const std::size_t n = x.size();
  std::vector<double> nodes(n + 2), dens(n + 2), cdf(n + 2, 0.0);
  nodes.front() = 0.0;
  nodes.back() = 1.0;
  dens.front() = g.front();
  dens.back() = g.back();
  for (std::size_t k = 0; k < n; ++k) {
    nodes[k + 1] = x[k];
    dens[k + 1] = g[k];
  }
  for (std::size_t k = 1; k < n + 2; ++k) {
    cdf[k] = cdf[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * (nodes[k] - nodes[k - 1]);
  }
  for (double& c : cdf) c /= cdf.back();
  const CounterRng rng(seed);
  EmpiricalMeasure out(2);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.uniform(Purpose::synthetic, 0, i);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), n + 1);
    const double span = cdf[k] - cdf[k - 1];
    const double frac = span > 0.0 ? (u - cdf[k - 1]) / span : 0.5;
    double v = nodes[k - 1] + frac * (nodes[k] - nodes[k - 1]);
    v = std::clamp(v, 1e-300, 1.0 - 1e-16);
    const double pt[2] = {v, 1.0 - v};
    out.add(pt);
  }
  return out;
}

SpectralSolution spectral_qsd(std::size_t n, double lo, double hi, SpectralMethod method) {
  if (n < 100) throw InvalidArgument("spectral_qsd: grid size must be >= 100");
  if (!(lo > 0.0 && hi > lo)) throw InvalidArgument("spectral_qsd: need 0 < lambda_lo < lambda_hi");
  const double f_lo = shooting_mismatch(lo, n);
  const double f_hi = shooting_mismatch(hi, n);
  if (!(f_lo * f_hi < 0.0)) {
    throw InvalidArgument("spectral_qsd: the shooting mismatch has no sign change on [" +
                          format_double(lo) + ", " + format_double(hi) + "]");
  }

  const double step = 1.0 / static_cast<double>(n + 1);
  SpectralSolution sol;
  sol.method = method;
  sol.x.resize(n);
  for (std::size_t k = 0; k < n; ++k) sol.x[k] = static_cast<double>(k + 1) * step;

  // Sturm–Liouville form −(p h')' = λ W h with p = e^{−2x}, W = 2e^{−2x}/(x(1−x)).
  std::vector<double> diag(n), off(n - 1), weight(n);
  const double inv_h2 = 1.0 / (step * step);
  for (std::size_t k = 0; k < n; ++k) {
    const double xm = sol.x[k] - 0.5 * step, xp = sol.x[k] + 0.5 * step;
    diag[k] = (std::exp(-2.0 * xm) + std::exp(-2.0 * xp)) * inv_h2;
    if (k + 1 < n) off[k] = -std::exp(-2.0 * xp) * inv_h2;
    weight[k] = 2.0 * std::exp(-2.0 * sol.x[k]) / (sol.x[k] * (1.0 - sol.x[k]));
  }
  auto apply_a = [&](const std::vector<double>& h, std::size_t k) {
    double v = diag[k] * h[k];
    if (k > 0) v += off[k - 1] * h[k - 1];
    if (k + 1 < n) v += off[k] * h[k + 1];
    return v;
  };

  std::vector<double> h(n);
  if (method == SpectralMethod::finite_difference) {
    // B = W^{-1/2} A W^{-1/2}, symmetric positive definite; inverse iteration.
    std::vector<double> bd(n), bo(n - 1), u(n, 1.0), work;
    for (std::size_t k = 0; k < n; ++k) bd[k] = diag[k] / weight[k];
    for (std::size_t k = 0; k + 1 < n; ++k) bo[k] = off[k] / std::sqrt(weight[k] * weight[k + 1]);
    double lambda = 0.0, prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 2000; ++it) {
      std::vector<double> y = u;
      thomas_solve(bd, bo, y, work);
      double norm = 0.0;
      for (double v : y) norm += v * v;
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < n; ++k) u[k] = y[k] / norm;
      double num = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        double bu = bd[k] * u[k];
        if (k > 0) bu += bo[k - 1] * u[k - 1];
        if (k + 1 < n) bu += bo[k] * u[k + 1];
        num += u[k] * bu;
      }
      lambda = num;
      if (std::fabs(lambda - prev) <= 1e-15 * lambda && it > 5) break;
      prev = lambda;
    }
    sol.lambda = lambda;
    for (std::size_t k = 0; k < n; ++k) h[k] = u[k] / std::sqrt(weight[k]);
  } else {
    double a = lo, b = hi, fa = f_lo;
    for (int it = 0; it < 200 && b - a > 1e-14 * b; ++it) {
      const double mid = 0.5 * (a + b);
      const double fm = shooting_mismatch(mid, n);
      if (fm == 0.0) {
        a = b = mid;
        break;
      }
      if ((fm < 0.0) == (fa < 0.0)) {
        a = mid;
        fa = fm;
      } else {
        b = mid;
      }
    }
    sol.lambda = 0.5 * (a + b);
    const std::size_t m = match_index(n);
    const auto left = integrate_side(sol.lambda, n, m, false);
    const auto right = integrate_side(sol.lambda, n, n + 1 - m, true);
    const double scale = left.value.back() / right.value.back();
    for (std::size_t k = 0; k < m; ++k) h[k] = left.value[k];
    // right.value[j] sits at x = 1 − (j+1)·step, i.e. grid index n − 1 − j.
    for (std::size_t j = 0; j + 1 < right.value.size(); ++j) h[n - 1 - j] = scale * right.value[j];
  }

  if (!(sol.lambda >= lo && sol.lambda <= hi)) {
    throw NumericalError("spectral_qsd: principal eigenvalue " + format_double(sol.lambda) +
                         " lies outside the bracket; the bracket holds a non-principal mode");
  }
  double total = 0.0;
  for (double v : h) total += v;
  if (total < 0.0) {
    for (double& v : h) v = -v;
  }
  sol.g.resize(n);
  for (std::size_t k = 0; k < n; ++k) sol.g[k] = h[k] / (sol.x[k] * (1.0 - sol.x[k]));
  const double gmax = *std::max_element(sol.g.begin(), sol.g.end());
  for (double v : sol.g) {
    if (v < -1e-10 * gmax) {
      throw NumericalError("spectral_qsd: density changes sign (non-principal mode at lambda=" +
                           format_double(sol.lambda) + ")");
    }
  }
  for (double& v : sol.g) v = std::max(v, 0.0);
  double integral = 0.0;
  for (double v : sol.g) integral += v;
  integral = step * (integral - 0.5 * (sol.g.front() + sol.g.back()));
  for (std::size_t k = 0; k < n; ++k) {
    sol.g[k] /= integral;
    h[k] /= integral;
  }
  sol.h = h;

  // ‖(e^{2x}/2)(A h − λ W h)‖ / ‖g‖: the discrete form of ‖L*g + λ g‖ / ‖g‖.
  double rnorm = 0.0, gnorm = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = 0.5 * std::exp(2.0 * sol.x[k]) * (apply_a(sol.h, k) - sol.lambda * weight[k] * sol.h[k]);
    rnorm += r * r;
    gnorm += sol.g[k] * sol.g[k];
  }
  sol.residual = std::sqrt(rnorm / gnorm);

  std::vector<double> dist_left(sol.x), dist_right(n);
  for (std::size_t k = 0; k < n; ++k) dist_right[k] = 1.0 - sol.x[n - 1 - k];
  std::vector<double> g_rev(sol.g.rbegin(), sol.g.rend());
  sol.exponent_left = endpoint_exponent(sol.g, dist_left, 1, 7);
  sol.exponent_right = endpoint_exponent(g_rev, dist_right, 1, 7);
  return sol;
}

QsdEstimate qsd_from_spectral(const SpectralSolution& sol, std::size_t samples, std::uint64_t seed) {
  QsdEstimate est;
  est.support = sol.sample(samples, seed);
  est.theta = sol.lambda;
  est.theta_se = 0.0;
  est.method = "spectral";
  est.particles = samples;
  return est;
}

// ---------------------------------------------------------------------------
// Survival rate from absorption times

ThetaFit theta_from_qsd(const ModelSpec& model, const QsdEstimate& estimate, double horizon,
                        double dt, std::uint64_t seed, std::size_t samples,
                        const BatchOptions& options, Scheme scheme) {
  if (estimate.support.empty()) throw InvalidArgument("theta_from_qsd: estimate has no support");
  if (estimate.support.dim() != model.d) throw InvalidArgument("theta_from_qsd: dimension mismatch");
  if (!(estimate.support.min_coord() > 0.0)) {
    throw InvalidArgument("theta_from_qsd: estimate has support on the boundary; a "
                          "quasi-stationary law lives in the open simplex");
  }
  const auto batch = simulate_batch(model, estimate.support, horizon, dt, scheme, seed, samples, options);
  ThetaFit fit;
  fit.samples = samples;
  fit.taus = batch.absorbed_taus();
  fit.censored = samples - fit.taus.size();
  if (fit.taus.empty()) {
    throw NumericalError("theta_from_qsd: no path was absorbed by the horizon; raise the horizon");
  }
  const double run = static_cast<double>(steps_for(horizon, dt)) * dt;
  const double total = std::accumulate(fit.taus.begin(), fit.taus.end(), 0.0);
  const double exposure = total + static_cast<double>(fit.censored) * run;
  const double absorbed = static_cast<double>(fit.taus.size());
  fit.mean_tau = total / absorbed;
  fit.theta = absorbed / exposure;
  fit.se = fit.theta / std::sqrt(absorbed);
  double half = kZ99 * fit.se;
  if (static_cast<double>(fit.censored) > 0.01 * static_cast<double>(samples)) {
    half *= 2.0;
    fit.warning = std::to_string(fit.censored) + " of " + std::to_string(samples) +
                  " paths outlived the horizon; interval widened";
  }
  fit.ci_lo = std::max(0.0, fit.theta - half);
  fit.ci_hi = fit.theta + half;
  fit.ks_distance = ks_distance_exponential(fit.taus, fit.theta);
  return fit;
}

}  // namespace hqsd
