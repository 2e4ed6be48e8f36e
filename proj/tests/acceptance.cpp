// Acceptance run: one PASS/FAIL line per criterion, then a summary line.
// Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "hqsd/error.hpp"
#include "hqsd/flow.hpp"
#include "hqsd/model.hpp"
#include "hqsd/parallel.hpp"
#include "hqsd/qsd.hpp"
#include "hqsd/sde.hpp"
#include "hqsd/stats.hpp"

using namespace hqsd;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num(double v) { return fmt("%.4g", v); }

const int kWorkers = default_workers();

// Shared between criteria so that 9 and 10 can rerun earlier configurations.
struct Shared {
  TrajectoryBatch c1_batch;
  std::vector<int> c5_n = {16, 32, 64, 128};
  ScalingReport c5;
  ScalingConfig c5_config;
  QsdEstimate c7_fv;
  LlnReport c3;
} shared;

constexpr std::uint64_t kSeed = 20240611;

// 1. Absorption in finite time.
Outcome absorption() {
  const auto m = builtin("logistic1d", 25);
  BatchOptions bo;
  bo.workers = kWorkers;
  shared.c1_batch = simulate_batch(m, barycenter(2), 200.0, 1e-3, Scheme::euler_clamp, kSeed, 10000, bo);
  const auto& s = shared.c1_batch.summary;
  const auto [lo, hi] = wilson_interval(s.absorbed, s.count);
  return {s.absorbed_fraction >= 0.999, "absorbed fraction " + num(s.absorbed_fraction) + " (99% CI [" +
                                            num(lo) + ", " + num(hi) + "]), mean tau " + num(s.tau_mean) +
                                            ", need >= 0.999"};
}

// 2. Lyapunov drift near the face x1 = 0.
Outcome lyapunov() {
  const auto rep = lyapunov_drift_check(builtin("logistic1d", 1), 0, 0.02, 200);
  const bool ok = rep.passed && rep.alpha > 0.4 && std::fabs(rep.alpha - 0.459) <= 0.05;
  return {ok, "alpha " + num(rep.alpha) + " on " + std::to_string(rep.grid_points) +
                  " grid points, need > 0.4 and within 0.05 of 0.459"};
}

// 3. Deviation bound from the mean flow.
Outcome lln() {
  BatchOptions bo;
  bo.workers = kWorkers;
  shared.c3 = lln_bound_check(builtin("logistic1d", 1), barycenter(2), 1.0, {0.25, 0.5}, {10, 100}, 1e-3, kSeed,
                              10000, bo);
  bool ok = true;
  std::string detail;
  for (const auto& r : shared.c3.rows) {
    detail += "N=" + std::to_string(r.n) + " d=" + num(r.delta) + ": p " + num(r.p_hat) + " ucl " + num(r.ci_hi) +
              " bound " + num(r.bound) + (r.vacuous ? " vacuous" : (r.passed ? " ok" : " EXCEEDED")) + "; ";
    if (!r.passed) ok = false;
  }
  for (double dl : {0.25, 0.5}) {
    const bool down = shared.c3.row(100, dl).p_hat < shared.c3.row(10, dl).p_hat;
    if (!down) ok = false;
    detail += "trend d=" + num(dl) + (down ? " decreasing; " : " NOT decreasing; ");
  }
  return {ok, detail};
}

// 4. Exponential absorption law from the particle-system stationary start.
Outcome exponential_law() {
  const auto m = builtin("logistic1d", 1);
  FvOptions fo;
  fo.workers = kWorkers;
  const auto fv = fleming_viot(m, 2000, 24.0, 1e-3, 4.0, kSeed, 0.0, fo);
  BatchOptions bo;
  bo.workers = kWorkers;
  const auto fit = theta_from_qsd(m, fv, 1000.0, 1e-3, kSeed + 1, 5000, bo);
  const auto ex = exponentiality_test(fit.taus);
  double mean = 0.0, sq = 0.0;
  for (double t : fit.taus) mean += t;
  mean /= static_cast<double>(fit.taus.size());
  for (double t : fit.taus) sq += (t - mean) * (t - mean);
  const double mean_se = std::sqrt(sq / static_cast<double>(fit.taus.size() - 1)) /
                         std::sqrt(static_cast<double>(fit.taus.size()));
  const double inv = 1.0 / mean;
  const double inv_se = mean_se / (mean * mean);
  const double gap = std::fabs(fv.theta - inv);
  const double tol = 3.0 * std::hypot(fv.theta_se, inv_se);
  const bool ok = ex.passed && gap <= tol && fit.censored == 0;
  return {ok, "KS modified " + num(ex.modified) + " vs 1% critical " + num(ex.critical) + " (n=" +
                  std::to_string(ex.n) + "); theta_FV " + num(fv.theta) + " +- " + num(fv.theta_se) +
                  ", 1/mean(tau) " + num(inv) + " +- " + num(inv_se) + ", gap " + num(gap) + " <= " + num(tol) +
                  "?, censored " + std::to_string(fit.censored)};
}

// 5. Mean absorption time at least linear in N.
Outcome scaling() {
  const auto m = builtin("hawk_dove", 1);
  ProbeOptions po;
  po.workers = kWorkers;
  const auto probe = probe_attractor(m, m.attractor_hint, 0.2, {0.05, 0.01}, 20, po);
  if (!probe.converged) return {false, "attractor probe failed: " + probe.message};
  shared.c5_config.workers = kWorkers;
  shared.c5 = scaling_study(m, probe, shared.c5_n, shared.c5_config, kSeed);
  std::string detail = "slope " + num(shared.c5.slope) + " +- " + num(shared.c5.slope_se) + ", lower " +
                       num(shared.c5.slope_lower) + " (need >= 0.9); N*theta:";
  for (const auto& p : shared.c5.points) detail += " " + num(p.n_theta) + "+-" + num(p.n_theta_se);
  detail += shared.c5.n_theta_nonincreasing ? " non-increasing" : " INCREASING";
  detail += "; E[tau]:";
  for (const auto& p : shared.c5.points) detail += " " + num(p.mean_tau);
  return {shared.c5.slope_lower >= 0.9 && shared.c5.n_theta_nonincreasing, detail};
}

// 6. QSD approaches the invariant Dirac mass at the attractor.
Outcome qsd_to_invariant() {
  const auto m = builtin("hawk_dove", 1);
  const std::vector<int> ns = {16, 64, 256};
  std::vector<EmpiricalMeasure> qsds;
  FvOptions fo;
  fo.workers = kWorkers;
  fo.start_point = SimplexPoint::validate(m.attractor_hint.front());
  for (int n : ns) {
    qsds.push_back(fleming_viot(m.with_size(n), 1000, 64.0, 1e-3, 32.0, kSeed + static_cast<std::uint64_t>(n),
                                0.0, fo)
                       .support);
  }
  const auto dirac = EmpiricalMeasure::dirac(m.attractor_hint.front());
  const auto trend = qsd_vs_invariant_sequence(ns, qsds, dirac, kSeed);
  std::string detail = "W1:";
  for (const auto& r : trend.reports) {
    detail += " " + num(r.value) + " [" + num(r.ci_lo) + "," + num(r.ci_hi) + "]";
  }
  detail += "; min relative drop " + num(trend.min_relative_drop) + " (need >= 0.2)";
  return {trend.decreasing && trend.min_relative_drop >= 0.2, detail};
}

// 7. Spectral density against the particle system.
Outcome spectral_vs_particles() {
  const auto sol = spectral_qsd(4000, 0.5, 2.0);
  FvOptions fo;
  fo.workers = kWorkers;
  shared.c7_fv = fleming_viot(builtin("logistic1d", 1), 2000, 24.0, 1e-3, 4.0, kSeed + 7, 0.0, fo);
  const double w1 = wasserstein1_to_density(shared.c7_fv.support.marginal(0), sol.x, sol.g);
  return {sol.residual < 1e-6 && w1 < 0.05, "lambda " + fmt("%.9f", sol.lambda) + ", residual " +
                                                num(sol.residual) + ", W1 " + num(w1) + " (need < 0.05)" +
                                                ", theta_FV " + num(shared.c7_fv.theta)};
}

// 8. Killing-margin shrink.
Outcome eps_shrink() {
  const auto m = builtin("logistic1d", 1);
  FvOptions fo;
  fo.workers = kWorkers;
  const auto base = fleming_viot(m, 2000, 24.0, 1e-3, 4.0, kSeed + 8, 0.0, fo);
  const auto twin = fleming_viot(m, 2000, 24.0, 1e-3, 4.0, kSeed + 9, 0.0, fo);
  const double floor = measure_distance(base.support, twin.support);
  std::vector<double> dist;
  std::string detail = "W1 to eps=0:";
  for (double e : {0.05, 0.02, 0.01}) {
    dist.push_back(measure_distance(fleming_viot(m, 2000, 24.0, 1e-3, 4.0, kSeed + 8, e, fo).support, base.support));
    detail += " " + num(dist.back());
  }
  bool ok = true;
  for (std::size_t k = 1; k < dist.size(); ++k) {
    if (dist[k] > dist[k - 1] + floor) ok = false;
  }
  if (!(dist.back() < dist.front())) ok = false;
  detail += "; replicate noise floor " + num(floor);
  return {ok, detail};
}

// 9. dt halving on a shared Brownian path; clamp against reflect.
Outcome discretization() {
  BatchOptions coarse_opt;
  coarse_opt.workers = kWorkers;
  coarse_opt.coarsening = 2;
  BatchOptions fine_opt;
  fine_opt.workers = kWorkers;
  bool ok = true;
  std::string detail;
  auto compare = [&](const std::string& label, const ModelSpec& m, const auto& start, std::uint64_t seed,
                     std::size_t count, double horizon) {
    const auto coarse = simulate_batch(m, start, horizon, 1e-3, Scheme::euler_clamp, seed, count, coarse_opt);
    const auto fine = simulate_batch(m, start, horizon, 5e-4, Scheme::euler_clamp, seed, count, fine_opt);
    const auto refl = simulate_batch(m, start, horizon, 1e-3, Scheme::euler_reflect, seed, count, coarse_opt);
    const double rel = std::fabs(fine.summary.tau_mean - coarse.summary.tau_mean) / coarse.summary.tau_mean;
    const double gap = std::fabs(refl.summary.tau_mean - coarse.summary.tau_mean);
    const double tol = 3.0 * std::hypot(refl.summary.tau_se, coarse.summary.tau_se);
    const bool complete = coarse.summary.absorbed == count && fine.summary.absorbed == count &&
                          refl.summary.absorbed == count;
    if (!(rel < 0.05) || !(gap <= tol) || !complete) ok = false;
    detail += label + ": dt-halving " + fmt("%.2f%%", 100.0 * rel) + ", reflect gap " + num(gap) + " <= " +
              num(tol) + (complete ? "" : " (censored paths)") + "; ";
  };
  compare("c1", builtin("logistic1d", 25), barycenter(2), kSeed, 10000, 200.0);
  const auto hd = builtin("hawk_dove", 1);
  for (std::size_t k = 0; k < shared.c5.points.size(); ++k) {
    const int n = shared.c5.points[k].n;
    compare("c5 N=" + std::to_string(n), hd.with_size(n), shared.c5.qsds[k].support, kSeed + 90 + k,
            shared.c5_config.tau_samples, shared.c5_config.tau_horizon);
  }
  return {ok, detail};
}

// 10. Byte-identical outputs across worker counts.
Outcome determinism() {
  const int other = kWorkers == 3 ? 2 : 3;
  bool ok = true;
  std::string detail;
  BatchOptions bo;
  bo.workers = other;
  const auto batch = simulate_batch(builtin("logistic1d", 25), barycenter(2), 200.0, 1e-3, Scheme::euler_clamp,
                                    kSeed, 10000, bo);
  const bool same_batch = batch.to_csv() == shared.c1_batch.to_csv();
  detail += std::string("c1 batch CSV ") + (same_batch ? "identical" : "DIFFERS");
  ok = ok && same_batch;

  const auto lln = lln_bound_check(builtin("logistic1d", 1), barycenter(2), 1.0, {0.25, 0.5}, {10, 100}, 1e-3,
                                   kSeed, 10000, bo);
  const bool same_lln = lln.to_csv() == shared.c3.to_csv();
  detail += std::string(", c3 table ") + (same_lln ? "identical" : "DIFFERS");
  ok = ok && same_lln;

  FvOptions fo;
  fo.workers = other;
  const auto fv = fleming_viot(builtin("logistic1d", 1), 2000, 24.0, 1e-3, 4.0, kSeed + 7, 0.0, fo);
  const bool same_fv = fv.to_csv() == shared.c7_fv.to_csv() && fv.sidecar() == shared.c7_fv.sidecar();
  detail += std::string(", c7 particle CSV ") + (same_fv ? "identical" : "DIFFERS");
  ok = ok && same_fv;
  detail += " (workers " + std::to_string(kWorkers) + " vs " + std::to_string(other) + ")";
  return {ok, detail};
}

// 11. Generator and covariance oracles.
Outcome oracles() {
  bool ok = true;
  std::string detail = "generator:";
  const auto m = builtin("hawk_dove", 2);
  TestFunction f{[](std::span<const double> p) { return p[0] * p[0] * p[1] + p[0]; }, {}, {}};
  const std::vector<double> x = {0.4, 0.6};
  const double lf = apply_generator(m, f, x);
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    const std::size_t n = 1000000;
    const std::size_t chunks = 16;
    std::vector<double> s(chunks, 0.0), ss(chunks, 0.0);
    parallel_for(chunks, kWorkers, [&](std::size_t c, int) {
      EulerStepper step(m, dt, Scheme::euler_clamp, 2024);
      std::vector<double> y(2);
      for (std::size_t k = c * n / chunks; k < (c + 1) * n / chunks; ++k) {
        y = x;
        step.step(y, static_cast<std::uint32_t>(k), 0);
        const double q = (f.value(y) - f.value(x)) / dt;
        s[c] += q;
        ss[c] += q * q;
      }
    });
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      sum += s[c];
      sum2 += ss[c];
    }
    const double mean = sum / static_cast<double>(n);
    const double se = std::sqrt((sum2 / static_cast<double>(n) - mean * mean) / static_cast<double>(n));
    const bool hit = std::fabs(mean - lf) <= 3.0 * se;
    ok = ok && hit;
    detail += " dt=" + num(dt) + " z=" + fmt("%.2f", (mean - lf) / se);
  }

  // Covariance against the pair sum Σ_{i<j} x_i x_j (λ_ij + λ_ji)(e_i − e_j)(e_i − e_j)^T.
  RateSpec rates;
  rates.d = 3;
  rates.lambda = [](std::size_t i, std::size_t j, std::span<const double> p) {
    return 0.5 + static_cast<double>(i + 2 * j) * 0.3 + p[i] * p[j];
  };
  const auto model = from_rates(rates, 1);
  double worst = 0.0;
  for (const auto& p : simplex_lattice(3, 12)) {
    const auto cov = model.covariance(p.coords());
    std::vector<double> brute(9, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) {
        const double w = p[i] * p[j] * (rates.lambda(i, j, p.coords()) + rates.lambda(j, i, p.coords()));
        brute[i * 3 + i] += w;
        brute[j * 3 + j] += w;
        brute[i * 3 + j] -= w;
        brute[j * 3 + i] -= w;
      }
    }
    for (std::size_t k = 0; k < 9; ++k) worst = std::max(worst, std::fabs(cov[k] - brute[k]));
  }
  ok = ok && worst <= 1e-9;
  detail += "; covariance max abs error " + num(worst) + " (need <= 1e-9)";
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 absorption", absorption},
      {"2 lyapunov", lyapunov},
      {"3 lln-bound", lln},
      {"4 exponential-law", exponential_law},
      {"5 scaling", scaling},
      {"6 qsd-to-invariant", qsd_to_invariant},
      {"7 spectral-vs-particles", spectral_vs_particles},
      {"8 eps-shrink", eps_shrink},
      {"9 discretization", discretization},
      {"10 determinism", determinism},
      {"11 oracles", oracles},
  };
  int failed = 0;
  for (const auto& [name, body] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = body();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out.passed) ++failed;
    std::printf("%s criterion %s: %s [%.1fs]\n", out.passed ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("acceptance: %zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
