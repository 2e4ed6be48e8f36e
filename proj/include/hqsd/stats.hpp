#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hqsd/empirical.hpp"
#include "hqsd/flow.hpp"
#include "hqsd/model.hpp"
#include "hqsd/qsd.hpp"
#include "hqsd/sde.hpp"

namespace hqsd {

/// Two-sided 99% normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;

/// Wilson score interval for k successes out of n.
std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = kZ99);

// --- Survival ---------------------------------------------------------------

/// Kaplan–Meier estimate of P[τ > t]; a step function, right-continuous.
struct SurvivalCurve {
  std::vector<double> times;     // distinct absorption times
  std::vector<double> survival;  // value on [times[k], times[k+1])
  std::vector<double> se;        // Greenwood
  std::size_t at_risk0 = 0;
  bool fully_censored = false;

  double at(double t) const;
  double se_at(double t) const;
  /// "t,survival,se".
  std::string to_csv() const;
};

/// times[i] is the absorption time where absorbed[i], else the censoring time.
SurvivalCurve survival_curve(const std::vector<double>& times, const std::vector<bool>& absorbed);
SurvivalCurve survival_curve(const TrajectoryBatch& batch);

// --- Exponentiality ---------------------------------------------------------

/// sup_t |F_n(t) − (1 − e^{−rate t})|.
double ks_distance_exponential(std::vector<double> samples, double rate);

struct ExponentialityResult {
  std::size_t n = 0;
  double rate = 0.0;
  double ks = 0.0;
  /// Stephens' modification (D − 0.2/n)(√n + 0.26 + 0.5/√n) for an estimated
  /// exponential mean.
  double modified = 0.0;
  double critical = 0.0;
  double level = 0.01;
  bool passed = false;
};

/// Supported levels: 0.15, 0.10, 0.05, 0.025, 0.01.
double exponential_ks_critical(double level);

ExponentialityResult exponentiality_test(const std::vector<double>& taus, double level = 0.01);

// --- Distances --------------------------------------------------------------

/// Exact W1 between two equally weighted samples on the line.
double wasserstein1(std::vector<double> a, std::vector<double> b);

/// Energy distance (the square root of 2E|X−Y| − E|X−X'| − E|Y−Y'|).
double energy_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// W1 of the x1 marginals for d = 2, energy distance otherwise.
double measure_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
std::string measure_distance_name(std::size_t d);

/// W1 between the x1 marginal of a sample and a density tabulated on a grid
/// (trapezoid CDF, linear between grid points).
double wasserstein1_to_density(std::vector<double> samples, const std::vector<double>& grid,
                               const std::vector<double>& density);

struct DistanceReport {
  std::string metric;
  double value = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t size_a = 0;
  std::size_t size_b = 0;
};

struct DistanceOptions {
  std::size_t resamples = 1000;
  /// Point-estimate and bootstrap subsample caps (W1, energy).
  std::size_t w1_points = 1000;
  std::size_t energy_points = 250;
  std::size_t energy_estimate_points = 2000;
};

/// Distance with a 99% percentile-bootstrap interval.
DistanceReport qsd_vs_invariant(const EmpiricalMeasure& qsd, const EmpiricalMeasure& invariant,
                                std::uint64_t seed, const DistanceOptions& options = {});

struct DistanceTrend {
  std::vector<int> n_values;
  std::vector<DistanceReport> reports;
  /// min over consecutive pairs of 1 − d_{k+1}/d_k.
  double min_relative_drop = 0.0;
  bool decreasing = false;
};

DistanceTrend qsd_vs_invariant_sequence(const std::vector<int>& n_values,
                                        const std::vector<EmpiricalMeasure>& qsds,
                                        const EmpiricalMeasure& invariant, std::uint64_t seed,
                                        const DistanceOptions& options = {});

// --- Law of large numbers ---------------------------------------------------

/// max over an interior grid (about `points` points) of the operator norm of σ.
double sigma_sup_norm(const ModelSpec& model, std::size_t points = 200);

/// T‖σ‖∞ / (Nδ).
double lln_bound(double horizon, double sigma_sup, int n, double delta);

struct LlnRow {
  int n = 0;
  double delta = 0.0;
  std::size_t count = 0;
  std::size_t exceed = 0;
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double bound = 0.0;         // T‖σ‖∞ / (Nδ)
  double bound_delta2 = 0.0;  // T‖σ‖∞ e^{LT} / (Nδ²)
  bool vacuous = false;
  bool passed = false;
  bool passed_delta2 = false;
};

struct LlnReport {
  double horizon = 0.0;
  double sigma_sup = 0.0;
  double lipschitz = 0.0;
  std::vector<LlnRow> rows;
  /// Per-path D_N(T) by N, stream order.
  std::vector<std::vector<double>> deviations;

  const LlnRow& row(int n, double delta) const;
  /// "N,delta,count,exceed,p_hat,ci_lo,ci_hi,bound,bound_delta2,vacuous,pass".
  std::string to_csv() const;
};

LlnReport lln_bound_check(const ModelSpec& model, const SimplexPoint& x0, double horizon,
                          const std::vector<double>& deltas, const std::vector<int>& n_values,
                          double dt, std::uint64_t seed, std::size_t count,
                          const BatchOptions& options = {}, Scheme scheme = Scheme::euler_clamp);

// --- Scaling in N -----------------------------------------------------------

struct ScalingConfig {
  std::size_t particles = 1000;
  double fv_horizon = 64.0;
  double burn_in = 32.0;
  double dt = 1e-3;
  std::size_t tau_samples = 2000;
  double tau_horizon = 1e4;
  double eps = 0.0;
  Scheme scheme = Scheme::euler_clamp;
  int workers = 1;
  int coarsening = 1;
};

struct ScalingPoint {
  int n = 0;
  double theta = 0.0;
  double theta_se = 0.0;
  double mean_tau = 0.0;
  double tau_se = 0.0;
  double n_theta = 0.0;
  double n_theta_se = 0.0;
  std::size_t tau_samples = 0;
  std::size_t censored = 0;
  double ks = 0.0;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  std::vector<QsdEstimate> qsds;
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double slope_lower = 0.0;  // slope − z99·se
  double chi2 = 0.0;         // lack of fit of the straight line
  bool n_theta_nonincreasing = false;
  bool consistent = false;

  /// "N,theta,theta_se,mean_tau,tau_se,N_theta,N_theta_se,samples,censored".
  std::string to_csv() const;
};

/// Weighted least squares for y = a + b x with known per-point standard errors.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double chi2 = 0.0;
};
LineFit weighted_line_fit(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& se);

/// Requires a converged attractor probe (interior attractor); refuses with
/// InvalidArgument otherwise, or when fewer than two N values are given.
ScalingReport scaling_study(const ModelSpec& model, const AttractorProbe& probe,
                            const std::vector<int>& n_values, const ScalingConfig& config,
                            std::uint64_t seed);

// --- β_{δ,K}(N) ------------------------------------------------------------

struct BetaConfig {
  double k_margin = 0.1;
  double delta = 0.1;
  int n_size = 64;
  int grid_resolution = 20;
  double dt = 1e-3;
  std::size_t trials = 2000;
  Scheme scheme = Scheme::euler_clamp;
  int workers = 1;
};

struct BetaPoint {
  std::vector<double> x;
  std::size_t trials = 0;
  std::size_t hits = 0;
  double p_hat = 0.0;
  double se = 0.0;
};

struct BetaReport {
  BetaConfig config;
  std::vector<BetaPoint> k_points;
  std::vector<BetaPoint> collar_points;
  double beta = 0.0;  // grid sup over K
  double beta_se = 0.0;
  double beta_ci_lo = 0.0;
  double beta_ci_hi = 0.0;
  /// Grid inf of P[absorbed by time 1] over U_K = {x : 0 < min_i x_i < k_margin}.
  double inf_absorb = 0.0;
  bool bound_available = false;
  double mass_bound = 0.0;  // β / inf
  /// Comparison e^{−θ} ≥ 1 − β when a θ estimate is attached.
  double theta = 0.0;
  double theta_se = 0.0;
  bool theta_attached = false;

  /// "set,x1..xd,trials,hits,p_hat,se".
  std::string to_csv() const;
};

BetaReport beta_study(const ModelSpec& model, const BetaConfig& config, std::uint64_t seed);

// --- Verdicts ---------------------------------------------------------------

enum class VerdictStatus { pass, fail, vacuous, unavailable };

struct Verdict {
  std::string id;
  VerdictStatus status = VerdictStatus::unavailable;
  double value = 0.0;
  double bound = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;

  /// "CLAIM <id>: PASS|FAIL|VACUOUS|UNAVAILABLE value=<f> bound=<f> ci=[<lo>,<hi>]".
  std::string line() const;
};

std::string to_string(VerdictStatus s);

}  // namespace hqsd
