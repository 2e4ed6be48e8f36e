#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hqsd/empirical.hpp"
#include "hqsd/model.hpp"
#include "hqsd/sde.hpp"

namespace hqsd {

/// Estimate of a quasi-stationary law and its survival rate.
struct QsdEstimate {
  EmpiricalMeasure support;
  double theta = 0.0;
  double theta_se = 0.0;
  std::string method;  // fleming_viot | pruning | spectral
  /// Killing margin; 0 means the true boundary.
  double eps = 0.0;
  double burn_in = 0.0;
  std::size_t particles = 0;
  std::size_t events = 0;
  double elapsed = 0.0;

  std::string to_csv() const { return support.to_csv(); }
  /// "theta=<f> se=<f> method=<tag> eps=<f>".
  std::string sidecar() const;
};

struct FvOptions {
  Scheme scheme = Scheme::euler_clamp;
  int workers = 1;
  int coarsening = 1;
  /// Time between post-burn-in snapshots of the whole ensemble.
  double snapshot_interval = 0.1;
  /// Batches for the batch-means standard error of theta.
  std::size_t theta_batches = 20;
  /// Initial positions: drawn from this set if given, else start_point, else
  /// the barycenter.
  std::optional<EmpiricalMeasure> start_set;
  std::optional<SimplexPoint> start_point;
};

/// Fleming–Viot particle system. A particle whose min coordinate falls to the
/// kill threshold (max of eps and the scheme threshold) jumps onto a particle
/// chosen uniformly among those that survived the same step. Resampling is
/// resolved in particle-index order, so results do not depend on `workers`.
QsdEstimate fleming_viot(const ModelSpec& model, std::size_t particles, double horizon, double dt,
                         double burn_in, std::uint64_t seed, double eps,
                         const FvOptions& options = {});

/// Conditional law at time t of `trials` paths from x0, keeping survivors.
/// theta = -log(survivors / trials) / t.
QsdEstimate pruning_estimate(const ModelSpec& model, const SimplexPoint& x0, double t, double dt,
                             std::uint64_t seed, std::size_t trials,
                             const BatchOptions& options = {},
                             Scheme scheme = Scheme::euler_clamp);

enum class SpectralMethod { finite_difference, shooting };

/// Principal eigenpair of the killed adjoint generator of the logistic example
/// dX = X(1−X) dt + √(X(1−X)) dB on (0, 1), through h = x(1−x) g:
///   h''/2 − h' + λ h / (x(1−x)) = 0,  h(0) = h(1) = 0,  λ > 0.
struct SpectralSolution {
  std::vector<double> x;  // interior grid k/(n+1), k = 1..n
  std::vector<double> g;  // density, trapezoid integral 1
  std::vector<double> h;
  double lambda = 0.0;
  double residual = 0.0;
  SpectralMethod method = SpectralMethod::finite_difference;
  /// Fitted log-log slopes of g at the two ends of the grid.
  double exponent_left = 0.0;
  double exponent_right = 0.0;

  /// "x,g,h".
  std::string to_csv() const;

  /// Draws samples (x, 1−x) by inverting the piecewise-linear CDF.
  EmpiricalMeasure sample(std::size_t count, std::uint64_t seed) const;
};

/// Mismatch of the two series-started solutions at the grid midpoint
/// (Wronskian); its sign change brackets an eigenvalue.
double shooting_mismatch(double lambda, std::size_t n);

SpectralSolution spectral_qsd(std::size_t n, double bracket_lo, double bracket_hi,
                              SpectralMethod method = SpectralMethod::finite_difference);

QsdEstimate qsd_from_spectral(const SpectralSolution& sol, std::size_t samples,
                              std::uint64_t seed);

struct ThetaFit {
  double theta = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double mean_tau = 0.0;
  double ks_distance = 0.0;
  std::size_t samples = 0;
  std::size_t censored = 0;
  std::string warning;
  std::vector<double> taus;  // absorbed times, stream order
};

/// Absorption times from starts drawn out of the estimate; theta by the
/// exponential maximum-likelihood rate (absorbed count over total exposure).
/// More than 1% censored at the horizon doubles the interval half-width and
/// sets `warning`.
ThetaFit theta_from_qsd(const ModelSpec& model, const QsdEstimate& estimate, double horizon,
                        double dt, std::uint64_t seed, std::size_t samples,
                        const BatchOptions& options = {}, Scheme scheme = Scheme::euler_clamp);

}  // namespace hqsd
