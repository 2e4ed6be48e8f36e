#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqsd/empirical.hpp"
#include "hqsd/model.hpp"
#include "hqsd/rng.hpp"
#include "hqsd/simplex.hpp"

namespace hqsd {

enum class Scheme { euler_clamp, euler_reflect };

Scheme parse_scheme(const std::string& name);
std::string to_string(Scheme s);

/// Euler–Maruyama step for dX = X∘F dt + N^{-1/2} √X∘σ dB, followed by the
/// positivity fix of the scheme and division by the coordinate sum.
///
/// The Brownian increment of step k is √(dt/c) Σ_{m<c} Z(stream, k·c + m) for
/// coarsening c, so a run at dt with c = 2 sees the same Brownian path as a run
/// at dt/2 with c = 1.
///
/// Kill threshold: a state is absorbed when its min coordinate is at or below
/// max(model.absorption_threshold, extra). Clamping produces exact zeros; the
/// reflected scheme never does, so it also uses dt/N as a floor.
///
/// Not thread-safe (owns scratch buffers); use one per worker.
class EulerStepper {
 public:
  EulerStepper(const ModelSpec& model, double dt, Scheme scheme, std::uint64_t seed,
               int coarsening = 1, double extra_threshold = 0.0);

  /// Advances x in place. Returns true if the new state is absorbed. Throws
  /// NumericalError on a non-finite state.
  bool step(std::span<double> x, std::uint32_t stream, std::uint64_t step_index);

  double dt() const { return dt_; }
  double threshold() const { return threshold_; }
  const ModelSpec& model() const { return *model_; }

 private:
  const ModelSpec* model_;
  double dt_;
  Scheme scheme_;
  CounterRng rng_;
  int coarsening_;
  double threshold_;
  double noise_scale_;
  std::vector<double> f_, sigma_, z_, db_;
};

/// Number of steps taken to cover [0, horizon].
std::size_t steps_for(double horizon, double dt);

struct SdePath {
  std::vector<double> times;
  std::vector<SimplexPoint> states;
  bool absorbed = false;
  /// Set when absorbed; τ ≤ horizon.
  std::optional<double> tau;
  /// Zero coordinates (0-based) at absorption.
  std::vector<std::size_t> face;
  std::uint32_t stream = 0;

  /// "t,x1,...,xd,absorbed".
  std::string to_csv() const;
};

struct PathOptions {
  /// Keep every k-th state (the final state is always kept). 0 keeps only the
  /// first and last.
  std::size_t record_every = 1;
  int coarsening = 1;
};

SdePath simulate_path(const ModelSpec& model, const SimplexPoint& x0, double horizon, double dt,
                      Scheme scheme, std::uint64_t seed, std::uint32_t stream,
                      const PathOptions& options = {});

struct PathRecord {
  std::uint32_t stream = 0;
  bool absorbed = false;
  double tau = 0.0;  // NaN when not absorbed
  std::vector<double> start;
  std::vector<double> final_state;
  double deviation = 0.0;  // NaN unless computed
};

struct BatchSummary {
  std::size_t count = 0;
  std::size_t absorbed = 0;
  double absorbed_fraction = 0.0;
  /// Over absorbed paths only.
  double tau_mean = 0.0;
  double tau_se = 0.0;
  double tau_q10 = 0.0;
  double tau_median = 0.0;
  double tau_q90 = 0.0;
};

struct TrajectoryBatch {
  std::vector<PathRecord> records;
  BatchSummary summary;
  double horizon = 0.0;
  double dt = 0.0;

  std::vector<double> absorbed_taus() const;

  /// "stream,tau,absorbed,DN".
  std::string to_csv() const;
};

BatchSummary summarize(const std::vector<PathRecord>& records);

struct BatchOptions {
  int workers = 1;
  int coarsening = 1;
  double extra_threshold = 0.0;
};

/// Paths on streams 0..count-1. With a sample set, path s starts at the sample
/// drawn by Purpose::initial for stream s.
TrajectoryBatch simulate_batch(const ModelSpec& model, const SimplexPoint& x0, double horizon,
                               double dt, Scheme scheme, std::uint64_t seed, std::size_t count,
                               const BatchOptions& options = {});
TrajectoryBatch simulate_batch(const ModelSpec& model, const EmpiricalMeasure& initial,
                               double horizon, double dt, Scheme scheme, std::uint64_t seed,
                               std::size_t count, const BatchOptions& options = {});

/// Scalar test function. Gradient and Hessian (d x d, row-major) are optional;
/// missing ones are replaced by tangent-plane central differences.
struct TestFunction {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::function<void(std::span<const double>, std::span<double>)> hessian;
};

inline constexpr double kGeneratorStep = 1e-5;

/// Lf(x) = <x∘F, ∇f> + (1/2N) Tr(D²f Σ).
double apply_generator(const ModelSpec& model, const TestFunction& f, std::span<const double> x);

struct LyapunovReport {
  std::size_t coordinate = 0;
  double delta = 0.0;
  std::size_t grid_points = 0;
  double max_value = 0.0;
  std::vector<double> argmax;
  double alpha = 0.0;  // -max_value
  bool passed = false;
};

/// Evaluates LV_i = V_i F_i - x_i F_i - (σσ*)_ii / 2 with V_i = -x_i log x_i on
/// points with x_i in [0, delta).
LyapunovReport lyapunov_drift_check(const ModelSpec& model, std::size_t coordinate, double delta,
                                    int grid_resolution);

struct DeviationStat {
  double value = 0.0;
  double horizon = 0.0;
};

/// sup_{t ≤ T} ‖X_t − φ_t(X_0)‖ per path, against an RK4 flow on the same grid.
/// An absorbed path is held at its absorbed state for the rest of [0, T].
std::vector<DeviationStat> deviation_batch(const ModelSpec& model, const SimplexPoint& x0,
                                           double horizon, double dt, Scheme scheme,
                                           std::uint64_t seed, std::size_t count,
                                           const BatchOptions& options = {});

}  // namespace hqsd
