#include "hqsd/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hqsd/csv.hpp"
#include "hqsd/error.hpp"
#include "hqsd/flow.hpp"
#include "hqsd/parallel.hpp"

namespace hqsd {

Scheme parse_scheme(const std::string& name) {
  if (name == "euler_clamp") return Scheme::euler_clamp;
  if (name == "euler_reflect") return Scheme::euler_reflect;
  throw InvalidArgument("unknown scheme '" + name + "' (expected euler_clamp or euler_reflect)");
}

std::string to_string(Scheme s) {
  return s == Scheme::euler_clamp ? "euler_clamp" : "euler_reflect";
}

std::size_t steps_for(double horizon, double dt) {
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

EulerStepper::EulerStepper(const ModelSpec& model, double dt, Scheme scheme, std::uint64_t seed,
                           int coarsening, double extra_threshold)
    : model_(&model), dt_(dt), scheme_(scheme), rng_(seed), coarsening_(coarsening) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (coarsening < 1) throw InvalidArgument("coarsening must be >= 1");
  if (model.n_size < 1) throw InvalidArgument("population size N must be >= 1");
  threshold_ = std::max(model.absorption_threshold, extra_threshold);
  if (scheme == Scheme::euler_reflect) {
    threshold_ = std::max(threshold_, dt / static_cast<double>(model.n_size));
  }
  noise_scale_ = std::sqrt(dt / coarsening) / std::sqrt(static_cast<double>(model.n_size));
  f_.resize(model.d);
  sigma_.resize(model.d * model.l);
  z_.resize(model.l);
  db_.resize(model.l);
}

bool EulerStepper::step(std::span<double> x, std::uint32_t stream, std::uint64_t step_index) {
  const ModelSpec& m = *model_;
  const std::size_t d = m.d;
  const std::size_t l = m.l;
  m.drift(x, f_);
  m.sigma(x, sigma_);
  std::fill(db_.begin(), db_.end(), 0.0);
  const std::uint64_t c = static_cast<std::uint64_t>(coarsening_);
  for (std::uint64_t k = 0; k < c; ++k) {
    rng_.normals(stream, step_index * c + k, z_);
    for (std::size_t j = 0; j < l; ++j) db_[j] += z_[j];
  }
  for (std::size_t i = 0; i < d; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < l; ++j) noise += sigma_[i * l + j] * db_[j];
    const double xi = x[i];
    x[i] = xi + xi * f_[i] * dt_;
    x[i] += std::sqrt(xi) * noise * noise_scale_;
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(x[i])) {
      throw NumericalError("non-finite state at step " + std::to_string(step_index) +
                           " on stream " + std::to_string(stream));
    }
    if (scheme_ == Scheme::euler_clamp) {
      if (x[i] < 0.0) x[i] = 0.0;
    } else {
      x[i] = std::fabs(x[i]);
    }
  }
  double sum = 0.0;
  for (double v : x) sum += v;
  if (!(sum > 0.0)) {
    throw NumericalError("state collapsed to zero at step " + std::to_string(step_index));
  }
  renormalize_sum(x);
  double lo = x[0];
  for (std::size_t i = 1; i < d; ++i) lo = std::min(lo, x[i]);
  return lo <= threshold_;
}

std::string SdePath::to_csv() const {
  const std::size_t d = states.empty() ? 0 : states.front().dim();
  std::string out = "t," + coord_header(d) + ",absorbed\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    out += format_double(times[k]);
    for (std::size_t i = 0; i < d; ++i) out += "," + format_double(states[k][i]);
    const bool dead = absorbed && k + 1 == times.size();
    out += dead ? ",1\n" : ",0\n";
  }
  return out;
}

namespace {

struct RunResult {
  bool absorbed = false;
  double tau = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps_taken = 0;
};

// Runs one path to absorption or horizon. `visit(k, x)` sees every state,
// including the start (k = 0).
template <class Visit>
RunResult run_path(EulerStepper& stepper, std::vector<double>& x, std::size_t steps,
                   std::uint32_t stream, Visit&& visit) {
  RunResult r;
  visit(std::size_t{0}, x);
  double lo = *std::min_element(x.begin(), x.end());
  if (lo <= stepper.threshold()) {
    r.absorbed = true;
    r.tau = 0.0;
    return r;
  }
  for (std::size_t k = 1; k <= steps; ++k) {
    const bool dead = stepper.step(x, stream, k - 1);
    visit(k, x);
    r.steps_taken = k;
    if (dead) {
      r.absorbed = true;
      r.tau = static_cast<double>(k) * stepper.dt();
      return r;
    }
  }
  return r;
}

void check_run_args(const ModelSpec& m, std::size_t dim, double horizon, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  if (dim != m.d) throw InvalidArgument("initial state dimension does not match the model");
}

}  // namespace

SdePath simulate_path(const ModelSpec& model, const SimplexPoint& x0, double horizon, double dt,
                      Scheme scheme, std::uint64_t seed, std::uint32_t stream,
                      const PathOptions& options) {
  check_run_args(model, x0.dim(), horizon, dt);
  EulerStepper stepper(model, dt, scheme, seed, options.coarsening);
  const std::size_t steps = steps_for(horizon, dt);
  SdePath path;
  path.stream = stream;
  std::vector<double> x = x0.vec();
  std::size_t last_recorded = 0;
  const auto r = run_path(stepper, x, steps, stream, [&](std::size_t k, const std::vector<double>& s) {
    const bool keep = k == 0 || (options.record_every > 0 && k % options.record_every == 0);
    if (keep) {
      path.times.push_back(static_cast<double>(k) * dt);
      path.states.push_back(SimplexPoint::trusted(s));
      last_recorded = k;
    }
  });
  if (last_recorded != r.steps_taken) {
    path.times.push_back(static_cast<double>(r.steps_taken) * dt);
    path.states.push_back(SimplexPoint::trusted(x));
  }
  path.absorbed = r.absorbed;
  if (r.absorbed) {
    path.tau = r.tau;
    path.face = SimplexPoint::trusted(x).zero_face(stepper.threshold());
  }
  return path;
}

std::vector<double> TrajectoryBatch::absorbed_taus() const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.absorbed) out.push_back(r.tau);
  }
  return out;
}

std::string TrajectoryBatch::to_csv() const {
  std::string out = "stream,tau,absorbed,DN\n";
  for (const auto& r : records) {
    out += std::to_string(r.stream) + "," + format_double(r.tau) + "," +
           (r.absorbed ? "1" : "0") + "," + format_double(r.deviation) + "\n";
  }
  return out;
}

BatchSummary summarize(const std::vector<PathRecord>& records) {
  BatchSummary s;
  s.count = records.size();
  std::vector<double> taus;
  for (const auto& r : records) {
    if (r.absorbed) taus.push_back(r.tau);
  }
  s.absorbed = taus.size();
  s.absorbed_fraction = s.count ? static_cast<double>(s.absorbed) / static_cast<double>(s.count) : 0.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (taus.empty()) {
    s.tau_mean = s.tau_se = s.tau_q10 = s.tau_median = s.tau_q90 = nan;
    return s;
  }
  double sum = 0.0;
  for (double t : taus) sum += t;
  s.tau_mean = sum / static_cast<double>(taus.size());
  double ss = 0.0;
  for (double t : taus) ss += (t - s.tau_mean) * (t - s.tau_mean);
  s.tau_se = taus.size() > 1
                 ? std::sqrt(ss / static_cast<double>(taus.size() - 1) / static_cast<double>(taus.size()))
                 : nan;
  std::sort(taus.begin(), taus.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(taus.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, taus.size() - 1);
    return taus[lo] + (pos - static_cast<double>(lo)) * (taus[hi] - taus[lo]);
  };
  s.tau_q10 = q(0.1);
  s.tau_median = q(0.5);
  s.tau_q90 = q(0.9);
  return s;
}

namespace {

template <class StartFn>
TrajectoryBatch run_batch(const ModelSpec& model, StartFn&& start, double horizon, double dt,
                          Scheme scheme, std::uint64_t seed, std::size_t count,
                          const BatchOptions& options) {
  if (count < 1) throw InvalidArgument("simulate_batch: count must be >= 1");
  if (count > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("simulate_batch: count exceeds the stream id range");
  }
  check_run_args(model, model.d, horizon, dt);
  const std::size_t steps = steps_for(horizon, dt);
  TrajectoryBatch batch;
  batch.horizon = horizon;
  batch.dt = dt;
  batch.records.resize(count);
  parallel_for(count, options.workers, [&](std::size_t s, int) {
    EulerStepper stepper(model, dt, scheme, seed, options.coarsening, options.extra_threshold);
    const auto stream = static_cast<std::uint32_t>(s);
    std::vector<double> x = start(stream);
    PathRecord rec;
    rec.stream = stream;
    rec.start = x;
    try {
      const auto r = run_path(stepper, x, steps, stream, [](std::size_t, const std::vector<double>&) {});
      rec.absorbed = r.absorbed;
      rec.tau = r.tau;
    } catch (const NumericalError& e) {
      throw NumericalError("path " + std::to_string(s) + ": " + e.what());
    }
    rec.final_state = std::move(x);
    rec.deviation = std::numeric_limits<double>::quiet_NaN();
    batch.records[s] = std::move(rec);
  });
  batch.summary = summarize(batch.records);
  return batch;
}

}  // namespace

TrajectoryBatch simulate_batch(const ModelSpec& model, const SimplexPoint& x0, double horizon,
                               double dt, Scheme scheme, std::uint64_t seed, std::size_t count,
                               const BatchOptions& options) {
  check_run_args(model, x0.dim(), horizon, dt);
  return run_batch(model, [&](std::uint32_t) { return x0.vec(); }, horizon, dt, scheme, seed,
                   count, options);
}

TrajectoryBatch simulate_batch(const ModelSpec& model, const EmpiricalMeasure& initial,
                               double horizon, double dt, Scheme scheme, std::uint64_t seed,
                               std::size_t count, const BatchOptions& options) {
  if (initial.empty()) throw InvalidArgument("simulate_batch: empty initial sample set");
  if (initial.dim() != model.d) throw InvalidArgument("simulate_batch: dimension mismatch");
  const CounterRng rng(seed);
  return run_batch(
      model,
      [&](std::uint32_t stream) {
        const auto k = rng.below(Purpose::initial, stream, 0, initial.size());
        const auto p = initial.point(k);
        return std::vector<double>(p.begin(), p.end());
      },
      horizon, dt, scheme, seed, count, options);
}

// ---------------------------------------------------------------------------
// Generator

namespace {

// Tangent directions v_i = (e_i - e_d)/√2, i < d.
void shift(std::span<const double> x, std::size_t i, double a, std::size_t j, double b,
           std::vector<double>& out) {
  const std::size_t d = x.size();
  const double s = 1.0 / std::sqrt(2.0);
  out.assign(x.begin(), x.end());
  out[i] += a * s;
  out[d - 1] -= a * s;
  out[j] += b * s;
  out[d - 1] -= b * s;
}

}  // namespace

double apply_generator(const ModelSpec& model, const TestFunction& f, std::span<const double> x) {
  const std::size_t d = model.d;
  if (x.size() != d) throw InvalidArgument("apply_generator: dimension mismatch");
  if (!f.value && (!f.gradient || !f.hessian)) {
    throw InvalidArgument("apply_generator: test function has no value");
  }
  const auto b = model.effective_drift(x);
  const auto cov = model.covariance(x);
  const double inv_n = 1.0 / static_cast<double>(model.n_size);

  const bool need_fd = !f.gradient || !f.hessian;
  if (need_fd) {
    const double lo = *std::min_element(x.begin(), x.end());
    if (lo < 2.0 * kGeneratorStep) {
      throw InvalidArgument("apply_generator: x is within 2h of the boundary; the finite-difference "
                            "stencil would leave the simplex");
    }
  }

  double first = 0.0;
  if (f.gradient) {
    std::vector<double> g(d);
    f.gradient(x, g);
    for (std::size_t i = 0; i < d; ++i) first += b[i] * g[i];
  } else {
    // b is tangent, so <b, ∇f> = Σ_{i<d} b_i ∂_{e_i - e_d} f = √2 Σ b_i ∂_{v_i} f.
    const double h = kGeneratorStep;
    std::vector<double> p, q;
    for (std::size_t i = 0; i + 1 < d; ++i) {
      shift(x, i, h, i, 0.0, p);
      shift(x, i, -h, i, 0.0, q);
      first += b[i] * std::sqrt(2.0) * (f.value(p) - f.value(q)) / (2.0 * h);
    }
  }

  double trace = 0.0;
  if (f.hessian) {
    std::vector<double> hess(d * d);
    f.hessian(x, hess);
    for (std::size_t i = 0; i < d * d; ++i) trace += hess[i] * cov[i];
  } else {
    // Σ has zero row sums, so Tr(HΣ) = Σ_{i,j<d} Σ_ij H(e_i - e_d, e_j - e_d)
    // and H(e_i - e_d, e_j - e_d) = 2 H(v_i, v_j).
    const double h = kGeneratorStep;
    const double f0 = f.value(x);
    std::vector<double> p;
    for (std::size_t i = 0; i + 1 < d; ++i) {
      for (std::size_t j = i; j + 1 < d; ++j) {
        double hv;
        if (i == j) {
          shift(x, i, h, i, 0.0, p);
          const double fp = f.value(p);
          shift(x, i, -h, i, 0.0, p);
          const double fm = f.value(p);
          hv = (fp - 2.0 * f0 + fm) / (h * h);
        } else {
          shift(x, i, h, j, h, p);
          const double fpp = f.value(p);
          shift(x, i, h, j, -h, p);
          const double fpm = f.value(p);
          shift(x, i, -h, j, h, p);
          const double fmp = f.value(p);
          shift(x, i, -h, j, -h, p);
          const double fmm = f.value(p);
          hv = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        }
        const double weight = i == j ? cov[i * d + i] : cov[i * d + j] + cov[j * d + i];
        trace += weight * 2.0 * hv;
      }
    }
  }
  return first + 0.5 * inv_n * trace;
}

// ---------------------------------------------------------------------------
// Lyapunov boundary check

LyapunovReport lyapunov_drift_check(const ModelSpec& model, std::size_t coordinate, double delta,
                                    int grid_resolution) {
  const std::size_t d = model.d;
  if (coordinate >= d) throw InvalidArgument("lyapunov_drift_check: coordinate out of range");
  if (!(delta > 0.0 && delta < 1.0 / static_cast<double>(d))) {
    throw InvalidArgument("lyapunov_drift_check: need 0 < delta < 1/d");
  }
  if (grid_resolution < 1) throw InvalidArgument("lyapunov_drift_check: grid_resolution must be >= 1");

  LyapunovReport rep;
  rep.coordinate = coordinate;
  rep.delta = delta;
  rep.max_value = -std::numeric_limits<double>::infinity();

  // x_i runs over delta·k/r, k = 0..r-1; the rest of the mass is spread over the
  // other coordinates on a (d-1)-simplex lattice.
  const auto rest = d > 2 ? simplex_lattice(d - 1, grid_resolution)
                          : std::vector<SimplexPoint>{SimplexPoint::trusted({1.0})};
  std::vector<double> x(d), f(d);
  for (int k = 0; k < grid_resolution; ++k) {
    const double xi = delta * k / grid_resolution;
    for (const auto& r : rest) {
      for (std::size_t j = 0, m = 0; j < d; ++j) {
        x[j] = j == coordinate ? xi : (1.0 - xi) * r[m++];
      }
      model.drift(x, f);
      const double sdiag = model.sigma_diag(x)[coordinate];
      const double v = xi > 0.0 ? -xi * std::log(xi) : 0.0;
      const double lv = v * f[coordinate] - xi * f[coordinate] - 0.5 * sdiag;
      ++rep.grid_points;
      if (lv > rep.max_value) {
        rep.max_value = lv;
        rep.argmax = x;
      }
    }
  }
  rep.alpha = -rep.max_value;
  rep.passed = rep.max_value < 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Deviation from the flow

std::vector<DeviationStat> deviation_batch(const ModelSpec& model, const SimplexPoint& x0,
                                           double horizon, double dt, Scheme scheme,
                                           std::uint64_t seed, std::size_t count,
                                           const BatchOptions& options) {
  check_run_args(model, x0.dim(), horizon, dt);
  if (count < 1) throw InvalidArgument("deviation_batch: count must be >= 1");
  const auto flow = integrate_flow(model, x0, horizon, dt, FlowMethod::rk4);
  const std::size_t steps = flow.times.size() - 1;
  std::vector<DeviationStat> out(count);
  parallel_for(count, options.workers, [&](std::size_t s, int) {
    EulerStepper stepper(model, dt, scheme, seed, options.coarsening, options.extra_threshold);
    const auto stream = static_cast<std::uint32_t>(s);
    std::vector<double> x = x0.vec();
    double worst = 0.0;
    std::size_t last = 0;
    run_path(stepper, x, steps, stream, [&](std::size_t k, const std::vector<double>& state) {
      worst = std::max(worst, euclidean_distance(state, flow.states[k].coords()));
      last = k;
    });
    // Frozen after absorption.
    for (std::size_t k = last + 1; k <= steps; ++k) {
      worst = std::max(worst, euclidean_distance(x, flow.states[k].coords()));
    }
    out[s] = DeviationStat{worst, flow.final_time()};
  });
  return out;
}

}  // namespace hqsd
