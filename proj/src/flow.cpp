#include "hqsd/flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "hqsd/csv.hpp"
#include "hqsd/error.hpp"
#include "hqsd/parallel.hpp"

namespace hqsd {

namespace {

void velocity(const ModelSpec& m, std::span<const double> x, std::span<double> out) {
  m.drift(x, out);
  for (std::size_t i = 0; i < m.d; ++i) {
    if (!std::isfinite(out[i])) {
      throw NumericalError("non-finite drift at " + format_coords(x));
    }
    out[i] *= x[i];
  }
}

std::size_t step_count(double horizon, double dt) {
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

}  // namespace

void flow_step(const ModelSpec& m, std::span<double> x, double dt, FlowMethod method,
               std::vector<double>& scratch) {
  const std::size_t d = m.d;
  scratch.resize(6 * d);
  std::span<double> k1(scratch.data(), d), k2(scratch.data() + d, d),
      k3(scratch.data() + 2 * d, d), k4(scratch.data() + 3 * d, d),
      tmp(scratch.data() + 4 * d, d), f(scratch.data() + 5 * d, d);
  if (method == FlowMethod::euler) {
    m.drift(x, f);
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(f[i])) throw NumericalError("non-finite drift at " + format_coords(x));
      // Same expression order as the stochastic Euler step.
      x[i] = x[i] + x[i] * f[i] * dt;
    }
    renormalize_sum(x);
    return;
  }
  velocity(m, x, k1);
  for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  velocity(m, tmp, k2);
  for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  velocity(m, tmp, k3);
  for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + dt * k3[i];
  velocity(m, tmp, k4);
  for (std::size_t i = 0; i < d; ++i) {
    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  renormalize_sum(x);
}

std::vector<double> FlowTrajectory::at(double t) const {
  if (t <= times.front()) return states.front().vec();
  if (t >= times.back()) return states.back().vec();
  const double dt = times[1] - times[0];
  auto k = static_cast<std::size_t>(t / dt);
  k = std::min(k, times.size() - 2);
  while (k + 1 < times.size() - 1 && times[k + 1] < t) ++k;
  while (k > 0 && times[k] > t) --k;
  const double w = (t - times[k]) / (times[k + 1] - times[k]);
  std::vector<double> out(states[k].dim());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - w) * states[k][i] + w * states[k + 1][i];
  }
  return out;
}

std::string FlowTrajectory::to_csv() const {
  const std::size_t d = initial.dim();
  std::string out = "t," + coord_header(d) + "\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    out += format_double(times[k]);
    for (std::size_t i = 0; i < d; ++i) out += "," + format_double(states[k][i]);
    out += '\n';
  }
  return out;
}

FlowTrajectory integrate_flow(const ModelSpec& m, const SimplexPoint& x0, double horizon,
                              double dt, FlowMethod method) {
  if (!(dt > 0.0)) throw InvalidArgument("integrate_flow: dt must be positive");
  if (!(horizon >= dt)) throw InvalidArgument("integrate_flow: horizon must be >= dt");
  if (x0.dim() != m.d) throw InvalidArgument("integrate_flow: dimension mismatch");
  const std::size_t steps = step_count(horizon, dt);
  FlowTrajectory traj;
  traj.initial = x0;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  std::vector<double> x = x0.vec();
  std::vector<double> scratch;
  for (std::size_t k = 1; k <= steps; ++k) {
    flow_step(m, x, dt, method, scratch);
    traj.times.push_back(static_cast<double>(k) * dt);
    traj.states.push_back(SimplexPoint::trusted(x));
  }
  return traj;
}

namespace {

double distance_to_set(std::span<const double> x, const std::vector<std::vector<double>>& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& a : set) best = std::min(best, euclidean_distance(x, a));
  return best;
}

}  // namespace

AttractorProbe probe_attractor(const ModelSpec& m,
                               const std::vector<std::vector<double>>& candidate,
                               double radius, const std::vector<double>& eps_list,
                               int grid_resolution, const ProbeOptions& options) {
  if (candidate.empty()) throw InvalidArgument("probe_attractor: empty candidate set");
  if (!(radius > 0.0)) throw InvalidArgument("probe_attractor: radius must be positive");
  if (eps_list.empty()) throw InvalidArgument("probe_attractor: empty eps list");
  for (double e : eps_list) {
    if (!(e > 0.0)) throw InvalidArgument("probe_attractor: eps must be positive");
  }
  for (const auto& a : candidate) {
    if (a.size() != m.d) throw InvalidArgument("probe_attractor: candidate dimension mismatch");
    const auto p = SimplexPoint::validate(a, 1e-6);
    if (p.min_coord() <= 0.0) {
      throw InvalidArgument("probe_attractor: candidate " + format_coords(a) +
                            " is not in the open simplex; an interior attractor is required");
    }
  }

  AttractorProbe probe;
  probe.candidate = candidate;
  probe.neighborhood_radius = radius;
  probe.grid_resolution = grid_resolution;
  probe.eps = eps_list;
  probe.alpha = radius;

  std::vector<SimplexPoint> starts;
  for (auto& p : simplex_lattice(m.d, grid_resolution)) {
    if (distance_to_set(p.coords(), candidate) <= radius) starts.push_back(std::move(p));
  }
  // The candidate points themselves belong to U.
  for (const auto& a : candidate) starts.push_back(SimplexPoint::validate(a, 1e-6));
  probe.grid_points = starts.size();

  const double min_eps = *std::min_element(eps_list.begin(), eps_list.end());
  const std::size_t max_steps = step_count(options.stop_horizon, options.dt);
  // Per start: last time the distance was >= eps (per eps), and whether it settled.
  std::vector<std::vector<double>> last_out(starts.size(),
                                            std::vector<double>(eps_list.size(), 0.0));
  std::vector<char> settled(starts.size(), 0);
  // One unsettled start already decides the outcome.
  std::atomic<bool> failed{false};

  parallel_for(starts.size(), options.workers, [&](std::size_t s, int) {
    if (failed.load()) return;
    std::vector<double> x = starts[s].vec();
    std::vector<double> scratch;
    auto record = [&](double t) {
      const double dist = distance_to_set(x, candidate);
      for (std::size_t e = 0; e < eps_list.size(); ++e) {
        if (dist >= eps_list[e]) last_out[s][e] = t + options.dt;
      }
      return dist;
    };
    if (record(0.0) < 0.5 * min_eps) last_out[s].assign(eps_list.size(), 0.0);
    for (std::size_t k = 1; k <= max_steps; ++k) {
      flow_step(m, x, options.dt, FlowMethod::rk4, scratch);
      const double dist = record(static_cast<double>(k) * options.dt);
      if (dist < 0.5 * min_eps) {
        settled[s] = 1;
        return;
      }
    }
    failed.store(true);
  });

  probe.convergence_time.assign(eps_list.size(), 0.0);
  bool all_settled = true;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    if (!settled[s]) {
      all_settled = false;
      probe.message = "not an attractor at this resolution: start " +
                      format_coords(starts[s].coords()) + " did not converge by t=" +
                      format_double(options.stop_horizon);
      break;
    }
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
      probe.convergence_time[e] = std::max(probe.convergence_time[e], last_out[s][e]);
    }
  }
  if (!all_settled) {
    probe.convergence_time.assign(eps_list.size(), std::numeric_limits<double>::quiet_NaN());
    probe.converged = false;
    return probe;
  }
  probe.converged = true;
  probe.message = "uniform convergence on " + std::to_string(starts.size()) + " grid starts";
  return probe;
}

EmpiricalMeasure flow_time_average(const ModelSpec& m, const SimplexPoint& x0, double horizon,
                                   double dt, double burn_in) {
  if (!(burn_in < horizon)) throw InvalidArgument("flow_time_average: burn_in must be < horizon");
  const auto traj = integrate_flow(m, x0, horizon, dt);
  EmpiricalMeasure out(m.d);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] >= burn_in) out.add(traj.states[k].coords());
  }
  return out;
}

}  // namespace hqsd
