#pragma once

#include <string>
#include <vector>

#include "hqsd/empirical.hpp"
#include "hqsd/model.hpp"
#include "hqsd/simplex.hpp"

namespace hqsd {

/// Solution φ_t(x0) of the mean ODE ẋ = x∘F(x) on a uniform time grid.
struct FlowTrajectory {
  SimplexPoint initial;
  std::vector<double> times;
  std::vector<SimplexPoint> states;

  const SimplexPoint& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }

  /// Linear interpolation in time (clamped to the ends).
  std::vector<double> at(double t) const;

  /// "t,x1,...,xd", one row per step.
  std::string to_csv() const;
};

enum class FlowMethod { rk4, euler };

/// One step of the chosen one-step method, followed by division by the
/// coordinate sum. Throws NumericalError on a non-finite drift value.
void flow_step(const ModelSpec& model, std::span<double> x, double dt, FlowMethod method,
               std::vector<double>& scratch);

/// Steps until the final time is >= horizon.
FlowTrajectory integrate_flow(const ModelSpec& model, const SimplexPoint& x0, double horizon,
                              double dt, FlowMethod method = FlowMethod::rk4);

struct AttractorProbe {
  bool converged = false;
  std::string message;
  std::vector<std::vector<double>> candidate;
  double neighborhood_radius = 0.0;
  int grid_resolution = 0;
  std::size_t grid_points = 0;
  std::vector<double> eps;
  /// Uniform convergence time per ε (NaN where the horizon ran out).
  std::vector<double> convergence_time;
  /// d(A, U^c) for the ball neighbourhood used.
  double alpha = 0.0;
};

struct ProbeOptions {
  double dt = 0.01;
  double stop_horizon = 1e4;
  int workers = 1;
};

/// Certifies uniform convergence to the candidate set on a lattice of the
/// closed radius-neighbourhood. Candidates on ∂Δ are rejected (InvalidArgument);
/// a start that has not entered every ε-ball by stop_horizon yields
/// converged = false.
AttractorProbe probe_attractor(const ModelSpec& model,
                               const std::vector<std::vector<double>>& candidate,
                               double neighborhood_radius, const std::vector<double>& eps_list,
                               int grid_resolution, const ProbeOptions& options = {});

/// Post-burn-in flow states with equal weights: a time-average candidate for an
/// invariant measure of the flow.
EmpiricalMeasure flow_time_average(const ModelSpec& model, const SimplexPoint& x0,
                                   double horizon, double dt, double burn_in);

}  // namespace hqsd
