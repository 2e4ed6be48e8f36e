#include <cmath>
#include <vector>

#include "doctest.h"
#include "hqsd/error.hpp"
#include "hqsd/flow.hpp"

using namespace hqsd;

namespace {
std::vector<double> v(std::initializer_list<double> x) { return x; }
}

TEST_CASE("hawk_dove converges to its interior fixed point") {
  const auto m = builtin("hawk_dove", 1);
  const auto tr = integrate_flow(m, validate_simplex(v({0.5, 0.5})), 50.0, 0.01);
  CHECK(tr.final_time() >= 50.0);
  CHECK(std::fabs(tr.final_state()[0] - 2.0 / 3.0) < 1e-6);
  CHECK(tr.times.front() == 0.0);
}

TEST_CASE("vertices are fixed exactly") {
  for (const auto& name : builtin_names()) {
    const auto m = builtin(name, 1);
    for (std::size_t i = 0; i < m.d; ++i) {
      const auto e = vertex(m.d, i);
      const auto tr = integrate_flow(m, e, 5.0, 0.01);
      for (const auto& s : tr.states) CHECK(s == e);
    }
  }
}

TEST_CASE("logistic flow matches the closed form") {
  const auto m = builtin("logistic1d", 1);
  const auto tr = integrate_flow(m, validate_simplex(v({0.01, 0.99})), 20.0, 0.01);
  CHECK(tr.final_state()[0] > 0.99);
  for (std::size_t k = 0; k < tr.times.size(); k += 97) {
    const double t = tr.times[k];
    const double exact = 0.01 * std::exp(t) / (0.99 + 0.01 * std::exp(t));
    CHECK(std::fabs(tr.states[k][0] - exact) < 1e-8);
  }
}

TEST_CASE("fourth-order convergence") {
  for (const char* name : {"hawk_dove", "rps", "logistic1d"}) {
    const auto m = builtin(name, 1);
    const auto x0 = m.d == 2 ? validate_simplex(v({0.2, 0.8})) : validate_simplex(v({0.5, 0.3, 0.2}));
    const double base = 0.2;
    const auto ref = integrate_flow(m, x0, 4.0, base / 16).final_state();
    const double e1 = euclidean_distance(integrate_flow(m, x0, 4.0, base).final_state().coords(), ref.coords());
    const double e2 = euclidean_distance(integrate_flow(m, x0, 4.0, base / 2).final_state().coords(), ref.coords());
    CHECK(e1 / e2 >= 8.0);
  }
}

TEST_CASE("flow stays on the simplex before renormalization") {
  const auto m = builtin("rps", 1);
  std::vector<double> x = {0.6, 0.3, 0.1};
  std::vector<double> scratch;
  for (int k = 0; k < 2000; ++k) {
    flow_step(m, x, 0.01, FlowMethod::rk4, scratch);
    double sum = 0;
    for (double c : x) {
      CHECK(c >= -1e-12);
      sum += c;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("integrate_flow argument checks") {
  const auto m = builtin("logistic1d", 1);
  CHECK_THROWS_AS(integrate_flow(m, barycenter(2), 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(integrate_flow(m, barycenter(2), 0.001, 0.01), InvalidArgument);
  ModelSpec bad = m;
  bad.drift = [](std::span<const double>, std::span<double> out) {
    out[0] = NAN;
    out[1] = 0.0;
  };
  CHECK_THROWS_AS(integrate_flow(bad, barycenter(2), 1.0, 0.1), NumericalError);
}

TEST_CASE("FlowTrajectory csv and interpolation") {
  const auto m = builtin("logistic1d", 1);
  const auto tr = integrate_flow(m, barycenter(2), 0.3, 0.1);
  const auto csv = tr.to_csv();
  CHECK(csv.rfind("t,x1,x2\n", 0) == 0);
  const auto mid = tr.at(0.05);
  CHECK(mid[0] == doctest::Approx(0.5 * (tr.states[0][0] + tr.states[1][0])));
}

TEST_CASE("probe_attractor") {
  const auto hd = builtin("hawk_dove", 1);
  const auto ok = probe_attractor(hd, {{2.0 / 3, 1.0 / 3}}, 0.2, {0.05, 0.01}, 100);
  CHECK(ok.converged);
  CHECK(std::isfinite(ok.convergence_time[1]));
  CHECK(ok.convergence_time[0] <= ok.convergence_time[1]);
  CHECK(ok.grid_points > 10);

  const auto lg = builtin("logistic1d", 1);
  CHECK_THROWS_AS(probe_attractor(lg, {{1.0, 0.0}}, 0.1, {0.01}, 50), InvalidArgument);

  const auto rps = builtin("rps", 1);
  ProbeOptions opt;
  opt.stop_horizon = 200.0;
  const auto bad = probe_attractor(rps, {{1.0 / 3, 1.0 / 3, 1.0 / 3}}, 0.1, {0.01}, 30, opt);
  CHECK_FALSE(bad.converged);
  CHECK(std::isnan(bad.convergence_time[0]));
  CHECK(bad.message.find("not an attractor") != std::string::npos);
}

TEST_CASE("flow_time_average") {
  const auto hd = builtin("hawk_dove", 1);
  const auto mu = flow_time_average(hd, validate_simplex(v({0.1, 0.9})), 200.0, 0.01, 100.0);
  CHECK(mu.stddev()[0] < 1e-4);
  CHECK(mu.mean()[0] == doctest::Approx(2.0 / 3).epsilon(1e-6));

  ModelSpec still = builtin("neutral2", 1);
  const auto dirac = flow_time_average(still, validate_simplex(v({0.3, 0.7})), 10.0, 0.1, 5.0);
  const auto start = validate_simplex(v({0.3, 0.7}));
  for (std::size_t k = 0; k < dirac.size(); ++k) {
    CHECK(dirac.point(k)[0] == start[0]);
    CHECK(dirac.point(k)[1] == start[1]);
  }

  const auto rps = builtin("rps", 1);
  const auto orbit = flow_time_average(rps, validate_simplex(v({0.5, 0.3, 0.2})), 2000.0, 0.01, 100.0);
  for (double c : orbit.mean()) CHECK(std::fabs(c - 1.0 / 3) < 1e-2);
  CHECK(orbit.stddev()[0] > 1e-2);

  CHECK_THROWS_AS(flow_time_average(hd, barycenter(2), 10.0, 0.1, 10.0), InvalidArgument);
}
