#include <cmath>
#include <vector>

#include "doctest.h"
#include "hqsd/error.hpp"
#include "hqsd/flow.hpp"
#include "hqsd/sde.hpp"

using namespace hqsd;

namespace {

std::vector<double> v(std::initializer_list<double> x) { return x; }

ModelSpec silent(ModelSpec m) {
  m.sigma = [](std::span<const double>, std::span<double> out) {
    for (double& s : out) s = 0.0;
  };
  return m;
}

double sup_drift(const ModelSpec& m) {
  double best = 0.0;
  for (const auto& p : simplex_lattice(m.d, 50)) {
    for (double f : m.effective_drift(p.coords())) best = std::max(best, std::fabs(f));
  }
  return best;
}

}  // namespace

TEST_CASE("zero noise reproduces the forward Euler flow bitwise") {
  for (const char* name : {"hawk_dove", "rps"}) {
    const auto m = silent(builtin(name, 10));
    const auto x0 = m.d == 2 ? validate_simplex(v({0.2, 0.8})) : validate_simplex(v({0.5, 0.3, 0.2}));
    const auto path = simulate_path(m, x0, 10.0, 0.01, Scheme::euler_clamp, 1, 0);
    const auto flow = integrate_flow(m, x0, 10.0, 0.01, FlowMethod::euler);
    REQUIRE(path.states.size() == flow.states.size());
    for (std::size_t k = 0; k < path.states.size(); ++k) CHECK(path.states[k] == flow.states[k]);
    CHECK_FALSE(path.absorbed);
  }
}

TEST_CASE("zero noise stays within the discretization gap of RK4") {
  const auto m = silent(builtin("hawk_dove", 10));
  const double dt = 0.01;
  const auto x0 = validate_simplex(v({0.2, 0.8}));
  const auto path = simulate_path(m, x0, 10.0, dt, Scheme::euler_clamp, 1, 0);
  const auto flow = integrate_flow(m, x0, 10.0, dt);
  double worst = 0.0;
  for (std::size_t k = 0; k < path.states.size(); ++k) {
    worst = std::max(worst, euclidean_distance(path.states[k].coords(), flow.states[k].coords()));
  }
  CHECK(worst < 10.0 * dt * sup_drift(m));

  const auto dev = deviation_batch(m, x0, 1.0, dt, Scheme::euler_clamp, 3, 4);
  for (const auto& d : dev) {
    CHECK(d.value < 10.0 * dt * sup_drift(m) * std::exp(m.lipschitz_bound));
    CHECK(d.horizon >= 1.0);
  }
}

TEST_CASE("a vertex start is absorbed at time zero") {
  const auto m = builtin("rps", 10);
  const auto p = simulate_path(m, vertex(3, 0), 5.0, 0.01, Scheme::euler_clamp, 1, 0);
  CHECK(p.absorbed);
  CHECK(*p.tau == 0.0);
  CHECK(p.face == std::vector<std::size_t>{1, 2});
  CHECK(p.states.size() == 1);
}

TEST_CASE("paths stay on the simplex and stop at absorption") {
  const auto m = builtin("logistic1d", 5);
  for (Scheme s : {Scheme::euler_clamp, Scheme::euler_reflect}) {
    const auto p = simulate_path(m, barycenter(2), 100.0, 1e-3, s, 9, 4);
    for (const auto& x : p.states) {
      CHECK(x.min_coord() >= 0.0);
      CHECK(std::fabs(x[0] + x[1] - 1.0) < 1e-12);
    }
    REQUIRE(p.absorbed);
    CHECK(*p.tau <= 100.0);
    CHECK(p.times.back() == doctest::Approx(*p.tau));
    for (std::size_t k = 0; k + 1 < p.states.size(); ++k) CHECK(p.states[k].min_coord() > 0.0);
  }
  const auto csv = simulate_path(m, barycenter(2), 0.01, 1e-3, Scheme::euler_clamp, 1, 0).to_csv();
  CHECK(csv.rfind("t,x1,x2,absorbed\n", 0) == 0);
}

TEST_CASE("scheme names and failures") {
  CHECK(parse_scheme("euler_reflect") == Scheme::euler_reflect);
  CHECK_THROWS_AS(parse_scheme("milstein"), InvalidArgument);
  ModelSpec bad = builtin("logistic1d", 1);
  bad.drift = [](std::span<const double> x, std::span<double> out) {
    out[0] = x[0] > 0.6 ? INFINITY : 1.0;
    out[1] = 0.0;
  };
  CHECK_THROWS_AS(simulate_path(bad, barycenter(2), 10.0, 0.01, Scheme::euler_clamp, 1, 0),
                  NumericalError);
  CHECK_THROWS_AS(simulate_path(bad, barycenter(2), 10.0, 0.0, Scheme::euler_clamp, 1, 0),
                  InvalidArgument);
}

TEST_CASE("batches are scheduling-independent") {
  const auto m = builtin("logistic1d", 25);
  const auto one = simulate_batch(m, barycenter(2), 200.0, 1e-3, Scheme::euler_clamp, 77, 1);
  const auto path = simulate_path(m, barycenter(2), 200.0, 1e-3, Scheme::euler_clamp, 77, 0, {0, 1});
  CHECK(one.records[0].tau == *path.tau);
  CHECK(one.records[0].final_state == path.states.back().vec());

  BatchOptions serial, threaded;
  threaded.workers = 3;
  const auto a = simulate_batch(m, barycenter(2), 50.0, 1e-3, Scheme::euler_clamp, 5, 40, serial);
  const auto b = simulate_batch(m, barycenter(2), 50.0, 1e-3, Scheme::euler_clamp, 5, 40, threaded);
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.summary.absorbed_fraction == b.summary.absorbed_fraction);
}

TEST_CASE("coarsened Brownian increments match the fine path") {
  // Two steps of dt/2 and one coarsened step of dt see the same Brownian
  // increment; with zero drift the noise sums agree to first order.
  const auto m = builtin("neutral2", 10000);
  const auto fine = simulate_path(m, barycenter(2), 1.0, 1e-3, Scheme::euler_clamp, 3, 0);
  const auto coarse = simulate_path(m, barycenter(2), 1.0, 2e-3, Scheme::euler_clamp, 3, 0, {1, 2});
  REQUIRE(fine.states.size() == 2 * coarse.states.size() - 1);
  double worst = 0.0;
  for (std::size_t k = 0; k < coarse.states.size(); ++k) {
    worst = std::max(worst, std::fabs(coarse.states[k][0] - fine.states[2 * k][0]));
  }
  CHECK(worst < 2e-3);
}

TEST_CASE("mean absorption time grows with N on the logistic example") {
  const auto small = simulate_batch(builtin("logistic1d", 25), barycenter(2), 200.0, 1e-3,
                                    Scheme::euler_clamp, 11, 400);
  const auto large = simulate_batch(builtin("logistic1d", 100), barycenter(2), 200.0, 1e-3,
                                    Scheme::euler_clamp, 11, 400);
  CHECK(small.summary.absorbed_fraction == 1.0);
  CHECK(large.summary.tau_mean > small.summary.tau_mean);
  MESSAGE("mean tau N=25: " << small.summary.tau_mean << " N=100: " << large.summary.tau_mean);
}

TEST_CASE("generator: hand-evaluated examples") {
  const auto m = builtin("logistic1d", 1);
  const auto x = v({0.5, 0.5});
  TestFunction lin{[](std::span<const double> p) { return p[0]; },
                   [](std::span<const double>, std::span<double> g) { g[0] = 1; g[1] = 0; },
                   [](std::span<const double>, std::span<double> h) { for (double& e : h) e = 0; }};
  TestFunction sq{[](std::span<const double> p) { return p[0] * p[0]; },
                  [](std::span<const double> p, std::span<double> g) { g[0] = 2 * p[0]; g[1] = 0; },
                  [](std::span<const double>, std::span<double> h) { h[0] = 2; h[1] = h[2] = h[3] = 0; }};
  TestFunction cst{[](std::span<const double>) { return 3.0; }, {}, {}};
  CHECK(apply_generator(m, lin, x) == doctest::Approx(0.25));
  CHECK(apply_generator(m, sq, x) == doctest::Approx(0.5));
  CHECK(std::fabs(apply_generator(m, cst, x)) < 1e-6);

  // Finite-difference fallback agrees with the analytic path.
  TestFunction sq_fd{sq.value, {}, {}};
  CHECK(apply_generator(m, sq_fd, x) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK_THROWS_AS(apply_generator(m, sq_fd, v({1e-5, 1 - 1e-5})), InvalidArgument);

  const auto r = builtin("rps", 7);
  TestFunction g{[](std::span<const double> p) { return p[0] * p[1] + std::sin(p[2]); }, {}, {}};
  TestFunction g_exact{g.value,
                       [](std::span<const double> p, std::span<double> out) {
                         out[0] = p[1]; out[1] = p[0]; out[2] = std::cos(p[2]);
                       },
                       [](std::span<const double> p, std::span<double> h) {
                         for (double& e : h) e = 0;
                         h[1] = h[3] = 1;
                         h[8] = -std::sin(p[2]);
                       }};
  const auto y = v({0.2, 0.5, 0.3});
  CHECK(apply_generator(r, g, y) == doctest::Approx(apply_generator(r, g_exact, y)).epsilon(1e-5));
}

TEST_CASE("generator matches the short-time Monte Carlo oracle") {
  const auto m = builtin("hawk_dove", 2);
  TestFunction f{[](std::span<const double> p) { return p[0] * p[0] * p[1] + p[0]; }, {}, {}};
  const auto x = v({0.4, 0.6});
  const double lf = apply_generator(m, f, x);
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    EulerStepper step(m, dt, Scheme::euler_clamp, 2024);
    const int n = 1000000;
    double s = 0, ss = 0;
    std::vector<double> y(2);
    for (int k = 0; k < n; ++k) {
      y = x;
      step.step(y, static_cast<std::uint32_t>(k), 0);
      const double q = (f.value(y) - f.value(x)) / dt;
      s += q;
      ss += q * q;
    }
    const double mean = s / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    CHECK(std::fabs(mean - lf) <= 3 * se);
  }
}

TEST_CASE("Lyapunov boundary diagnostic") {
  const auto m = builtin("logistic1d", 1);
  const auto rep = lyapunov_drift_check(m, 0, 0.02, 200);
  CHECK(rep.passed);
  CHECK(rep.alpha > 0.4);
  CHECK(rep.alpha < 0.51);
  // Independent evaluation at (0.01, 0.99): V F - x F - (σσ*)/2.
  const double x1 = 0.01, x2 = 0.99;
  const double by_hand = (-x1 * std::log(x1)) * x2 - x1 * x2 - 0.5 * x2;
  CHECK(by_hand == doctest::Approx(-0.459).epsilon(0.002));
  const auto coarse = lyapunov_drift_check(m, 0, 0.02, 2);  // points x1 = 0, 0.01
  CHECK(coarse.max_value == doctest::Approx(by_hand));

  const auto q = silent(builtin("logistic1d", 1));
  CHECK_FALSE(lyapunov_drift_check(q, 0, 0.02, 50).passed);
  CHECK_THROWS_AS(lyapunov_drift_check(m, 0, 0.6, 10), InvalidArgument);

  const auto r = builtin("rps", 1);
  const auto face = lyapunov_drift_check(r, 2, 0.1, 1);  // x3 = 0 only
  CHECK(face.max_value <= 0.0);
}
