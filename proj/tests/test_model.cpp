#include <cmath>
#include <vector>

#include "doctest.h"
#include "hqsd/error.hpp"
#include "hqsd/model.hpp"
#include "hqsd/simplex.hpp"

using namespace hqsd;

TEST_CASE("validate_simplex") {
  const auto p = validate_simplex(std::vector<double>{0.2, 0.3, 0.5});
  CHECK(p.min_coord() == doctest::Approx(0.2));
  CHECK_FALSE(p.on_boundary());

  const auto v = validate_simplex(std::vector<double>{1.0, 0.0, 0.0});
  CHECK(v.on_boundary());
  CHECK(v.zero_face() == std::vector<std::size_t>{1, 2});

  CHECK_THROWS_AS(validate_simplex(std::vector<double>{0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(validate_simplex(std::vector<double>{-0.1, 1.1}), InvalidArgument);
  CHECK_THROWS_AS(validate_simplex(std::vector<double>{0.0, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(validate_simplex(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("validate_simplex is idempotent bitwise") {
  const double raw[][3] = {{0.1, 0.2, 0.7}, {1.0 / 3, 1.0 / 3, 1.0 / 3},
                           {0.3 + 1e-10, 0.3, 0.4}, {-1e-12, 0.5, 0.5 + 1e-12}};
  for (const auto& r : raw) {
    const auto once = validate_simplex(std::vector<double>(r, r + 3));
    const auto twice = validate_simplex(once.coords());
    CHECK(once == twice);
  }
  for (const auto& p : simplex_lattice(3, 17)) {
    CHECK(validate_simplex(p.coords()) == validate_simplex(validate_simplex(p.coords()).coords()));
  }
}

TEST_CASE("lattice enumeration") {
  CHECK(simplex_lattice(2, 10).size() == 11);
  CHECK(simplex_lattice(3, 10).size() == 66);
  CHECK(simplex_lattice_with_margin(2, 20, 0.05).size() == 19);
}

TEST_CASE("from_rates: symmetric rates cancel") {
  const auto m = from_rates(constant_rates(2, {0.0, 1.0, 1.0, 0.0}));
  CHECK(m.l == 1);
  for (const auto& p : simplex_lattice(2, 10)) {
    const auto f = m.eval_drift(p.coords());
    CHECK(f[0] == doctest::Approx(0.0));
    CHECK(f[1] == doctest::Approx(0.0));
  }
}

TEST_CASE("from_rates: one-sided rates give the logistic example") {
  const auto m = from_rates(constant_rates(2, {0.0, 0.0, 1.0, 0.0}));
  for (const auto& p : simplex_lattice(2, 40)) {
    const auto f = m.eval_drift(p.coords());
    CHECK(f[0] == doctest::Approx(p[1]).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(-p[0]).epsilon(1e-12));
    CHECK(m.sigma_diag(p.coords())[0] == doctest::Approx(p[1]).epsilon(1e-12));
    // Marginal of coordinate 1: drift x(1-x) and squared diffusion x(1-x).
    const auto b = m.effective_drift(p.coords());
    const auto cov = m.covariance(p.coords());
    CHECK(std::fabs(b[0] - p[0] * (1 - p[0])) < 1e-12);
    CHECK(std::fabs(cov[0] - p[0] * (1 - p[0])) < 1e-12);
  }
}

TEST_CASE("from_rates: covariance matches the pair sum, tangency holds") {
  // Asymmetric constant rates plus one state-dependent family.
  const std::vector<double> table = {0.0, 0.7, 1.3, 0.2, 0.0, 2.1, 0.9, 0.4, 0.0};
  RateSpec dep;
  dep.d = 3;
  dep.lambda = [](std::size_t i, std::size_t j, std::span<const double> x) {
    return 0.5 + x[j] + 0.3 * static_cast<double>(i) * x[i];
  };
  for (const RateSpec& rates : {constant_rates(3, table), dep}) {
    const auto m = from_rates(rates, 1);
    CHECK(m.l == 3);
    for (const auto& p : simplex_lattice(3, 12)) {
      const auto x = p.coords();
      const auto cov = m.covariance(x);
      std::vector<double> brute(9, 0.0);
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) {
          const double w = x[i] * x[j] * (rates.lambda(i, j, x) + rates.lambda(j, i, x));
          // (e_j - e_i)(e_j - e_i)^T
          brute[i * 3 + i] += w;
          brute[j * 3 + j] += w;
          brute[i * 3 + j] -= w;
          brute[j * 3 + i] -= w;
        }
      }
      for (std::size_t k = 0; k < 9; ++k) CHECK(std::fabs(cov[k] - brute[k]) < 1e-9);

      const auto f = m.eval_drift(x);
      double tangent = 0.0;
      for (std::size_t i = 0; i < 3; ++i) tangent += x[i] * f[i];
      CHECK(std::fabs(tangent) < 1e-9);
      const auto s = m.eval_sigma(x);
      for (std::size_t c = 0; c < m.l; ++c) {
        double col = 0.0;
        for (std::size_t i = 0; i < 3; ++i) col += std::sqrt(x[i]) * s[i * m.l + c];
        CHECK(std::fabs(col) < 1e-9);
      }
    }
  }
}

TEST_CASE("from_rates rejects d < 2") {
  CHECK_THROWS_AS(from_rates(constant_rates(1, {0.0})), InvalidArgument);
}

TEST_CASE("check_hypotheses on the logistic example") {
  const auto m = builtin("logistic1d", 1);
  const auto rep = check_hypotheses(m, 40, 0.05);
  CHECK(rep[2].status == HypothesisStatus::pass);
  CHECK(rep[4].status == HypothesisStatus::pass);
  CHECK(rep[5].status == HypothesisStatus::partial);
  CHECK(rep.min_sigma_diag_interior == doctest::Approx(0.05));
  CHECK(rep[3].status != HypothesisStatus::pass);
  CHECK(rep.to_text().find("H5: PARTIAL") != std::string::npos);
}

TEST_CASE("check_hypotheses flags a non-tangent drift and zero noise") {
  ModelSpec m = builtin("logistic1d", 1);
  m.drift = [](std::span<const double>, std::span<double> out) {
    for (double& v : out) v = 0.5;
  };
  m.sigma = [](std::span<const double>, std::span<double> out) {
    for (double& v : out) v = 0.0;
  };
  const auto rep = check_hypotheses(m, 20, 0.05);
  CHECK(rep[2].status == HypothesisStatus::fail);
  CHECK_FALSE(rep[2].witness.empty());
  CHECK(rep[5].status == HypothesisStatus::fail);
  CHECK_THROWS_AS(check_hypotheses(m, 1, 0.0), InvalidArgument);
  CHECK_THROWS_AS(check_hypotheses(m, 10, 0.5), InvalidArgument);
}

TEST_CASE("builtins") {
  const auto lg = builtin("logistic1d", 1);
  const std::vector<double> half = {0.5, 0.5};
  const auto b = lg.effective_drift(half);
  CHECK(b[0] == doctest::Approx(0.25));
  CHECK(b[1] == doctest::Approx(-0.25));
  CHECK(lg.covariance(half)[0] == doctest::Approx(0.25));

  const auto hd = builtin("hawk_dove", 10);
  const std::vector<double> star = {2.0 / 3.0, 1.0 / 3.0};
  for (double v : hd.eval_drift(star)) CHECK(std::fabs(v) < 1e-14);

  const auto rps = builtin("rps", 10);
  const std::vector<double> bary = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  for (double v : rps.eval_drift(bary)) CHECK(std::fabs(v) < 1e-14);

  CHECK(builtin("hawk_dove", 64).n_size == 64);
  CHECK_THROWS_AS(builtin("nope", 1), InvalidArgument);
}
