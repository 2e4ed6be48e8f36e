#include <cmath>
#include <vector>

#include "doctest.h"
#include "hqsd/rng.hpp"

using namespace hqsd;

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("draws are pure functions of their coordinates") {
  CounterRng a(42), b(42), c(43);
  std::vector<double> za(3), zb(3), zc(3);
  a.normals(7, 1000, za);
  b.normals(7, 1000, zb);
  c.normals(7, 1000, zc);
  CHECK(za == zb);
  CHECK(za != zc);
  CHECK(a.uniform(Purpose::resample, 3, 9) == b.uniform(Purpose::resample, 3, 9));
  CHECK(a.uniform(Purpose::resample, 3, 9) != a.uniform(Purpose::initial, 3, 9));
}

TEST_CASE("uniforms stay in the open unit interval") {
  CHECK(to_open_unit(0) > 0.0);
  CHECK(to_open_unit(~0ULL) < 1.0);
  CounterRng r(1);
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const auto v = r.below(Purpose::bootstrap, 0, k, 7);
    CHECK(v < 7);
  }
}

TEST_CASE("normal moments") {
  CounterRng r(2024);
  const int n = 200000;
  std::vector<double> z(2);
  double s1 = 0, s2 = 0, s4 = 0;
  for (int k = 0; k < n / 2; ++k) {
    r.normals(0, static_cast<std::uint64_t>(k), z);
    for (double v : z) {
      s1 += v;
      s2 += v * v;
      s4 += v * v * v * v;
    }
  }
  CHECK(std::fabs(s1 / n) < 5.0 / std::sqrt(n));
  CHECK(std::fabs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::fabs(s4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
}
