#include "hqsd/rng.hpp"

#include <cmath>
#include <numbers>

namespace hqsd {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53;
constexpr std::uint32_t kMulB = 0xCD9E8D57;
constexpr std::uint32_t kWeylA = 0x9E3779B9;
constexpr std::uint32_t kWeylB = 0xBB67AE85;

inline void philox_round(PhiloxCounter& c, const PhiloxKey& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline std::uint64_t join(std::uint32_t hi, std::uint32_t lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

inline void box_muller(std::uint64_t a, std::uint64_t b, double& z0, double& z1) {
  const double r = std::sqrt(-2.0 * std::log(to_open_unit(a)));
  const double angle = 2.0 * std::numbers::pi * to_open_unit(b);
  z0 = r * std::cos(angle);
  z1 = r * std::sin(angle);
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    philox_round(ctr, key);
  }
  return ctr;
}

// Counter layout: [index lo, index hi, stream lo, purpose:8 | stream hi:8 | block:16].
PhiloxCounter CounterRng::raw(Purpose purpose, std::uint64_t stream, std::uint64_t index,
                              std::uint32_t block) const {
  const PhiloxCounter ctr = {
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
      static_cast<std::uint32_t>(stream),
      (static_cast<std::uint32_t>(purpose) << 24) |
          ((static_cast<std::uint32_t>(stream >> 32) & 0xFFu) << 16) | (block & 0xFFFFu)};
  const PhiloxKey key = {static_cast<std::uint32_t>(seed_),
                         static_cast<std::uint32_t>(seed_ >> 32)};
  return philox4x32(ctr, key);
}

void CounterRng::normals(std::uint32_t stream, std::uint64_t step,
                         std::span<double> out) const {
  const std::size_t n = out.size();
  for (std::size_t block = 0; 2 * block < n; ++block) {
    const auto r = raw(Purpose::brownian, stream, step, static_cast<std::uint32_t>(block));
    double z0 = 0.0;
    double z1 = 0.0;
    box_muller(join(r[0], r[1]), join(r[2], r[3]), z0, z1);
    out[2 * block] = z0;
    if (2 * block + 1 < n) out[2 * block + 1] = z1;
  }
}

double CounterRng::uniform(Purpose purpose, std::uint64_t stream, std::uint64_t index) const {
  const auto r = raw(purpose, stream, index, 0);
  return to_open_unit(join(r[0], r[1]));
}

std::uint64_t CounterRng::below(Purpose purpose, std::uint64_t stream, std::uint64_t index,
                                std::uint64_t n) const {
  // Multiply-shift on 64 bits; bias is < n / 2^64.
  const auto r = raw(purpose, stream, index, 0);
  const unsigned __int128 wide = static_cast<unsigned __int128>(join(r[0], r[1])) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double CounterRng::normal(Purpose purpose, std::uint64_t stream, std::uint64_t index) const {
  const auto r = raw(purpose, stream, index, 1);
  double z0 = 0.0;
  double z1 = 0.0;
  box_muller(join(r[0], r[1]), join(r[2], r[3]), z0, z1);
  return z0;
}

}  // namespace hqsd
