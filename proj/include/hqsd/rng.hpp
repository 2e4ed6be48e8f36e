#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace hqsd {

// Counter-based generator (Philox4x32-10). Every variate is a pure function of
// (seed, purpose, stream, index), so results do not depend on which worker
// computes them or in which order.

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key);

/// Independent families of draws sharing one seed.
enum class Purpose : std::uint32_t {
  brownian = 0,
  resample = 1,
  initial = 2,
  bootstrap = 3,
  synthetic = 4,
};

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Standard normals for channels [0, out.size()) of (stream, step).
  void normals(std::uint32_t stream, std::uint64_t step, std::span<double> out) const;

  /// Uniform on the open interval (0, 1).
  double uniform(Purpose purpose, std::uint64_t stream, std::uint64_t index) const;

  /// Uniform integer in [0, n).
  std::uint64_t below(Purpose purpose, std::uint64_t stream, std::uint64_t index,
                      std::uint64_t n) const;

  /// Standard normal keyed like uniform().
  double normal(Purpose purpose, std::uint64_t stream, std::uint64_t index) const;

 private:
  PhiloxCounter raw(Purpose purpose, std::uint64_t stream, std::uint64_t index,
                    std::uint32_t block) const;

  std::uint64_t seed_;
};

/// Uniform in (0, 1) on the midpoints of a 2^-52 grid, from 64 random bits.
/// Both ends stay exactly representable, so neither 0 nor 1 can occur.
inline double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

}  // namespace hqsd
