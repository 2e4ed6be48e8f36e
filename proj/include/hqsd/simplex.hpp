#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hqsd {

/// A point of the probability simplex: nonnegative coordinates summing to one.
class SimplexPoint {
 public:
  SimplexPoint() = default;

  /// Validates and normalizes. Negative entries down to -tolerance are clamped
  /// to zero, then everything is divided by the sum.
  static SimplexPoint validate(std::span<const double> coords, double tolerance = 1e-9);

  /// Wraps coordinates already known to lie on the simplex (no checks).
  static SimplexPoint trusted(std::vector<double> coords) {
    SimplexPoint p;
    p.coords_ = std::move(coords);
    return p;
  }

  std::size_t dim() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const { return coords_; }
  const std::vector<double>& vec() const { return coords_; }

  double min_coord() const;

  /// True when some coordinate is at or below the absorption threshold.
  bool on_boundary(double threshold = 0.0) const { return min_coord() <= threshold; }

  /// Indices (0-based) of coordinates at or below threshold.
  std::vector<std::size_t> zero_face(double threshold = 0.0) const;

  friend bool operator==(const SimplexPoint&, const SimplexPoint&) = default;

 private:
  std::vector<double> coords_;
};

SimplexPoint validate_simplex(std::span<const double> coords, double tolerance = 1e-9);

/// Vertex e_i of the d-simplex.
SimplexPoint vertex(std::size_t d, std::size_t i);

SimplexPoint barycenter(std::size_t d);

/// Uniform barycentric lattice {k / resolution : k_i >= 0, sum k_i = resolution},
/// restricted to points with k_i >= min_count for every i. Enumeration order is
/// lexicographic in k, so results are reproducible.
std::vector<SimplexPoint> simplex_lattice(std::size_t d, int resolution, int min_count = 0);

/// Lattice restricted to min_i x_i >= margin.
std::vector<SimplexPoint> simplex_lattice_with_margin(std::size_t d, int resolution,
                                                      double margin);

/// Divides by the coordinate sum unless it is already 1 up to a few ulps, so
/// a state that is already normalized is left bitwise unchanged.
void renormalize_sum(std::span<double> x);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// "(x1,x2,...)" with 17 significant digits.
std::string format_coords(std::span<const double> coords);

/// Parses "a,b,c" (optionally in parentheses) into numbers.
std::vector<double> parse_coords(const std::string& text);

}  // namespace hqsd
