#include "hqsd/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hqsd/csv.hpp"
#include "hqsd/error.hpp"

namespace hqsd {

SimplexPoint SimplexPoint::validate(std::span<const double> coords, double tolerance) {
  if (coords.empty()) throw InvalidArgument("simplex point: no coordinates");
  double sum = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double c = coords[i];
    if (!std::isfinite(c)) throw InvalidArgument("simplex point: non-finite coordinate");
    if (c < -tolerance) {
      throw InvalidArgument("simplex point: coordinate " + std::to_string(i + 1) +
                            " is negative (" + format_double(c) + ")");
    }
    sum += c;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw InvalidArgument("simplex point: coordinates sum to " + format_double(sum));
  }
  std::vector<double> out(coords.begin(), coords.end());
  for (double& c : out) c = std::max(c, 0.0);
  const double clamped_sum = std::accumulate(out.begin(), out.end(), 0.0);
  if (clamped_sum <= 0.0) throw InvalidArgument("simplex point: all coordinates are zero");
  // A sum already within rounding of one is left alone; this makes validation
  // idempotent bitwise (a second division could perturb the last ulp).
  const double rounding = 8.0 * std::numeric_limits<double>::epsilon() *
                          static_cast<double>(out.size());
  if (std::abs(clamped_sum - 1.0) > rounding) {
    for (double& c : out) c /= clamped_sum;
  }
  return trusted(std::move(out));
}

double SimplexPoint::min_coord() const {
  return *std::min_element(coords_.begin(), coords_.end());
}

std::vector<std::size_t> SimplexPoint::zero_face(double threshold) const {
  std::vector<std::size_t> face;
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    if (coords_[i] <= threshold) face.push_back(i);
  }
  return face;
}

SimplexPoint validate_simplex(std::span<const double> coords, double tolerance) {
  return SimplexPoint::validate(coords, tolerance);
}

SimplexPoint vertex(std::size_t d, std::size_t i) {
  std::vector<double> c(d, 0.0);
  c.at(i) = 1.0;
  return SimplexPoint::trusted(std::move(c));
}

SimplexPoint barycenter(std::size_t d) {
  return SimplexPoint::trusted(std::vector<double>(d, 1.0 / static_cast<double>(d)));
}

namespace {

void enumerate(std::size_t d, int resolution, int min_count, std::size_t pos, int remaining,
               std::vector<int>& k, std::vector<SimplexPoint>& out) {
  if (pos + 1 == d) {
    if (remaining < min_count) return;
    k[pos] = remaining;
    std::vector<double> c(d);
    for (std::size_t i = 0; i < d; ++i) c[i] = static_cast<double>(k[i]) / resolution;
    out.push_back(SimplexPoint::trusted(std::move(c)));
    return;
  }
  for (int v = min_count; v <= remaining; ++v) {
    k[pos] = v;
    enumerate(d, resolution, min_count, pos + 1, remaining - v, k, out);
  }
}

}  // namespace

std::vector<SimplexPoint> simplex_lattice(std::size_t d, int resolution, int min_count) {
  if (d < 1 || resolution < 1) throw InvalidArgument("simplex lattice: bad dimensions");
  std::vector<SimplexPoint> out;
  std::vector<int> k(d, 0);
  enumerate(d, resolution, std::max(min_count, 0), 0, resolution, k, out);
  return out;
}

std::vector<SimplexPoint> simplex_lattice_with_margin(std::size_t d, int resolution,
                                                      double margin) {
  const int min_count = static_cast<int>(std::ceil(margin * resolution - 1e-9));
  return simplex_lattice(d, resolution, min_count);
}

void renormalize_sum(std::span<double> x) {
  double sum = 0.0;
  for (double v : x) sum += v;
  const double rounding = 8.0 * std::numeric_limits<double>::epsilon() *
                          static_cast<double>(x.size());
  if (std::fabs(sum - 1.0) <= rounding) return;
  for (double& v : x) v /= sum;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

std::string format_coords(std::span<const double> coords) {
  std::string s = "(";
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (i) s += ',';
    s += format_double(coords[i]);
  }
  s += ')';
  return s;
}

std::vector<double> parse_coords(const std::string& text) {
  std::string t = text;
  std::erase_if(t, [](char c) { return c == '(' || c == ')' || c == ' ' || c == '\t'; });
  std::vector<double> out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw InvalidArgument("empty coordinate in '" + text + "'");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("not a number: '" + item + "'");
    }
    if (used != item.size()) throw InvalidArgument("not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("no coordinates in '" + text + "'");
  return out;
}

}  // namespace hqsd
