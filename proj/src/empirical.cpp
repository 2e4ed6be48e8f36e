#include "hqsd/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hqsd/csv.hpp"

namespace hqsd {

std::vector<double> EmpiricalMeasure::marginal(std::size_t i) const {
  std::vector<double> out(size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = data_[k * dim_ + i];
  return out;
}

std::vector<double> EmpiricalMeasure::mean() const {
  std::vector<double> m(dim_, 0.0);
  const std::size_t n = size();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < dim_; ++i) m[i] += data_[k * dim_ + i];
  }
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

std::vector<double> EmpiricalMeasure::stddev() const {
  const auto m = mean();
  std::vector<double> s(dim_, 0.0);
  const std::size_t n = size();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < dim_; ++i) {
      const double diff = data_[k * dim_ + i] - m[i];
      s[i] += diff * diff;
    }
  }
  for (double& v : s) v = n > 1 ? std::sqrt(v / static_cast<double>(n - 1)) : 0.0;
  return s;
}

double EmpiricalMeasure::min_coord() const {
  if (data_.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::min_element(data_.begin(), data_.end());
}

EmpiricalMeasure EmpiricalMeasure::thinned(std::size_t max_points) const {
  const std::size_t n = size();
  if (n <= max_points || max_points == 0) return *this;
  EmpiricalMeasure out(dim_);
  out.reserve(max_points);
  for (std::size_t j = 0; j < max_points; ++j) {
    // Evenly spaced picks across the whole set.
    const std::size_t k = j * n / max_points;
    out.add(point(k));
  }
  return out;
}

std::string EmpiricalMeasure::to_csv() const {
  std::string out = coord_header(dim_) + "\n";
  const std::size_t n = size();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < dim_; ++i) {
      if (i) out += ',';
      out += format_double(data_[k * dim_ + i]);
    }
    out += '\n';
  }
  return out;
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> x) {
  EmpiricalMeasure m(x.size());
  m.add(x);
  return m;
}

}  // namespace hqsd
