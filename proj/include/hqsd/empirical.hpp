#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hqsd {

/// Equally weighted point cloud on the simplex, stored row-major.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return data_.empty(); }

  void add(std::span<const double> x) { data_.insert(data_.end(), x.begin(), x.end()); }
  void reserve(std::size_t n) { data_.reserve(n * dim_); }

  std::span<const double> point(std::size_t k) const {
    return {data_.data() + k * dim_, dim_};
  }

  /// Coordinate `i` of every point.
  std::vector<double> marginal(std::size_t i) const;

  std::vector<double> mean() const;
  std::vector<double> stddev() const;

  double min_coord() const;

  /// Every k-th point, starting at 0, keeping at most max_points.
  EmpiricalMeasure thinned(std::size_t max_points) const;

  /// "x1,...,xd" header and one row per point.
  std::string to_csv() const;

  const std::vector<double>& raw() const { return data_; }

  static EmpiricalMeasure dirac(std::span<const double> x);

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

}  // namespace hqsd
