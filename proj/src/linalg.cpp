#include "hqsd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hqsd {

double operator_norm(std::span<const double> m, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) return 0.0;
  // Gram matrix G = M^T M (cols x cols).
  std::vector<double> gram(cols * cols, 0.0);
  for (std::size_t a = 0; a < cols; ++a) {
    for (std::size_t b = 0; b < cols; ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += m[r * cols + a] * m[r * cols + b];
      gram[a * cols + b] = s;
    }
  }
  double trace = 0.0;
  for (std::size_t a = 0; a < cols; ++a) trace += gram[a * cols + a];
  if (trace <= 0.0) return 0.0;

  std::vector<double> v(cols), w(cols);
  // Deterministic start with no special alignment.
  for (std::size_t a = 0; a < cols; ++a) v[a] = 1.0 + 0.1 * static_cast<double>(a);
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    for (std::size_t a = 0; a < cols; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < cols; ++b) s += gram[a * cols + b] * v[b];
      w[a] = s;
    }
    double next = 0.0;
    for (std::size_t a = 0; a < cols; ++a) next += v[a] * w[a];
    v.swap(w);
    if (std::abs(next - lambda) <= 1e-15 * std::max(1.0, next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace hqsd
