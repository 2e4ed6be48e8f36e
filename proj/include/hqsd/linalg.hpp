#pragma once

#include <cstddef>
#include <span>

namespace hqsd {

/// Largest singular value of a row-major rows x cols matrix (power iteration
/// on the Gram matrix; sizes here are tiny).
double operator_norm(std::span<const double> m, std::size_t rows, std::size_t cols);

}  // namespace hqsd
