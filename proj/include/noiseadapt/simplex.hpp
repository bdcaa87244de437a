#pragma once

#include <span>
#include <vector>

#include "noiseadapt/matrix.hpp"

namespace noiseadapt {

// Euclidean projection onto {w : w_i >= 0, sum w_i = 1}, computed with the
// sort-and-threshold method in O(n log n). Throws std::invalid_argument on
// empty or non-finite input.
std::vector<double> project_to_simplex(std::span<const double> v);

// Projects every column of m onto the probability simplex independently.
Matrix project_columns_stochastic(const Matrix& m);

}  // namespace noiseadapt
