#pragma once

#include <cstddef>

#include "urdmu/rng.hpp"
#include "urdmu/tensor.hpp"

namespace urdmu {

// Glorot-uniform weight matrix (rows = fan_in, cols = fan_out).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// i.i.d. N(0, sd^2) matrix.
Tensor gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng);

}  // namespace urdmu
