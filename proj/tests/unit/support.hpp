#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tempdir.hpp"
#include "urdmu/rng.hpp"
#include "urdmu/tensor.hpp"

namespace urdmu::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0, bool grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// sum(out * w) for a fixed random w: reduces any output to a scalar whose
// gradient exercises every output coordinate.
inline Tensor probe(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed);
  return reduce_sum(mul(out, random_tensor(out.shape(), rng, -1, 1, false)));
}

inline std::vector<double> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace urdmu::testing
