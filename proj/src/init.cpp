#include "urdmu/init.hpp"

#include <cmath>

namespace urdmu {

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

Tensor gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
  std::vector<double> w(rows * cols);
  for (double& v : w) v = sd * rng.normal();
  return Tensor::from({rows, cols}, std::move(w), true);
}

}  // namespace urdmu
