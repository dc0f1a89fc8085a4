#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "urdmu/tensor.hpp"

namespace urdmu {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are bound positionally to the
// parameter list given on the first update; later calls must pass the same
// list in the same order.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // `step` is 1-based and drives the bias correction. Every parameter must
  // carry a gradient (ContractViolation otherwise); gradients are zeroed
  // after the update.
  void update(std::span<Tensor> params, double lr, std::uint64_t step);

  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace urdmu
