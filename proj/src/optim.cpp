#include "urdmu/optim.hpp"

#include <cmath>
#include <string>

#include "urdmu/errors.hpp"

namespace urdmu {

void Adam::update(std::span<Tensor> params, double lr, std::uint64_t step) {
  if (!(lr > 0)) throw ContractViolation("adam: learning rate must be > 0");
  if (step == 0) throw ContractViolation("adam: step is 1-based");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw ContractViolation("adam: parameter list changed between updates");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw ContractViolation("adam: parameter " + std::to_string(i) +
                              " has no gradient");
    }
    if (params[i].size() != m_[i].size()) {
      throw ContractViolation("adam: parameter " + std::to_string(i) +
                              " changed size");
    }
  }
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = params[i].mutable_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
      g[j] = 0.0;
    }
  }
}

}  // namespace urdmu
