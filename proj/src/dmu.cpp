#include "urdmu/dmu.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "urdmu/errors.hpp"
#include "urdmu/init.hpp"

namespace urdmu {

MemoryBank init_bank(std::size_t slots, std::size_t dim, BankRole role,
                     Rng& rng) {
  if (slots == 0 || dim == 0) {
    throw ContractViolation("memory bank needs M >= 1 and D >= 1");
  }
  return {gaussian(slots, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng),
          role};
}

std::size_t topk_count(std::size_t m) { return m / 16 + 1; }

TopK topk_rows(std::span<const double> v, std::size_t k) {
  if (k < 1 || k > v.size()) {
    throw ContractViolation("topk: need 1 <= k <= " + std::to_string(v.size()) +
                            ", got " + std::to_string(k));
  }
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return v[a] > v[b] || (v[a] == v[b] && a < b);
                    });
  idx.resize(k);
  TopK out;
  double sum = 0.0;
  for (auto i : idx) sum += v[i];
  out.indices = std::move(idx);
  out.mean = sum / static_cast<double>(k);
  return out;
}

QueryResult memory_query(const Tensor& x, const MemoryBank& bank) {
  if (x.cols() != bank.dim()) {
    throw ContractViolation("memory_query: feature dim " +
                            std::to_string(x.cols()) + " vs bank dim " +
                            std::to_string(bank.dim()));
  }
  const std::size_t n = x.rows(), m = bank.slots();
  const std::size_t k = topk_count(m);
  QueryResult q;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(bank.dim()));
  q.scores = sigmoid(
      scalar_mul(matmul(x, transpose(bank.prototypes)), inv_sqrt_d));
  q.augmented = matmul(q.scores, bank.prototypes);

  Tensor mask = Tensor::zeros({n, m});
  auto md = mask.mutable_data();
  const auto sd = q.scores.data();
  q.topk_index.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto top = topk_rows(sd.subspan(i * m, m), k);
    for (auto j : top.indices) md[i * m + j] = 1.0;
    q.topk_index.push_back(std::move(top.indices));
  }
  q.topk_mean = scalar_mul(reduce_sum(mul(q.scores, mask), 1),
                           1.0 / static_cast<double>(k));
  return q;
}

Tensor topk_mean(const Tensor& v, std::size_t k) {
  const auto top = topk_rows(v.data(), k);
  Tensor mask = Tensor::zeros(v.shape());
  for (auto i : top.indices) mask.mutable_data()[i] = 1.0;
  return scalar_mul(reduce_sum(mul(v, mask)), 1.0 / static_cast<double>(k));
}

Tensor topk_row_mean(const Tensor& scores, const Tensor& x, std::size_t k) {
  if (scores.size() != x.rows()) {
    throw ContractViolation("topk_row_mean: " + std::to_string(scores.size()) +
                            " scores for " + std::to_string(x.rows()) + " rows");
  }
  const auto top = topk_rows(scores.data(), k);
  Tensor sel = Tensor::zeros({1, x.rows()});
  for (auto i : top.indices) {
    sel.mutable_data()[i] = 1.0 / static_cast<double>(k);
  }
  return matmul(sel, x);
}

Tensor bce_mean(const Tensor& p, double target) {
  const auto clamped_log = [](const Tensor& x) {
    return reduce_mean(log(x, kBceFloor, 1.0 - kBceFloor));
  };
  Tensor loss;
  if (target == 1.0) {
    loss = clamped_log(p);
  } else if (target == 0.0) {
    loss = clamped_log(scalar_mul(p, -1.0, 1.0));
  } else {
    loss = add(scalar_mul(clamped_log(p), target),
               scalar_mul(clamped_log(scalar_mul(p, -1.0, 1.0)), 1.0 - target));
  }
  return scalar_mul(loss, -1.0);
}

Tensor dual_memory_loss(const Tensor& nbank_nvid, const Tensor& abank_nvid,
                        const Tensor& nbank_avid, const Tensor& abank_avid) {
  const std::size_t n = nbank_avid.size();
  if (nbank_nvid.size() != abank_nvid.size() || abank_avid.size() != n) {
    throw ContractViolation("dual_memory_loss: score vectors differ in length");
  }
  const std::size_t k = topk_count(n);
  const Tensor a = bce_mean(nbank_nvid, 1.0);
  const Tensor b = bce_mean(abank_nvid, 0.0);
  const Tensor c = bce_mean(topk_mean(nbank_avid, k), 1.0);
  const Tensor d = bce_mean(topk_mean(abank_avid, k), 1.0);
  return add(add(a, b), add(c, d));
}

Tensor triplet_separation_loss(const Tensor& nbank_nvid, const Tensor& x_n,
                               const Tensor& nbank_avid,
                               const Tensor& abank_avid, const Tensor& x_a,
                               double margin) {
  if (x_n.cols() != x_a.cols()) {
    throw ContractViolation("triplet: feature widths differ");
  }
  const Tensor f_a = topk_row_mean(nbank_nvid, x_n, topk_count(x_n.rows()));
  const Tensor f_p = topk_row_mean(nbank_avid, x_a, topk_count(x_a.rows()));
  const Tensor f_n = topk_row_mean(abank_avid, x_a, topk_count(x_a.rows()));
  const Tensor d_pos = sqrt(sq_l2_norm_rows(sub(f_a, f_p)));
  const Tensor d_neg = sqrt(sq_l2_norm_rows(sub(f_a, f_n)));
  return reduce_sum(relu(scalar_mul(sub(d_pos, d_neg), 1.0, margin)));
}

}  // namespace urdmu
