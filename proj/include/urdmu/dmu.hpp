#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "urdmu/rng.hpp"
#include "urdmu/tensor.hpp"

namespace urdmu {

enum class BankRole { kNormal, kAbnormal };

struct MemoryBank {
  Tensor prototypes;  // M x D
  BankRole role = BankRole::kNormal;

  std::size_t slots() const { return prototypes.rows(); }
  std::size_t dim() const { return prototypes.cols(); }
};

// Prototypes drawn i.i.d. from N(0, 1/D).
MemoryBank init_bank(std::size_t slots, std::size_t dim, BankRole role,
                     Rng& rng);

// K = floor(m / 16) + 1, the top-K size used by every selection.
std::size_t topk_count(std::size_t m);

struct TopK {
  std::vector<std::size_t> indices;  // descending value, lower index on ties
  double mean = 0.0;
};

// Deterministic top-k of a vector. Throws ContractViolation unless
// 1 <= k <= v.size().
TopK topk_rows(std::span<const double> v, std::size_t k);

struct QueryResult {
  Tensor scores;     // S, N x M, sigmoid(x proto^T / sqrt(D))
  Tensor augmented;  // M_aug = S proto, N x D
  Tensor topk_mean;  // S_k, N x 1: mean of each row's K largest scores
  std::vector<std::vector<std::size_t>> topk_index;  // N x K
};

QueryResult memory_query(const Tensor& x, const MemoryBank& bank);

// Mean of the k largest entries of a vector-shaped tensor; gradient flows to
// the selected entries only.
Tensor topk_mean(const Tensor& v, std::size_t k);

// Mean of the rows of `x` (N x D) picked by the top-k entries of `scores`
// (N values); returns 1 x D.
Tensor topk_row_mean(const Tensor& scores, const Tensor& x, std::size_t k);

// Mean binary cross-entropy against a constant target. Probabilities are
// clamped to [1e-7, 1 - 1e-7].
Tensor bce_mean(const Tensor& p, double target);

inline constexpr double kBceFloor = 1e-7;

// Four-term dual memory loss over the per-snippet S_k vectors (N x 1), named
// <bank>_<video>: e.g. abank_nvid is the abnormal bank queried by the normal
// video. Targets are 1, 0, and 1 / 1 for the top-K means of the last two.
Tensor dual_memory_loss(const Tensor& nbank_nvid, const Tensor& abank_nvid,
                        const Tensor& nbank_avid, const Tensor& abank_avid);

// max(0, |f_a - f_p| - |f_a - f_n| + margin). Anchor: top-K rows of x_n by
// nbank_nvid; positive: rows of x_a by nbank_avid; negative: rows of x_a by
// abank_avid.
Tensor triplet_separation_loss(const Tensor& nbank_nvid, const Tensor& x_n,
                               const Tensor& nbank_avid,
                               const Tensor& abank_avid, const Tensor& x_a,
                               double margin = 1.0);

}  // namespace urdmu
