#pragma once

#include <cstddef>

#include "urdmu/rng.hpp"
#include "urdmu/tensor.hpp"

namespace urdmu {

struct NulParams {
  Tensor mean_w, mean_b;  // D x D, D
  Tensor var_w, var_b;    // D x D, D; outputs log(sigma^2)
  double margin_d = 100.0;
};

NulParams init_nul(std::size_t dim, double margin_d, Rng& rng);

enum class Mode { kTrain, kTest };

struct LatentSample {
  Tensor mu;      // N x D
  Tensor logvar;  // undefined in test mode
  Tensor sigma;   // exp(logvar / 2); undefined in test mode
  Tensor eps;     // recorded N(0, 1) noise; undefined in test mode
  Tensor z;       // mu + sigma * eps (train), mu (test)
};

// Mean encoder only.
Tensor encode_mean(const Tensor& m_aug, const NulParams& params);

// Train mode draws eps from `rng`; test mode consumes no randomness and
// returns z = mu.
LatentSample encode_and_sample(const Tensor& m_aug, const NulParams& params,
                               Rng& rng, Mode mode);

// Same as the train-mode path with caller-supplied noise.
LatentSample encode_and_sample(const Tensor& m_aug, const NulParams& params,
                               const Tensor& eps);

// Per snippet -(1/2D) sum_i (1 + log sigma_i^2 - mu_i^2 - sigma_i^2),
// averaged over the N snippets.
Tensor kl_loss(const Tensor& mu, const Tensor& sigma);
Tensor kl_loss_logvar(const Tensor& mu, const Tensor& logvar);

// max(0, d - (|mu_a|^2 - |z_n|^2)) for two 1 x D top-K averages.
Tensor magnitude_distance_loss(const Tensor& mu_a_topk, const Tensor& z_n_topk,
                               double d);

// Feature-axis concatenation [x ; z].
Tensor fuse(const Tensor& x, const Tensor& z);

namespace debug {
// Negative-control hook for the self-test: flips the sign of kl_loss.
void set_kl_sign_corruption(bool enabled);
}  // namespace debug

}  // namespace urdmu
