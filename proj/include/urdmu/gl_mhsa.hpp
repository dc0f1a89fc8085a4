#pragma once

#include <cstddef>
#include <vector>

#include "urdmu/rng.hpp"
#include "urdmu/tensor.hpp"

namespace urdmu {

struct GlMhsaConfig {
  std::size_t in_dim = 0;  // F, raw feature width
  std::size_t dim = 128;   // D
  std::size_t heads = 4;   // H; D must be divisible by 2H
  std::size_t ff_dim = 512;
  double tau = 1.0;
};

// Learnable tensors of the global/local attention block. The global branch
// (value width D/2, split over H heads) and the local branch (width D/2)
// are concatenated back to D before the output projection.
struct GlMhsaParams {
  GlMhsaConfig config;
  Tensor embed_w, embed_b;  // F x D, D
  Tensor w_q, w_k;          // D x D
  Tensor w_vg;              // D x D/2
  Tensor w_l;               // D x D/2
  Tensor w_out, b_out;      // D x D, D
  Tensor mlp_w1, mlp_b1;    // D x D_ff, D_ff
  Tensor mlp_w2, mlp_b2;    // D_ff x D, D
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

// Throws ContractViolation on an inconsistent configuration.
void validate(const GlMhsaConfig& cfg);

GlMhsaParams init_gl_mhsa(const GlMhsaConfig& cfg, Rng& rng);

// T_m(i, j) = -|i - j| / e^tau.
Tensor temporal_mask(std::size_t n, double tau);

// Intermediate values of one forward pass, for inspection in tests.
struct GlTrace {
  Tensor embedded;                     // X0 = embed(x_raw), N x D
  std::vector<Tensor> global_weights;  // per head, N x N
  Tensor local_weights;                // softmax(T_m), N x N
  Tensor global_out;                   // N x D/2
  Tensor local_out;                    // N x D/2
  Tensor mixed;                        // W_out projection of the concat
  Tensor output;                       // N x D
};

// Multi-head softmax(Q K^T / sqrt(D)) V_g over the embedded features.
Tensor global_branch(const Tensor& embedded, const GlMhsaParams& params,
                     std::vector<Tensor>* weights = nullptr);

// softmax(T_m) (X0 W_l).
Tensor local_branch(const Tensor& embedded, const GlMhsaParams& params,
                    Tensor* weights = nullptr);

GlTrace gl_block_trace(const Tensor& x_raw, const GlMhsaParams& params);

// x_raw: N x F  ->  N x D.
Tensor gl_block_forward(const Tensor& x_raw, const GlMhsaParams& params);

}  // namespace urdmu
