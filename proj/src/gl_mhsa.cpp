#include "urdmu/gl_mhsa.hpp"

#include <cmath>
#include <cstdlib>

#include "urdmu/errors.hpp"
#include "urdmu/init.hpp"

namespace urdmu {

namespace {

// Constant D x w matrix picking columns [start, start + w).
Tensor column_selector(std::size_t dim, std::size_t start, std::size_t width) {
  Tensor sel = Tensor::zeros({dim, width});
  auto d = sel.mutable_data();
  for (std::size_t j = 0; j < width; ++j) d[(start + j) * width + j] = 1.0;
  return sel;
}

}  // namespace

void validate(const GlMhsaConfig& cfg) {
  if (cfg.in_dim == 0) throw ContractViolation("gl-mhsa: input width must be >= 1");
  if (cfg.dim == 0 || cfg.dim % 2 != 0) {
    throw ContractViolation("gl-mhsa: D must be even");
  }
  if (cfg.heads == 0 || cfg.dim % (2 * cfg.heads) != 0) {
    throw ContractViolation("gl-mhsa: D must be divisible by 2 * heads");
  }
  if (cfg.ff_dim == 0) throw ContractViolation("gl-mhsa: MLP width must be >= 1");
  if (!std::isfinite(cfg.tau)) throw ContractViolation("gl-mhsa: tau must be finite");
}

GlMhsaParams init_gl_mhsa(const GlMhsaConfig& cfg, Rng& rng) {
  validate(cfg);
  const std::size_t D = cfg.dim, F = cfg.in_dim, half = cfg.dim / 2;
  GlMhsaParams p;
  p.config = cfg;
  p.embed_w = xavier_uniform(F, D, rng);
  p.embed_b = Tensor::zeros({D}, true);
  p.w_q = xavier_uniform(D, D, rng);
  p.w_k = xavier_uniform(D, D, rng);
  p.w_vg = xavier_uniform(D, half, rng);
  p.w_l = xavier_uniform(D, half, rng);
  p.w_out = xavier_uniform(D, D, rng);
  p.b_out = Tensor::zeros({D}, true);
  p.mlp_w1 = xavier_uniform(D, cfg.ff_dim, rng);
  p.mlp_b1 = Tensor::zeros({cfg.ff_dim}, true);
  p.mlp_w2 = xavier_uniform(cfg.ff_dim, D, rng);
  p.mlp_b2 = Tensor::zeros({D}, true);
  p.ln1_g = Tensor::full({D}, 1.0, true);
  p.ln1_b = Tensor::zeros({D}, true);
  p.ln2_g = Tensor::full({D}, 1.0, true);
  p.ln2_b = Tensor::zeros({D}, true);
  return p;
}

Tensor temporal_mask(std::size_t n, double tau) {
  if (n == 0) throw ContractViolation("temporal_mask: n must be >= 1");
  const double scale = std::exp(-tau);
  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dist = static_cast<double>(i > j ? i - j : j - i);
      m[i * n + j] = -dist * scale;
    }
  }
  return Tensor::from({n, n}, std::move(m));
}

Tensor global_branch(const Tensor& embedded, const GlMhsaParams& params,
                     std::vector<Tensor>* weights) {
  const auto& cfg = params.config;
  const std::size_t D = cfg.dim, H = cfg.heads;
  const std::size_t dq = D / H, dv = D / (2 * H);
  const Tensor q = matmul(embedded, params.w_q);
  const Tensor k = matmul(embedded, params.w_k);
  const Tensor v = matmul(embedded, params.w_vg);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));
  std::vector<Tensor> heads;
  heads.reserve(H);
  for (std::size_t h = 0; h < H; ++h) {
    const Tensor qsel = column_selector(D, h * dq, dq);
    const Tensor vsel = column_selector(D / 2, h * dv, dv);
    const Tensor qh = matmul(q, qsel);
    const Tensor kh = matmul(k, qsel);
    const Tensor vh = matmul(v, vsel);
    const Tensor attn =
        row_softmax(scalar_mul(matmul(qh, transpose(kh)), inv_sqrt_d));
    if (weights) weights->push_back(attn);
    heads.push_back(matmul(attn, vh));
  }
  return H == 1 ? heads.front() : concat_last_dim(heads);
}

Tensor local_branch(const Tensor& embedded, const GlMhsaParams& params,
                    Tensor* weights) {
  const Tensor attn =
      row_softmax(temporal_mask(embedded.rows(), params.config.tau));
  if (weights) *weights = attn;
  return matmul(attn, matmul(embedded, params.w_l));
}

GlTrace gl_block_trace(const Tensor& x_raw, const GlMhsaParams& params) {
  if (x_raw.cols() != params.config.in_dim) {
    throw ContractViolation("gl-mhsa: input has " +
                            std::to_string(x_raw.cols()) +
                            " features, block expects " +
                            std::to_string(params.config.in_dim));
  }
  GlTrace tr;
  tr.embedded = linear(x_raw, params.embed_w, params.embed_b);
  tr.global_out = global_branch(tr.embedded, params, &tr.global_weights);
  tr.local_out = local_branch(tr.embedded, params, &tr.local_weights);
  tr.mixed = linear(concat_last_dim({tr.global_out, tr.local_out}),
                    params.w_out, params.b_out);
  const Tensor normed = layer_norm(tr.mixed, params.ln1_g, params.ln1_b);
  const Tensor hidden = relu(linear(normed, params.mlp_w1, params.mlp_b1));
  const Tensor mlp = linear(hidden, params.mlp_w2, params.mlp_b2);
  tr.output = layer_norm(add(mlp, tr.mixed), params.ln2_g, params.ln2_b);
  return tr;
}

Tensor gl_block_forward(const Tensor& x_raw, const GlMhsaParams& params) {
  return gl_block_trace(x_raw, params).output;
}

}  // namespace urdmu
