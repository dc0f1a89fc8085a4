#include "urdmu/nul.hpp"

#include <atomic>

#include "urdmu/errors.hpp"
#include "urdmu/init.hpp"

namespace urdmu {

namespace {
std::atomic<bool> g_corrupt_kl{false};
}

namespace debug {
void set_kl_sign_corruption(bool enabled) { g_corrupt_kl = enabled; }
}  // namespace debug

NulParams init_nul(std::size_t dim, double margin_d, Rng& rng) {
  if (!(margin_d > 0)) throw ContractViolation("nul: margin d must be > 0");
  NulParams p;
  p.mean_w = xavier_uniform(dim, dim, rng);
  p.mean_b = Tensor::zeros({dim}, true);
  p.var_w = xavier_uniform(dim, dim, rng);
  p.var_b = Tensor::zeros({dim}, true);
  p.margin_d = margin_d;
  return p;
}

Tensor encode_mean(const Tensor& m_aug, const NulParams& params) {
  return linear(m_aug, params.mean_w, params.mean_b);
}

LatentSample encode_and_sample(const Tensor& m_aug, const NulParams& params,
                               const Tensor& eps) {
  LatentSample s;
  s.mu = encode_mean(m_aug, params);
  if (eps.rows() != s.mu.rows() || eps.cols() != s.mu.cols()) {
    throw ContractViolation("encode_and_sample: noise shape mismatch");
  }
  s.logvar = linear(m_aug, params.var_w, params.var_b);
  s.sigma = exp(scalar_mul(s.logvar, 0.5));
  s.eps = eps;
  s.z = add(s.mu, mul(s.sigma, eps));
  return s;
}

LatentSample encode_and_sample(const Tensor& m_aug, const NulParams& params,
                               Rng& rng, Mode mode) {
  if (mode == Mode::kTest) {
    LatentSample s;
    s.mu = encode_mean(m_aug, params);
    s.z = s.mu;
    return s;
  }
  const std::size_t n = m_aug.rows(), d = params.mean_w.cols();
  std::vector<double> noise(n * d);
  for (double& e : noise) e = rng.normal();
  return encode_and_sample(m_aug, params, Tensor::from({n, d}, std::move(noise)));
}

Tensor kl_loss_logvar(const Tensor& mu, const Tensor& logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw ContractViolation("kl_loss: mu and sigma shapes differ");
  }
  // 1 + log sigma^2 - mu^2 - sigma^2, elementwise.
  const Tensor inner =
      sub(sub(scalar_mul(logvar, 1.0, 1.0), square(mu)), exp(logvar));
  // Mean over all N*D entries equals (1/N) sum_n (1/D) sum_i.
  const double sign = g_corrupt_kl ? 0.5 : -0.5;
  return scalar_mul(reduce_mean(inner), sign);
}

Tensor kl_loss(const Tensor& mu, const Tensor& sigma) {
  return kl_loss_logvar(mu, scalar_mul(log(sigma), 2.0));
}

Tensor magnitude_distance_loss(const Tensor& mu_a_topk, const Tensor& z_n_topk,
                               double d) {
  if (!(d > 0)) throw ContractViolation("magnitude_distance_loss: d must be > 0");
  if (mu_a_topk.size() != z_n_topk.size()) {
    throw ContractViolation("magnitude_distance_loss: width mismatch");
  }
  const Tensor gap = sub(sq_l2_norm_rows(mu_a_topk), sq_l2_norm_rows(z_n_topk));
  return reduce_sum(relu(scalar_mul(gap, -1.0, d)));
}

Tensor fuse(const Tensor& x, const Tensor& z) {
  if (x.rows() != z.rows()) throw ContractViolation("fuse: row counts differ");
  return concat_last_dim({x, z});
}

}  // namespace urdmu
