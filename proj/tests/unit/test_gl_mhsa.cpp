#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "urdmu/errors.hpp"
#include "urdmu/gl_mhsa.hpp"

using namespace urdmu;
using urdmu::testing::random_tensor;
using urdmu::testing::values;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat as_mat(const Tensor& t) {
  const std::size_t r = t.rank() == 2 ? t.rows() : 1;
  const std::size_t c = t.size() / r;
  Mat m(r, std::vector<double>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i][j] = t.data()[i * c + j];
  return m;
}

std::vector<double> affine(const std::vector<double>& x, const Tensor& w, const Tensor* b) {
  const Mat W = as_mat(w);
  std::vector<double> y(W[0].size(), 0.0);
  for (std::size_t j = 0; j < y.size(); ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * W[i][j];
    if (b) y[j] += b->data()[j];
  }
  return y;
}

std::vector<double> norm(const std::vector<double>& x, const Tensor& g, const Tensor& b) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * g.data()[i] + b.data()[i];
  return y;
}

GlMhsaParams small_block(std::size_t f, std::size_t d, std::size_t h, double tau,
                         std::uint64_t seed) {
  GlMhsaConfig cfg;
  cfg.in_dim = f;
  cfg.dim = d;
  cfg.heads = h;
  cfg.ff_dim = 2 * d;
  cfg.tau = tau;
  Rng rng(seed);
  return init_gl_mhsa(cfg, rng);
}

// Rows of `t` reordered so that row i of the result is row perm[i].
Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  std::vector<double> v(t.size());
  const std::size_t c = t.cols();
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(t.data().begin() + perm[i] * c, c, v.begin() + i * c);
  return Tensor::from(t.shape(), std::move(v));
}

std::vector<Tensor> all_params(const GlMhsaParams& p) {
  return {p.embed_w, p.embed_b, p.w_q,    p.w_k,    p.w_vg,   p.w_l,   p.w_out,
          p.b_out,   p.mlp_w1,  p.mlp_b1, p.mlp_w2, p.mlp_b2, p.ln1_g, p.ln1_b,
          p.ln2_g,   p.ln2_b};
}

}  // namespace

TEST(TemporalMask, Examples) {
  const Tensor m0 = temporal_mask(5, 0.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(m0(i, i), 0.0);
  EXPECT_EQ(m0(1, 2), -1.0);
  EXPECT_EQ(m0(3, 2), -1.0);
  const Tensor m1 = temporal_mask(6, std::log(2.0));
  EXPECT_NEAR(m1(0, 4), -2.0, 1e-15);
  EXPECT_NEAR(m1(5, 1), -2.0, 1e-15);
}

TEST(TemporalMask, SymmetricNonPositive) {
  const Tensor m = temporal_mask(9, 0.7);
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      EXPECT_EQ(m(i, j), m(j, i));
      EXPECT_LE(m(i, j), 0.0);
      const double d = std::abs(double(i) - double(j));
      EXPECT_DOUBLE_EQ(m(i, j), -d / std::exp(0.7));
    }
  }
}

TEST(TemporalMask, ZeroLengthRejected) {
  EXPECT_THROW(temporal_mask(0, 1.0), ContractViolation);
}

TEST(GlConfig, HeadSplitMustDivide) {
  GlMhsaConfig cfg;
  cfg.in_dim = 4;
  cfg.dim = 12;
  cfg.heads = 4;  // 12 is not divisible by 8
  EXPECT_THROW(validate(cfg), ContractViolation);
  cfg.dim = 16;
  EXPECT_NO_THROW(validate(cfg));
  cfg.tau = INFINITY;
  EXPECT_THROW(validate(cfg), ContractViolation);
}

TEST(GlBlock, SingleSnippetMatchesScalarOracle) {
  const GlMhsaParams p = small_block(5, 8, 2, 1.0, 11);
  Rng rng(12);
  const Tensor x = random_tensor({1, 5}, rng, -1, 1, false);
  const GlTrace tr = gl_block_trace(x, p);
  for (const auto& w : tr.global_weights) EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(tr.local_weights(0, 0), 1.0);

  const auto h = affine(values(x), p.embed_w, &p.embed_b);
  auto cat = affine(h, p.w_vg, nullptr);
  const auto loc = affine(h, p.w_l, nullptr);
  cat.insert(cat.end(), loc.begin(), loc.end());
  const auto mixed = affine(cat, p.w_out, &p.b_out);
  auto hidden = affine(norm(mixed, p.ln1_g, p.ln1_b), p.mlp_w1, &p.mlp_b1);
  for (double& v : hidden) v = std::max(0.0, v);
  auto mlp = affine(hidden, p.mlp_w2, &p.mlp_b2);
  for (std::size_t i = 0; i < mlp.size(); ++i) mlp[i] += mixed[i];
  const auto want = norm(mlp, p.ln2_g, p.ln2_b);

  const auto got = values(tr.output);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(GlBlock, VeryNegativeTauMakesLocalBranchIdentity) {
  const GlMhsaParams p = small_block(4, 8, 2, -20.0, 13);
  Rng rng(14);
  const Tensor x = random_tensor({7, 4}, rng, -1, 1, false);
  const GlTrace tr = gl_block_trace(x, p);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_GT(tr.local_weights(i, i), 1 - 1e-6);
  const Tensor v_l = matmul(tr.embedded, p.w_l);
  const auto a = values(tr.local_out), b = values(v_l);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(GlBlock, OutputRowsHaveZeroMeanAtInit) {
  const GlMhsaParams p = small_block(8, 8, 2, 1.0, 15);
  Rng rng(16);
  const Tensor y = gl_block_forward(random_tensor({6, 8}, rng, -2, 2, false), p);
  ASSERT_EQ(y.shape(), (Shape{6, 8}));
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 8; ++j) s += y(i, j);
    EXPECT_LT(std::abs(s / 8), 1e-8);
  }
}

TEST(GlBlock, AttentionWeightsAreRowStochastic) {
  const GlMhsaParams p = small_block(6, 16, 4, 0.5, 17);
  Rng rng(18);
  const GlTrace tr = gl_block_trace(random_tensor({10, 6}, rng, -3, 3, false), p);
  ASSERT_EQ(tr.global_weights.size(), 4u);
  std::vector<Tensor> all = tr.global_weights;
  all.push_back(tr.local_weights);
  for (const Tensor& w : all) {
    for (std::size_t i = 0; i < 10; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 10; ++j) {
        EXPECT_GE(w(i, j), 0.0);
        s += w(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(GlBlock, LocalWeightsDependOnlyOnOffsetAwayFromEdges) {
  const GlMhsaParams p = small_block(3, 8, 2, 1.0, 19);
  Tensor w;
  local_branch(Tensor::zeros({300, 8}), p, &w);
  for (int k = -5; k <= 5; ++k) {
    const double ref = w(150, 150 + k);
    for (std::size_t i = 120; i < 180; ++i) EXPECT_NEAR(w(i, i + k), ref, 1e-12);
  }
  // Near the edge the row support is truncated and the weights differ.
  EXPECT_GT(std::abs(w(0, 1) - w(150, 151)), 1e-3);
}

TEST(GlBlock, PermutationBreaksLocalButNotGlobalBranch) {
  const GlMhsaParams p = small_block(4, 8, 2, 1.0, 20);
  Rng rng(21);
  const Tensor x = random_tensor({8, 4}, rng, -1, 1, false);
  const std::vector<std::size_t> perm{3, 0, 7, 1, 6, 2, 5, 4};
  const Tensor x0 = linear(x, p.embed_w, p.embed_b);
  const Tensor px0 = permute_rows(x0, perm);

  const auto g_perm = values(global_branch(px0, p));
  const auto perm_g = values(permute_rows(global_branch(x0, p), perm));
  for (std::size_t i = 0; i < g_perm.size(); ++i) EXPECT_NEAR(g_perm[i], perm_g[i], 1e-10);

  const auto l_perm = values(local_branch(px0, p));
  const auto perm_l = values(permute_rows(local_branch(x0, p), perm));
  double diff = 0;
  for (std::size_t i = 0; i < l_perm.size(); ++i) diff = std::max(diff, std::abs(l_perm[i] - perm_l[i]));
  EXPECT_GT(diff, 1e-6);

  const auto y_perm = values(gl_block_forward(permute_rows(x, perm), p));
  const auto perm_y = values(permute_rows(gl_block_forward(x, p), perm));
  diff = 0;
  for (std::size_t i = 0; i < y_perm.size(); ++i) diff = std::max(diff, std::abs(y_perm[i] - perm_y[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(GlBlock, InputWidthMismatch) {
  const GlMhsaParams p = small_block(4, 8, 2, 1.0, 22);
  EXPECT_THROW(gl_block_forward(Tensor::zeros({3, 5}), p), ContractViolation);
}

TEST(GlBlock, GradientMatchesFiniteDifferences) {
  const GlMhsaParams p = small_block(5, 8, 2, 1.0, 23);
  Rng rng(24);
  // Perturb the layer-norm parameters so their gradients are generic.
  for (Tensor t : {p.ln1_g, p.ln1_b, p.ln2_g, p.ln2_b, p.b_out, p.mlp_b1})
    for (double& v : t.mutable_data()) v += rng.uniform(-0.3, 0.3);
  const Tensor x = random_tensor({6, 5}, rng);
  std::vector<Tensor> params = all_params(p);
  params.push_back(x);
  const double err = finite_diff_check(
      [&] { return urdmu::testing::probe(gl_block_forward(x, p), 99); }, params);
  EXPECT_LT(err, 1e-4);
}

TEST(GlBlock, ForwardIsDeterministic) {
  const GlMhsaParams a = small_block(4, 8, 2, 1.0, 25);
  const GlMhsaParams b = small_block(4, 8, 2, 1.0, 25);
  Rng rng(26);
  const Tensor x = random_tensor({5, 4}, rng, -1, 1, false);
  EXPECT_EQ(values(gl_block_forward(x, a)), values(gl_block_forward(x, b)));
}
