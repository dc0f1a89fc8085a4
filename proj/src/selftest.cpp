#include "urdmu/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "urdmu/checkpoint.hpp"
#include "urdmu/dmu.hpp"
#include "urdmu/errors.hpp"
#include "urdmu/feature_io.hpp"
#include "urdmu/gl_mhsa.hpp"
#include "urdmu/metrics.hpp"
#include "urdmu/nul.hpp"
#include "urdmu/optim.hpp"
#include "urdmu/train.hpp"

namespace urdmu {

namespace {

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Scalar probe used to reduce any tensor output: sum(out * w) with fixed w.
Tensor probe(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed);
  return reduce_sum(mul(out, random_tensor(out.shape(), rng, -1, 1, false)));
}

std::string primitive_gradients() {
  Rng rng(11);
  double worst = 0.0;
  auto check = [&](const char* name, std::vector<Tensor> leaves,
                   const std::function<Tensor()>& f) {
    const double err = finite_diff_check(f, leaves);
    worst = std::max(worst, err);
    expect(err < 1e-6, std::string(name) + ": relative error " + fmt("%.3g", err));
  };
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
  Tensor c = random_tensor({3, 4}, rng), pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  Tensor g = random_tensor({4}, rng), bias = random_tensor({5}, rng);
  Tensor row = random_tensor({4}, rng);
  check("matmul", {a, b}, [&] { return probe(matmul(a, b), 1); });
  check("add", {a, c}, [&] { return probe(add(a, c), 2); });
  check("sub", {a, c}, [&] { return probe(sub(a, c), 3); });
  check("scalar_mul", {a}, [&] { return probe(scalar_mul(a, -1.7, 0.3), 4); });
  check("elementwise_mul", {a, c}, [&] { return probe(mul(a, c), 5); });
  check("row_softmax", {a}, [&] { return probe(row_softmax(a), 6); });
  check("sigmoid", {a}, [&] { return probe(sigmoid(a), 7); });
  check("relu", {a}, [&] { return probe(relu(a), 8); });
  check("exp", {a}, [&] { return probe(exp(a), 9); });
  check("log", {pos}, [&] { return probe(log(pos), 10); });
  check("square", {a}, [&] { return probe(square(a), 11); });
  check("sqrt", {pos}, [&] { return probe(sqrt(pos), 12); });
  check("layer_norm", {a, g, row}, [&] { return probe(layer_norm(a, g, row), 13); });
  check("linear", {a, b, bias}, [&] { return probe(linear(a, b, bias), 14); });
  check("concat_last_dim", {a, c}, [&] { return probe(concat_last_dim({a, c}), 15); });
  for (int axis : {0, 1, -1}) {
    check("reduce_mean", {a}, [&] { return probe(reduce_mean(a, axis), 16); });
    check("reduce_sum", {a}, [&] { return probe(reduce_sum(a, axis), 17); });
  }
  check("sq_l2_norm_rows", {a}, [&] { return probe(sq_l2_norm_rows(a), 18); });
  check("transpose", {a}, [&] { return probe(transpose(a), 19); });
  check("broadcast_row", {row}, [&] { return probe(broadcast_row(row, 3), 20); });
  return fmt("max relative error %.3g over 20 primitives", worst);
}

std::string softmax_rows() {
  Rng rng(12);
  const Tensor s = row_softmax(random_tensor({6, 9}, rng, -20, 20, false));
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      expect(s(i, j) > 0.0 && s(i, j) < 1.0, "softmax entry outside (0,1)");
      sum += s(i, j);
    }
    expect(std::abs(sum - 1.0) < 1e-12, "softmax row does not sum to 1");
  }
  const Tensor u = row_softmax(Tensor::zeros({1, 4}));
  for (double v : u.data()) expect(v == 0.25, "uniform row is not 0.25");
  return "rows sum to 1 within 1e-12";
}

std::string layer_norm_moments() {
  Rng rng(13);
  const Tensor x = random_tensor({5, 16}, rng, -4, 9, false);
  const Tensor y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 16; ++j) mean += y(i, j) / 16;
    for (std::size_t j = 0; j < 16; ++j) var += (y(i, j) - mean) * (y(i, j) - mean) / 16;
    expect(std::abs(mean) < 1e-10, "layer_norm row mean not 0");
    expect(std::abs(var - 1.0) < 1e-6, "layer_norm row variance not 1");
  }
  const Tensor r = layer_norm(Tensor::from({1, 3}, {1, 2, 3}), Tensor::full({3}, 1.0),
                              Tensor::zeros({3}));
  const double want = 1.0 / std::sqrt(2.0 / 3.0 + 1e-5);
  expect(std::abs(r(0, 0) + want) < 1e-12 && std::abs(r(0, 2) - want) < 1e-12,
         "layer_norm([1,2,3]) mismatch");
  return fmt("[1,2,3] -> +-%.6f", want);
}

std::string adam_update() {
  Tensor w = Tensor::from({3}, {0.5, -2.0, 1.0}, true);
  for (double& g : w.mutable_grad()) g = 0;
  w.mutable_grad()[0] = 3.0;
  w.mutable_grad()[1] = -0.25;
  Adam opt;
  std::vector<Tensor> ps{w};
  opt.update(ps, 0.01, 1);
  expect(std::abs(w.data()[0] - 0.49) < 1e-9, "first step is not -sign(g) lr");
  expect(std::abs(w.data()[1] + 1.99) < 1e-9, "first step is not -sign(g) lr");
  expect(w.data()[2] == 1.0, "zero gradient moved a parameter");
  Tensor s = Tensor::from({1}, {1.0}, true);
  Adam opt2;
  std::vector<Tensor> ss{s};
  for (std::uint64_t t = 1; t <= 100; ++t) {
    reverse_accumulate(reduce_sum(square(s)));
    opt2.update(ss, 0.1, t);
  }
  expect(std::abs(s.item()) < 0.1, "w^2 not minimised within 100 steps");
  return fmt("|w| after 100 steps = %.4f", std::abs(s.item()));
}

std::string fvb_roundtrip() {
  Rng rng(14);
  VideoFeatureSequence seq;
  seq.id = "probe";
  seq.snippets = 5;
  seq.dim = 7;
  seq.label = 1;
  seq.features.resize(35);
  for (float& f : seq.features) f = static_cast<float>(rng.normal());
  seq.frame_gt = std::vector<std::uint8_t>(80, 0);
  (*seq.frame_gt)[17] = 1;
  const auto bytes = encode_fvb(seq);
  const auto back = decode_fvb(bytes, "probe");
  expect(encode_fvb(back) == bytes, "FVB re-encode differs");
  expect(back.features == seq.features, "FVB values differ");
  VideoFeatureSequence one;
  one.snippets = one.dim = 1;
  one.features = {3.5f};
  expect(encode_fvb(one).size() == 21, "1x1 FVB is not 21 bytes");
  return "byte-exact; 1x1 file is 21 bytes";
}

std::string resample_rules() {
  VideoFeatureSequence seq;
  seq.snippets = 4;
  seq.dim = 1;
  seq.features = {1, 2, 3, 5};
  const Tensor half = resample_to_n(seq, 2);
  expect(half(0, 0) == 1.5 && half(1, 0) == 4.0, "T=4 -> n=2 segment means");
  seq.snippets = 3;
  seq.features = {10, 20, 30};
  const Tensor up = resample_to_n(seq, 5);
  const double want[] = {10, 10, 20, 20, 30};
  for (std::size_t i = 0; i < 5; ++i) expect(up(i, 0) == want[i], "T=3 -> n=5 nearest index");
  const Tensor same = resample_to_n(seq, 3);
  for (std::size_t i = 0; i < 3; ++i) expect(same(i, 0) == seq.features[i], "T=n identity");
  return "segment mean, nearest index, identity";
}

std::string temporal_mask_values() {
  const Tensor m0 = temporal_mask(6, 0.0);
  expect(m0(2, 2) == 0.0 && m0(2, 3) == -1.0, "tau=0 mask");
  const Tensor m1 = temporal_mask(6, std::numbers::ln2);
  expect(std::abs(m1(0, 4) + 2.0) < 1e-12, "tau=ln2 at distance 4 is not -2");
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      expect(m1(i, j) == m1(j, i) && m1(i, j) <= 0.0, "mask not symmetric/nonpositive");
  return "diagonal 0, symmetric, -|i-j|/e^tau";
}

std::string gl_block() {
  Rng rng(15);
  GlMhsaConfig cfg;
  cfg.in_dim = 8;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.ff_dim = 16;
  const GlMhsaParams p = init_gl_mhsa(cfg, rng);
  const Tensor x = random_tensor({6, 8}, rng);
  const GlTrace tr = gl_block_trace(x.detach(), p);
  for (const Tensor& w : tr.global_weights) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j);
      expect(std::abs(s - 1.0) < 1e-12, "global attention row not stochastic");
    }
  }
  for (std::size_t i = 0; i < tr.output.rows(); ++i) {
    double m = 0;
    for (std::size_t j = 0; j < tr.output.cols(); ++j) m += tr.output(i, j) / 8;
    expect(std::abs(m) < 1e-8, "output row mean after final LN is not 0");
  }
  const std::vector<Tensor> leaves{x, p.embed_w, p.w_q, p.w_k, p.w_vg, p.w_l,
                                   p.w_out, p.mlp_w1, p.mlp_w2, p.ln1_g};
  const double err = finite_diff_check([&] { return probe(gl_block_forward(x, p), 21); },
                                       leaves);
  expect(err < 1e-4, "gl block gradient error " + fmt("%.3g", err));
  return fmt("block gradient error %.3g", err);
}

std::string topk_oracle() {
  Rng rng(16);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> v(n);
    for (double& x : v) x = static_cast<double>(rng.below(6));  // many ties
    const std::size_t k = 1 + rng.below(n);
    const TopK got = topk_rows(v, k);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] > v[b]; });
    idx.resize(k);
    double mean = 0;
    for (auto i : idx) mean += v[i];
    mean /= static_cast<double>(k);
    expect(got.indices == idx, "top-k indices differ from sort oracle");
    expect(std::abs(got.mean - mean) < 1e-12, "top-k mean differs from sort oracle");
  }
  expect(topk_count(60) == 4 && topk_count(200) == 13, "K rule floor(m/16)+1");
  return "1000 random vectors with ties";
}

std::string memory_read() {
  Rng rng(17);
  const MemoryBank bank = init_bank(6, 4, BankRole::kNormal, rng);
  const Tensor x = random_tensor({5, 4}, rng, -1, 1, false);
  const QueryResult q = memory_query(x, bank);
  const Tensor aug = matmul(q.scores, bank.prototypes);
  for (std::size_t i = 0; i < aug.size(); ++i) {
    expect(aug.data()[i] == q.augmented.data()[i], "M_aug != S proto");
  }
  for (double s : q.scores.data()) expect(s > 0 && s < 1, "query score outside (0,1)");
  const QueryResult z = memory_query(Tensor::zeros({2, 4}), bank);
  for (double s : z.scores.data()) expect(s == 0.5, "orthogonal query is not 0.5");
  return "S in (0,1), M_aug = S M";
}

std::string dual_memory() {
  const Tensor half = Tensor::full({8, 1}, 0.5);
  const double v = dual_memory_loss(half, half, half, half).item();
  expect(std::abs(v - 4 * std::numbers::ln2) < 1e-12, "all-0.5 loss is not 4 ln 2");
  Rng rng(18);
  Tensor a = random_tensor({8, 1}, rng, 0.05, 0.95), b = random_tensor({8, 1}, rng, 0.05, 0.95);
  Tensor c = random_tensor({8, 1}, rng, 0.05, 0.95), d = random_tensor({8, 1}, rng, 0.05, 0.95);
  const std::vector<Tensor> leaves{a, b, c, d};
  const double err = finite_diff_check([&] { return dual_memory_loss(a, b, c, d); }, leaves);
  expect(err < 1e-5, "dual memory gradient error " + fmt("%.3g", err));
  return fmt("4 ln 2 = %.10f", v);
}

std::string triplet() {
  Rng rng(19);
  const Tensor sn = random_tensor({16, 1}, rng, 0, 1, false);
  const Tensor sa = random_tensor({16, 1}, rng, 0, 1, false);
  const Tensor sb = random_tensor({16, 1}, rng, 0, 1, false);
  const Tensor xn = random_tensor({16, 3}, rng, -1, 1, false);
  const Tensor xa = random_tensor({16, 3}, rng, -1, 1, false);
  auto mean_rows = [](const Tensor& s, const Tensor& x) {
    const TopK t = topk_rows(s.data(), topk_count(16));
    std::vector<double> m(3, 0.0);
    for (auto i : t.indices)
      for (std::size_t j = 0; j < 3; ++j) m[j] += x(i, j) / static_cast<double>(t.indices.size());
    return m;
  };
  const auto fa = mean_rows(sn, xn), fp = mean_rows(sa, xa), fn = mean_rows(sb, xa);
  double dp = 0, dn = 0;
  for (int j = 0; j < 3; ++j) {
    dp += (fa[j] - fp[j]) * (fa[j] - fp[j]);
    dn += (fa[j] - fn[j]) * (fa[j] - fn[j]);
  }
  const double want = std::max(0.0, std::sqrt(dp) - std::sqrt(dn) + 1.0);
  const double got = triplet_separation_loss(sn, xn, sa, sb, xa, 1.0).item();
  expect(std::abs(got - want) < 1e-12, "triplet loss differs from scalar oracle");
  const double same = triplet_separation_loss(sn, xn, sa, sa, xa, 1.0).item();
  expect(std::abs(same - 1.0) < 1e-12, "f_p == f_n does not give the margin");
  return fmt("oracle %.12f", want);
}

std::string kl_loss_checks() {
  const double zero = kl_loss(Tensor::zeros({3, 4}), Tensor::full({3, 4}, 1.0)).item();
  expect(std::abs(zero) < 1e-10, "kl_loss at mu=0, sigma=1 is not 0");
  const double half = kl_loss(Tensor::full({1, 1}, 1.0), Tensor::full({1, 1}, 1.0)).item();
  expect(std::abs(half - 0.5) < 1e-10, "kl_loss at mu=1, sigma=1, D=1 is not 1/2");
  Rng rng(20);
  const std::size_t n = 3, d = 5;
  Tensor mu = random_tensor({n, d}, rng, -2, 2);
  Tensor sigma = random_tensor({n, d}, rng, 0.3, 2.5);
  const Tensor loss = kl_loss(mu, sigma);
  double oracle = 0;
  for (std::size_t i = 0; i < n * d; ++i) {
    const double m = mu.data()[i], s = sigma.data()[i];
    oracle += 0.5 * (m * m + s * s - 1.0 - std::log(s * s)) / static_cast<double>(n * d);
  }
  expect(std::abs(loss.item() - oracle) < 1e-10, "kl_loss differs from per-coordinate KL");
  reverse_accumulate(loss);
  const double scale = 1.0 / static_cast<double>(n * d);
  for (std::size_t i = 0; i < n * d; ++i) {
    const double m = mu.data()[i], s = sigma.data()[i];
    expect(std::abs(mu.grad()[i] - m * scale) < 1e-10, "kl_loss gradient in mu");
    expect(std::abs(sigma.grad()[i] - (s - 1.0 / s) * scale) < 1e-10,
           "kl_loss gradient in sigma");
  }
  return "0 at N(0,1), 1/2 at mu=1, closed-form gradient";
}

std::string magnitude_distance() {
  const Tensor zero = Tensor::zeros({1, 4});
  expect(magnitude_distance_loss(zero, zero, 100).item() == 100.0, "zero vectors give d");
  const Tensor big = Tensor::from({1, 2}, {std::sqrt(150.0), 0.0});
  expect(magnitude_distance_loss(big, Tensor::zeros({1, 2}), 100).item() == 0.0, "satisfied margin gives 0");
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const Tensor a = random_tensor({1, 6}, rng, -5, 5, false);
    const Tensor b = random_tensor({1, 6}, rng, -5, 5, false);
    double na = 0, nb = 0;
    for (double v : a.data()) na += v * v;
    for (double v : b.data()) nb += v * v;
    const double want = std::max(0.0, 10.0 - (na - nb));
    expect(std::abs(magnitude_distance_loss(a, b, 10.0).item() - want) < 1e-12,
           "magnitude distance differs from scalar formula");
  }
  return "scalar oracle on 50 pairs";
}

std::string objective() {
  const Tensor half = Tensor::full({200, 1}, 0.5);
  const double c = cls_loss(half, half).item();
  expect(std::abs(c - 2 * std::numbers::ln2) < 1e-12, "cls_loss at 0.5 is not 2 ln 2");
  LossParts ones;
  ones.cls = ones.dm = ones.trip = ones.kl = ones.dis = Tensor::scalar(1.0);
  const double t = total_loss(ones, {0.1, 0.1, 0.001, 0.0001}).item();
  expect(std::abs(t - 1.2011) < 1e-12, "total of unit parts is not 1.2011");
  return fmt("total(1,1,1,1,1) = %.4f", t);
}

std::string roc_auc_oracle() {
  Rng rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(10)) / 10.0;
      y[i] = rng.uniform() < 0.4;
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] && !y[j]) {
          pairs += 1;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    expect(std::abs(roc_auc(s, y) - wins / pairs) < 1e-12, "roc_auc differs from pairwise oracle");
  }
  return "1000 instances with ties";
}

std::string pr_ap_oracle() {
  Rng rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(100);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(10)) / 10.0;
      y[i] = rng.uniform() < 0.3;
    }
    y[0] = 1;
    // Walk every distinct threshold from the top; precision and recall are
    // counted from scratch at each one.
    std::vector<double> thr(s);
    std::sort(thr.begin(), thr.end(), std::greater<>());
    thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
    double pos = 0;
    for (auto l : y) pos += l;
    double ap = 0, prev_recall = 0;
    for (double t : thr) {
      double tp = 0, sel = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (s[i] >= t) {
          sel += 1;
          tp += y[i];
        }
      ap += (tp / pos - prev_recall) * (tp / sel);
      prev_recall = tp / pos;
    }
    expect(std::abs(pr_ap(s, y) - ap) < 1e-12, "pr_ap differs from rank-walk oracle");
  }
  return "1000 instances with ties";
}

TrainConfig micro_config() {
  TrainConfig cfg;
  cfg.in_dim = 6;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.ff_dim = 32;
  cfg.mem_a = cfg.mem_n = 4;
  cfg.cls_hidden1 = 12;
  cfg.cls_hidden2 = 8;
  cfg.n_snippets = 8;
  cfg.seed = 5;
  return cfg;
}

std::string model_gradient() {
  const ModelParams m = init_model(micro_config());
  Rng rng(24);
  const Tensor xn = random_tensor({8, 6}, rng, -1, 1, false);
  const Tensor xa = random_tensor({8, 6}, rng, 1, 3, false);
  std::vector<Tensor> leaves;
  for (auto& [name, t] : m.named()) leaves.push_back(t);
  const auto f = [&] {
    Rng noise(99);
    return total_loss(pair_losses(xn, xa, m, noise), m.config.lambda);
  };
  const double err = finite_diff_check(f, leaves, 1e-5, 6);
  expect(err < 1e-4, "full model gradient error " + fmt("%.3g", err));
  return fmt("full model gradient error %.3g", err);
}

std::string checkpoint_roundtrip() {
  const ModelParams m = init_model(micro_config());
  const auto bytes = encode_checkpoint(m);
  const ModelParams back = decode_checkpoint(bytes);
  expect(encode_checkpoint(back) == bytes, "checkpoint re-encode differs");
  Rng rng(25);
  const Tensor x = random_tensor({8, 6}, rng, -1, 1, false);
  expect(score_snippets(x, m) == score_snippets(x, back), "scores differ after reload");
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  bool faulted = false;
  try {
    decode_checkpoint(cut);
  } catch (const FormatFault&) {
    faulted = true;
  }
  expect(faulted, "truncated checkpoint was accepted");
  return fmt("%.0f bytes, byte-exact", static_cast<double>(bytes.size()));
}

std::string determinism() {
  const ModelParams a = init_model(micro_config());
  const ModelParams b = init_model(micro_config());
  Rng rng(26);
  const Tensor xn = random_tensor({8, 6}, rng, -1, 1, false);
  const Tensor xa = random_tensor({8, 6}, rng, 1, 3, false);
  Rng ra(7), rb(7);
  const Tensor la = total_loss(pair_losses(xn, xa, a, ra), a.config.lambda);
  const Tensor lb = total_loss(pair_losses(xn, xa, b, rb), b.config.lambda);
  expect(la.item() == lb.item(), "same seed gave different losses");
  reverse_accumulate(la);
  reverse_accumulate(lb);
  const auto na = a.named(), nb = b.named();
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto ga = na[i].second.grad(), gb = nb[i].second.grad();
    expect(std::equal(ga.begin(), ga.end(), gb.begin(), gb.end()),
           "same seed gave different gradients for " + na[i].first);
  }
  const Tensor x = random_tensor({8, 6}, rng, -1, 1, false);
  expect(score_snippets(x, a) == score_snippets(x, a), "test-mode scoring not repeatable");
  return "bit-identical loss, gradients, and scores";
}

}  // namespace

std::vector<PropertyResult> run_selftest() {
  const std::vector<std::pair<const char*, std::string (*)()>> groups = {
      {"primitive_gradients", primitive_gradients},
      {"row_softmax", softmax_rows},
      {"layer_norm", layer_norm_moments},
      {"adam_update", adam_update},
      {"fvb_roundtrip", fvb_roundtrip},
      {"resample_to_n", resample_rules},
      {"temporal_mask", temporal_mask_values},
      {"gl_mhsa_block", gl_block},
      {"topk_rows", topk_oracle},
      {"memory_query", memory_read},
      {"dual_memory_loss", dual_memory},
      {"triplet_separation_loss", triplet},
      {"kl_loss", kl_loss_checks},
      {"magnitude_distance_loss", magnitude_distance},
      {"total_loss", objective},
      {"roc_auc", roc_auc_oracle},
      {"pr_ap", pr_ap_oracle},
      {"model_gradient", model_gradient},
      {"checkpoint", checkpoint_roundtrip},
      {"determinism", determinism},
  };
  std::vector<PropertyResult> out;
  for (const auto& [name, fn] : groups) {
    PropertyResult r;
    r.group = name;
    try {
      r.detail = fn();
      r.passed = true;
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace urdmu
