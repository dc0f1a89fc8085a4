#include "urdmu/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "urdmu/errors.hpp"
#include "urdmu/init.hpp"

namespace urdmu {

TrainConfig resolve(TrainConfig cfg) {
  if (cfg.ff_dim == 0) cfg.ff_dim = 4 * cfg.dim;
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ContractViolation(std::string("config: ") + what);
  };
  need(cfg.n_snippets >= 1, "n_snippets must be >= 1");
  need(cfg.lr > 0 && std::isfinite(cfg.lr), "lr must be > 0");
  need(cfg.batch >= 2 && cfg.batch % 2 == 0, "batch must be even and >= 2");
  need(cfg.mem_a >= 1 && cfg.mem_n >= 1, "memory banks need >= 1 slot");
  for (double l : cfg.lambda) need(l >= 0 && std::isfinite(l), "lambda must be >= 0");
  need(cfg.dist_d > 0, "dist_d must be > 0");
  need(std::isfinite(cfg.tau), "tau must be finite");
  need(cfg.margin >= 0, "margin must be >= 0");
  need(cfg.dropout >= 0 && cfg.dropout < 1, "dropout must lie in [0, 1)");
  need(cfg.dim >= 2 && cfg.dim % 2 == 0, "dim must be even");
  need(cfg.heads >= 1 && cfg.dim % (2 * cfg.heads) == 0,
       "dim must be divisible by 2 * heads");
  need(cfg.cls_hidden1 >= 1 && cfg.cls_hidden2 >= 1, "classifier widths must be >= 1");
  return cfg;
}

namespace {

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_key_values(const TrainConfig& c) {
  std::ostringstream out;
  out << "n_snippets=" << c.n_snippets << '\n'
      << "lr=" << fmt_double(c.lr) << '\n'
      << "batch=" << c.batch << '\n'
      << "iters=" << c.iters << '\n'
      << "mem_a=" << c.mem_a << '\n'
      << "mem_n=" << c.mem_n << '\n';
  for (int i = 0; i < 4; ++i)
    out << "lambda" << i + 1 << '=' << fmt_double(c.lambda[i]) << '\n';
  out << "dist_d=" << fmt_double(c.dist_d) << '\n'
      << "tau=" << fmt_double(c.tau) << '\n'
      << "margin=" << fmt_double(c.margin) << '\n'
      << "dropout=" << fmt_double(c.dropout) << '\n'
      << "seed=" << c.seed << '\n'
      << "in_dim=" << c.in_dim << '\n'
      << "dim=" << c.dim << '\n'
      << "heads=" << c.heads << '\n'
      << "ff_dim=" << c.ff_dim << '\n'
      << "cls_hidden1=" << c.cls_hidden1 << '\n'
      << "cls_hidden2=" << c.cls_hidden2 << '\n'
      << "bypass_memory=" << (c.bypass_memory ? 1 : 0) << '\n'
      << "freeze_banks=" << (c.freeze_banks ? 1 : 0) << '\n';
  return out.str();
}

TrainConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractViolation("config: malformed line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  TrainConfig c;
  auto take = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw ContractViolation(std::string("config: missing key ") + key);
    }
    return &it->second;
  };
  auto as_size = [&](const char* key, std::size_t& out) {
    if (const auto* v = take(key)) {
      std::uint64_t x = 0;
      auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
      if (ec != std::errc() || p != v->data() + v->size()) {
        throw ContractViolation(std::string("config: bad integer for ") + key);
      }
      out = static_cast<std::size_t>(x);
      kv.erase(key);
    }
  };
  auto as_double = [&](const char* key, double& out) {
    if (const auto* v = take(key)) {
      char* end = nullptr;
      out = std::strtod(v->c_str(), &end);
      if (v->empty() || *end != '\0') {
        throw ContractViolation(std::string("config: bad number for ") + key);
      }
      kv.erase(key);
    }
  };
  auto as_bool = [&](const char* key, bool& out) {
    std::size_t v = out ? 1 : 0;
    as_size(key, v);
    out = v != 0;
  };
  std::size_t seed = c.seed;
  as_size("n_snippets", c.n_snippets);
  as_double("lr", c.lr);
  as_size("batch", c.batch);
  as_size("iters", c.iters);
  as_size("mem_a", c.mem_a);
  as_size("mem_n", c.mem_n);
  as_double("lambda1", c.lambda[0]);
  as_double("lambda2", c.lambda[1]);
  as_double("lambda3", c.lambda[2]);
  as_double("lambda4", c.lambda[3]);
  as_double("dist_d", c.dist_d);
  as_double("tau", c.tau);
  as_double("margin", c.margin);
  as_double("dropout", c.dropout);
  as_size("seed", seed);
  c.seed = seed;
  as_size("in_dim", c.in_dim);
  as_size("dim", c.dim);
  as_size("heads", c.heads);
  as_size("ff_dim", c.ff_dim);
  as_size("cls_hidden1", c.cls_hidden1);
  as_size("cls_hidden2", c.cls_hidden2);
  as_bool("bypass_memory", c.bypass_memory);
  as_bool("freeze_banks", c.freeze_banks);
  if (!kv.empty()) {
    throw ContractViolation("config: unknown key '" + kv.begin()->first + "'");
  }
  return c;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  return {
      {"gl.embed_w", gl.embed_w},   {"gl.embed_b", gl.embed_b},
      {"gl.w_q", gl.w_q},           {"gl.w_k", gl.w_k},
      {"gl.w_vg", gl.w_vg},         {"gl.w_l", gl.w_l},
      {"gl.w_out", gl.w_out},       {"gl.b_out", gl.b_out},
      {"gl.mlp_w1", gl.mlp_w1},     {"gl.mlp_b1", gl.mlp_b1},
      {"gl.mlp_w2", gl.mlp_w2},     {"gl.mlp_b2", gl.mlp_b2},
      {"gl.ln1_g", gl.ln1_g},       {"gl.ln1_b", gl.ln1_b},
      {"gl.ln2_g", gl.ln2_g},       {"gl.ln2_b", gl.ln2_b},
      {"bank_n", bank_n.prototypes}, {"bank_a", bank_a.prototypes},
      {"nul.mean_w", nul.mean_w},   {"nul.mean_b", nul.mean_b},
      {"nul.var_w", nul.var_w},     {"nul.var_b", nul.var_b},
      {"cls.w1", cls.w1},           {"cls.b1", cls.b1},
      {"cls.w2", cls.w2},           {"cls.b2", cls.b2},
      {"cls.w3", cls.w3},           {"cls.b3", cls.b3},
  };
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) {
    const bool is_bank = name == "bank_n" || name == "bank_a";
    const bool is_nul = name.starts_with("nul.");
    if (config.bypass_memory && (is_bank || is_nul)) continue;
    if (config.freeze_banks && is_bank) continue;
    out.push_back(t);
  }
  return out;
}

ModelParams init_model(const TrainConfig& raw) {
  TrainConfig cfg = resolve(raw);
  if (cfg.in_dim == 0) throw ContractViolation("config: in_dim must be set");
  Rng rng(cfg.seed);
  ModelParams m;
  m.config = cfg;
  GlMhsaConfig gc;
  gc.in_dim = cfg.in_dim;
  gc.dim = cfg.dim;
  gc.heads = cfg.heads;
  gc.ff_dim = cfg.ff_dim;
  gc.tau = cfg.tau;
  m.gl = init_gl_mhsa(gc, rng);
  m.bank_n = init_bank(cfg.mem_n, cfg.dim, BankRole::kNormal, rng);
  m.bank_a = init_bank(cfg.mem_a, cfg.dim, BankRole::kAbnormal, rng);
  m.nul = init_nul(cfg.dim, cfg.dist_d, rng);
  m.cls.w1 = xavier_uniform(2 * cfg.dim, cfg.cls_hidden1, rng);
  m.cls.b1 = Tensor::zeros({cfg.cls_hidden1}, true);
  m.cls.w2 = xavier_uniform(cfg.cls_hidden1, cfg.cls_hidden2, rng);
  m.cls.b2 = Tensor::zeros({cfg.cls_hidden2}, true);
  m.cls.w3 = xavier_uniform(cfg.cls_hidden2, 1, rng);
  m.cls.b3 = Tensor::zeros({1}, true);
  if (cfg.freeze_banks) {
    m.bank_n.prototypes.set_requires_grad(false);
    m.bank_a.prototypes.set_requires_grad(false);
  }
  return m;
}

namespace {

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  const double keep = 1.0 - p;
  Tensor mask = Tensor::zeros(x.shape());
  for (double& m : mask.mutable_data()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, mask);
}

}  // namespace

Tensor classify(const Tensor& fused, const ModelParams& params, Mode mode,
                Rng* rng) {
  const bool train = mode == Mode::kTrain && params.config.dropout > 0.0;
  if (train && rng == nullptr) {
    throw ContractViolation("classify: train mode needs an rng for dropout");
  }
  const auto& c = params.cls;
  Tensor h = relu(linear(fused, c.w1, c.b1));
  if (train) h = dropout(h, params.config.dropout, *rng);
  h = relu(linear(h, c.w2, c.b2));
  if (train) h = dropout(h, params.config.dropout, *rng);
  return sigmoid(linear(h, c.w3, c.b3));
}

VideoForward forward_video(const Tensor& x_raw, const ModelParams& params,
                           Mode mode, Rng* rng) {
  if (mode == Mode::kTrain && rng == nullptr) {
    throw ContractViolation("forward_video: train mode needs an rng");
  }
  VideoForward v;
  v.x = gl_block_forward(x_raw, params.gl);
  if (params.config.bypass_memory) {
    v.fused = fuse(v.x, Tensor::zeros(v.x.shape()));
  } else {
    v.nbank = memory_query(v.x, params.bank_n);
    v.abank = memory_query(v.x, params.bank_a);
    Rng unused(0);
    v.latent_n = encode_and_sample(v.nbank.augmented, params.nul,
                                   rng ? *rng : unused, mode);
    v.mu_a = encode_mean(v.abank.augmented, params.nul);
    v.fused = fuse(v.x, add(v.latent_n.z, v.mu_a));
  }
  v.scores = classify(v.fused, params, mode, rng);
  return v;
}

std::vector<double> score_snippets(const Tensor& x_raw,
                                   const ModelParams& params) {
  const auto v = forward_video(x_raw.detach(), params, Mode::kTest, nullptr);
  return {v.scores.data().begin(), v.scores.data().end()};
}

}  // namespace urdmu
