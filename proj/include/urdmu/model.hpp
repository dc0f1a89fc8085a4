#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "urdmu/dmu.hpp"
#include "urdmu/gl_mhsa.hpp"
#include "urdmu/nul.hpp"
#include "urdmu/rng.hpp"
#include "urdmu/tensor.hpp"

namespace urdmu {

// Everything needed to rebuild and retrain a model. Defaults follow the
// reference training schedule; see README for the architecture defaults.
struct TrainConfig {
  std::size_t n_snippets = 200;
  double lr = 1e-4;
  std::size_t batch = 64;  // videos per step, half normal and half abnormal
  std::size_t iters = 3000;
  std::size_t mem_a = 60;
  std::size_t mem_n = 60;
  std::array<double, 4> lambda = {0.1, 0.1, 0.001, 0.0001};
  double dist_d = 100.0;
  double tau = 1.0;
  double margin = 1.0;
  double dropout = 0.6;
  std::uint64_t seed = 0;

  std::size_t in_dim = 0;  // F; taken from the data when 0
  std::size_t dim = 128;
  std::size_t heads = 4;
  std::size_t ff_dim = 0;  // 0 means 4 * dim
  std::size_t cls_hidden1 = 512;
  std::size_t cls_hidden2 = 128;

  // Ablation switches: skip both memory banks (and everything reading them),
  // or keep the banks but never update their prototypes.
  bool bypass_memory = false;
  bool freeze_banks = false;
};

// Fills derived defaults (ff_dim) and checks every field; throws
// ContractViolation on an invalid combination.
TrainConfig resolve(TrainConfig cfg);

// `key=value` lines in a fixed order, round-trippable through parse_config.
std::string to_key_values(const TrainConfig& cfg);
TrainConfig parse_config(const std::string& text);

struct ClassifierParams {
  Tensor w1, b1;  // 2D x h1
  Tensor w2, b2;  // h1 x h2
  Tensor w3, b3;  // h2 x 1
};

struct ModelParams {
  TrainConfig config;
  GlMhsaParams gl;
  MemoryBank bank_n;
  MemoryBank bank_a;
  NulParams nul;
  ClassifierParams cls;

  // Stable, documented inventory of every learnable tensor.
  std::vector<std::pair<std::string, Tensor>> named() const;
  // Tensors the optimizer updates under the config's ablation switches.
  std::vector<Tensor> trainable() const;
};

ModelParams init_model(const TrainConfig& cfg);

// Per-snippet anomaly probability, N x 1. Train mode applies dropout with
// masks drawn from `rng`; test mode is deterministic and ignores `rng`.
Tensor classify(const Tensor& fused, const ModelParams& params, Mode mode,
                Rng* rng = nullptr);

// Latent features fed to the classifier next to X: the normal-bank read
// through the (sampled, in training) uncertainty encoder plus the
// abnormal-bank read through the mean encoder.
struct VideoForward {
  Tensor x;           // GL-MHSA output, N x D
  QueryResult nbank;  // query against the normal bank
  QueryResult abank;  // query against the abnormal bank
  LatentSample latent_n;  // NUL over nbank.augmented
  Tensor mu_a;            // mean encoder over abank.augmented
  Tensor fused;           // [x ; latent_n.z + mu_a]
  Tensor scores;          // N x 1
};

VideoForward forward_video(const Tensor& x_raw, const ModelParams& params,
                           Mode mode, Rng* rng);

// Test-mode snippet scores for one N x F input.
std::vector<double> score_snippets(const Tensor& x_raw,
                                   const ModelParams& params);

}  // namespace urdmu
