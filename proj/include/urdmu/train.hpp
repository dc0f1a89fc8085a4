#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "urdmu/feature_io.hpp"
#include "urdmu/model.hpp"

namespace urdmu {

// Video-level MIL loss: each video's score is the top-K mean of its snippet
// scores (K = floor(N/16) + 1); BCE against 0 for the normal video and 1 for
// the abnormal one, summed.
Tensor cls_loss(const Tensor& scores_n, const Tensor& scores_a);

struct LossParts {
  Tensor cls, dm, trip, kl, dis;
};

// L = cls + l1 dm + l2 trip + l3 kl + l4 dis. Undefined parts count as 0.
Tensor total_loss(const LossParts& parts, const std::array<double, 4>& lambda);

// All five terms for one (normal, abnormal) pair of N x F inputs in train
// mode. Memory-derived terms are undefined when the banks are bypassed.
LossParts pair_losses(const Tensor& x_normal, const Tensor& x_abnormal,
                      const ModelParams& params, Rng& rng);

// Batch objective: every term averaged over the batch's pairs.
LossParts batch_losses(const Batch& batch, const ModelParams& params,
                       Rng& rng);

struct LossRecord {
  std::size_t step = 0;  // 1-based
  double total = 0, cls = 0, dm = 0, trip = 0, kl = 0, dis = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> trace;
};

using StepCallback = std::function<void(const LossRecord&)>;

// Runs cfg.iters Adam steps over paired batches. Fully determined by
// cfg.seed. A non-finite value aborts with TrainingFault carrying the step.
TrainResult train_loop(const TrainConfig& cfg,
                       std::span<const VideoFeatureSequence> normal_pool,
                       std::span<const VideoFeatureSequence> abnormal_pool,
                       const StepCallback& on_step = {});

}  // namespace urdmu
