#include "urdmu/train.hpp"

#include "urdmu/errors.hpp"
#include "urdmu/optim.hpp"

namespace urdmu {

namespace {

// Training draws come from a stream separate from initialisation so that
// iters=0 leaves the init untouched and the two never interleave.
constexpr std::uint64_t kTrainStreamSalt = 0x9E3779B97F4A7C15ull;

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

}  // namespace

Tensor cls_loss(const Tensor& scores_n, const Tensor& scores_a) {
  const Tensor vn = topk_mean(scores_n, topk_count(scores_n.size()));
  const Tensor va = topk_mean(scores_a, topk_count(scores_a.size()));
  return add(bce_mean(vn, 0.0), bce_mean(va, 1.0));
}

Tensor total_loss(const LossParts& parts, const std::array<double, 4>& lambda) {
  Tensor total = parts.cls;
  const Tensor* aux[] = {&parts.dm, &parts.trip, &parts.kl, &parts.dis};
  for (int i = 0; i < 4; ++i) {
    if (!aux[i]->defined() || lambda[i] == 0.0) continue;
    const Tensor term = scalar_mul(*aux[i], lambda[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

LossParts pair_losses(const Tensor& x_normal, const Tensor& x_abnormal,
                      const ModelParams& params, Rng& rng) {
  const auto& cfg = params.config;
  const VideoForward vn = forward_video(x_normal, params, Mode::kTrain, &rng);
  const VideoForward va = forward_video(x_abnormal, params, Mode::kTrain, &rng);
  LossParts p;
  p.cls = cls_loss(vn.scores, va.scores);
  if (cfg.bypass_memory) return p;

  p.dm = dual_memory_loss(vn.nbank.topk_mean, vn.abank.topk_mean,
                          va.nbank.topk_mean, va.abank.topk_mean);
  p.trip = triplet_separation_loss(vn.nbank.topk_mean, vn.x, va.nbank.topk_mean,
                                   va.abank.topk_mean, va.x, cfg.margin);
  p.kl = kl_loss_logvar(vn.latent_n.mu, vn.latent_n.logvar);
  const std::size_t k = topk_count(x_normal.rows());
  const Tensor mu_a_topk = topk_row_mean(va.abank.topk_mean, va.mu_a, k);
  const Tensor z_n_topk = topk_row_mean(vn.nbank.topk_mean, vn.latent_n.z, k);
  p.dis = magnitude_distance_loss(mu_a_topk, z_n_topk, cfg.dist_d);
  return p;
}

LossParts batch_losses(const Batch& batch, const ModelParams& params,
                       Rng& rng) {
  const std::size_t pairs = batch.normal.size();
  if (pairs == 0 || batch.abnormal.size() != pairs) {
    throw ContractViolation("batch_losses: need equal, nonzero pair counts");
  }
  LossParts sum;
  auto acc = [](Tensor& into, const Tensor& t) {
    if (!t.defined()) return;
    into = into.defined() ? add(into, t) : t;
  };
  for (std::size_t i = 0; i < pairs; ++i) {
    const LossParts p =
        pair_losses(batch.normal[i], batch.abnormal[i], params, rng);
    acc(sum.cls, p.cls);
    acc(sum.dm, p.dm);
    acc(sum.trip, p.trip);
    acc(sum.kl, p.kl);
    acc(sum.dis, p.dis);
  }
  const double inv = 1.0 / static_cast<double>(pairs);
  for (Tensor* t : {&sum.cls, &sum.dm, &sum.trip, &sum.kl, &sum.dis}) {
    if (t->defined()) *t = scalar_mul(*t, inv);
  }
  return sum;
}

TrainResult train_loop(const TrainConfig& raw,
                       std::span<const VideoFeatureSequence> normal_pool,
                       std::span<const VideoFeatureSequence> abnormal_pool,
                       const StepCallback& on_step) {
  if (normal_pool.empty() || abnormal_pool.empty()) {
    throw InputFault("training needs at least one normal and one abnormal video");
  }
  TrainConfig cfg = raw;
  const std::size_t feat = normal_pool.front().dim;
  if (cfg.in_dim == 0) cfg.in_dim = feat;
  for (auto pool : {normal_pool, abnormal_pool}) {
    for (const auto& v : pool) {
      if (v.dim != cfg.in_dim) {
        throw InputFault("video " + v.id + " has " + std::to_string(v.dim) +
                         " features, expected " + std::to_string(cfg.in_dim));
      }
    }
  }
  TrainResult result{init_model(cfg), {}};
  const ModelParams& params = result.params;
  auto trainable = params.trainable();
  Adam adam;
  Rng rng(cfg.seed ^ kTrainStreamSalt);
  result.trace.reserve(cfg.iters);
  for (std::size_t step = 1; step <= cfg.iters; ++step) {
    try {
      const Batch batch = sample_batch(normal_pool, abnormal_pool, cfg.batch,
                                       cfg.n_snippets, rng);
      const LossParts parts = batch_losses(batch, params, rng);
      const Tensor loss = total_loss(parts, params.config.lambda);
      LossRecord rec;
      rec.step = step;
      rec.total = loss.item();
      rec.cls = value_or_zero(parts.cls);
      rec.dm = value_or_zero(parts.dm);
      rec.trip = value_or_zero(parts.trip);
      rec.kl = value_or_zero(parts.kl);
      rec.dis = value_or_zero(parts.dis);
      reverse_accumulate(loss);
      for (auto& t : trainable) {
        // Parameters the loss never reached (e.g. zero-weighted branches)
        // still take an Adam step with a zero gradient.
        if (!t.has_grad()) t.mutable_grad();
      }
      adam.update(trainable, cfg.lr, step);
      result.trace.push_back(rec);
      if (on_step) on_step(rec);
    } catch (const TrainingFault&) {
      throw;
    } catch (const NumericFault& e) {
      throw TrainingFault(step, e);
    }
  }
  return result;
}

}  // namespace urdmu
