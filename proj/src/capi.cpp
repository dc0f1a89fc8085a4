#include "urdmu/urdmu.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "urdmu/checkpoint.hpp"
#include "urdmu/errors.hpp"
#include "urdmu/feature_io.hpp"
#include "urdmu/metrics.hpp"
#include "urdmu/nul.hpp"
#include "urdmu/selftest.hpp"
#include "urdmu/train.hpp"

struct urdmu_model {
  urdmu::ModelParams params;
};

namespace {

namespace fs = std::filesystem;
using namespace urdmu;

thread_local std::string g_last_error;
thread_local std::size_t g_last_step = 0;

urdmu_status fail(urdmu_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Runs `body`, translating core exceptions into status codes.
template <class F>
urdmu_status guarded(F&& body) {
  g_last_error.clear();
  g_last_step = 0;
  try {
    body();
    return URDMU_OK;
  } catch (const TrainingFault& e) {
    g_last_step = e.step();
    return fail(URDMU_ERR_NUMERIC, e.what());
  } catch (const NumericFault& e) {
    return fail(URDMU_ERR_NUMERIC, e.what());
  } catch (const FormatFault& e) {
    return fail(URDMU_ERR_FORMAT, e.what());
  } catch (const InputFault& e) {
    return fail(URDMU_ERR_INPUT, e.what());
  } catch (const UndefinedMetric& e) {
    return fail(URDMU_ERR_UNDEFINED_METRIC, e.what());
  } catch (const ContractViolation& e) {
    return fail(URDMU_ERR_ARGUMENT, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(URDMU_ERR_INPUT, e.what());
  } catch (const std::exception& e) {
    return fail(URDMU_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(URDMU_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw ContractViolation(std::string(what) + " must not be null");
}

TrainConfig from_c(const urdmu_train_config& c) {
  TrainConfig t;
  t.n_snippets = c.n_snippets;
  t.lr = c.lr;
  t.batch = c.batch;
  t.iters = c.iters;
  t.mem_a = c.mem_a;
  t.mem_n = c.mem_n;
  std::copy(c.lambda, c.lambda + 4, t.lambda.begin());
  t.dist_d = c.dist_d;
  t.tau = c.tau;
  t.margin = c.margin;
  t.dropout = c.dropout;
  t.seed = c.seed;
  t.in_dim = c.in_dim;
  t.dim = c.dim;
  t.heads = c.heads;
  t.ff_dim = c.ff_dim;
  t.cls_hidden1 = c.cls_hidden1;
  t.cls_hidden2 = c.cls_hidden2;
  t.bypass_memory = c.bypass_memory != 0;
  t.freeze_banks = c.freeze_banks != 0;
  return t;
}

urdmu_train_config to_c(const TrainConfig& t) {
  urdmu_train_config c{};
  c.n_snippets = t.n_snippets;
  c.lr = t.lr;
  c.batch = t.batch;
  c.iters = t.iters;
  c.mem_a = t.mem_a;
  c.mem_n = t.mem_n;
  std::copy(t.lambda.begin(), t.lambda.end(), c.lambda);
  c.dist_d = t.dist_d;
  c.tau = t.tau;
  c.margin = t.margin;
  c.dropout = t.dropout;
  c.seed = t.seed;
  c.in_dim = t.in_dim;
  c.dim = t.dim;
  c.heads = t.heads;
  c.ff_dim = t.ff_dim;
  c.cls_hidden1 = t.cls_hidden1;
  c.cls_hidden2 = t.cls_hidden2;
  c.bypass_memory = t.bypass_memory ? 1 : 0;
  c.freeze_banks = t.freeze_banks ? 1 : 0;
  return c;
}

void copy_text(const std::string& s, char* buf, std::size_t cap, std::size_t* len) {
  if (len) *len = s.size();
  if (buf && cap > 0) {
    const std::size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
}

std::vector<VideoFeatureSequence> load_pool(const char* manifest,
                                            std::uint8_t label) {
  std::vector<VideoFeatureSequence> pool;
  for (const auto& e : read_manifest(manifest).entries) {
    if (e.label == label) pool.push_back(load_entry(e));
  }
  if (pool.empty()) {
    throw InputFault(std::string(manifest) + ": no videos with label " +
                     std::to_string(label));
  }
  return pool;
}

}  // namespace

extern "C" {

const char* urdmu_version(void) { return "1.0.0"; }
const char* urdmu_last_error(void) { return g_last_error.c_str(); }
size_t urdmu_last_error_step(void) { return g_last_step; }

void urdmu_synth_config_default(urdmu_synth_config* cfg) {
  if (!cfg) return;
  const SynthConfig d;
  cfg->train_per_class = d.train_per_class;
  cfg->test_per_class = d.test_per_class;
  cfg->min_snippets = d.min_snippets;
  cfg->max_snippets = d.max_snippets;
  cfg->dim = d.dim;
  cfg->anomaly_ratio = d.anomaly_ratio;
  cfg->separation = d.separation;
  cfg->noise_sd = d.noise_sd;
  cfg->normal_radius = d.normal_radius;
  cfg->seed = d.seed;
}

urdmu_status urdmu_synth(const urdmu_synth_config* cfg, const char* out_dir,
                         size_t* files_written) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "output directory");
    SynthConfig s;
    s.train_per_class = cfg->train_per_class;
    s.test_per_class = cfg->test_per_class;
    s.min_snippets = cfg->min_snippets;
    s.max_snippets = cfg->max_snippets;
    s.dim = cfg->dim;
    s.anomaly_ratio = cfg->anomaly_ratio;
    s.separation = cfg->separation;
    s.noise_sd = cfg->noise_sd;
    s.normal_radius = cfg->normal_radius;
    s.seed = cfg->seed;
    const SynthFiles files = write_synth(synth_generate(s), out_dir);
    if (files_written) *files_written = files.files_written;
  });
}

void urdmu_train_config_default(urdmu_train_config* cfg) {
  if (cfg) *cfg = to_c(TrainConfig{});
}

urdmu_status urdmu_train_config_resolve(urdmu_train_config* cfg) {
  return guarded([&] {
    need(cfg, "config");
    *cfg = to_c(resolve(from_c(*cfg)));
  });
}

urdmu_status urdmu_train_config_text(const urdmu_train_config* cfg, char* buf,
                                     size_t cap, size_t* len) {
  return guarded([&] {
    need(cfg, "config");
    copy_text(to_key_values(from_c(*cfg)), buf, cap, len);
  });
}

urdmu_status urdmu_train(const urdmu_train_config* cfg,
                         const char* normal_manifest,
                         const char* abnormal_manifest, urdmu_step_fn on_step,
                         void* user, urdmu_model** out) {
  return guarded([&] {
    need(cfg, "config");
    need(normal_manifest, "normal manifest");
    need(abnormal_manifest, "abnormal manifest");
    need(out, "output handle");
    *out = nullptr;
    const auto normal = load_pool(normal_manifest, 0);
    const auto abnormal = load_pool(abnormal_manifest, 1);
    StepCallback cb;
    if (on_step) {
      cb = [&](const LossRecord& r) {
        const urdmu_loss_record rec{r.step, r.total, r.cls, r.dm, r.trip, r.kl, r.dis};
        on_step(&rec, user);
      };
    }
    TrainResult res = train_loop(from_c(*cfg), normal, abnormal, cb);
    *out = new urdmu_model{std::move(res.params)};
  });
}

urdmu_status urdmu_model_save(const urdmu_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    save_checkpoint(model->params, path);
  });
}

urdmu_status urdmu_model_load(const char* path, urdmu_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output handle");
    *out = nullptr;
    *out = new urdmu_model{load_checkpoint(path)};
  });
}

void urdmu_model_free(urdmu_model* model) { delete model; }

urdmu_status urdmu_model_config(const urdmu_model* model,
                                urdmu_train_config* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "output config");
    *out = to_c(model->params.config);
  });
}

urdmu_status urdmu_score_features(const urdmu_model* model, const float* features,
                                  size_t t, size_t f, double* out_scores) {
  return guarded([&] {
    need(model, "model");
    need(features, "features");
    need(out_scores, "output scores");
    if (f != model->params.config.in_dim) {
      throw InputFault("feature width " + std::to_string(f) +
                       " does not match the model's " +
                       std::to_string(model->params.config.in_dim));
    }
    VideoFeatureSequence seq;
    seq.snippets = t;
    seq.dim = f;
    seq.features.assign(features, features + t * f);
    validate(seq);
    const auto rows = score_snippets(
        resample_to_n(seq, model->params.config.n_snippets), model->params);
    const auto per_snippet = scores_to_snippets(rows, t);
    std::copy(per_snippet.begin(), per_snippet.end(), out_scores);
  });
}

urdmu_status urdmu_score_manifest(const urdmu_model* model, const char* manifest,
                                  const char* out_dir, urdmu_message_fn warn,
                                  void* user, size_t* traces_written) {
  return guarded([&] {
    need(model, "model");
    need(manifest, "manifest");
    need(out_dir, "output directory");
    const Manifest m = read_manifest(manifest);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
      throw InputFault(std::string("cannot create output directory ") + out_dir);
    }
    if (m.entries.empty() && warn) {
      warn((std::string(manifest) + ": manifest is empty, nothing scored").c_str(), user);
    }
    const auto& cfg = model->params.config;
    std::set<std::string> seen;
    std::size_t written = 0;
    for (const auto& e : m.entries) {
      const VideoFeatureSequence seq = load_entry(e);
      if (seq.dim != cfg.in_dim) {
        throw InputFault(e.path.string() + ": feature width " + std::to_string(seq.dim) +
                         " does not match the model's " + std::to_string(cfg.in_dim));
      }
      if (!seen.insert(seq.id).second) {
        throw InputFault("video id '" + seq.id + "' appears twice in " + manifest);
      }
      const auto rows = score_snippets(resample_to_n(seq, cfg.n_snippets), model->params);
      const ScoreTrace trace{seq.id, expand_snippets(scores_to_snippets(rows, seq.snippets))};
      write_score_trace(trace, fs::path(out_dir) / (seq.id + ".csv"));
      ++written;
    }
    if (traces_written) *traces_written = written;
  });
}

urdmu_status urdmu_evaluate(const char* scores_dir, const char* gt_manifest,
                            double threshold, int abnormal_subset,
                            urdmu_message_fn warn, void* user,
                            urdmu_eval_report* out) {
  return guarded([&] {
    need(scores_dir, "scores directory");
    need(gt_manifest, "ground-truth manifest");
    need(out, "output report");
    std::map<std::string, VideoTruth> truth;
    for (const auto& e : read_manifest(gt_manifest).entries) {
      VideoFeatureSequence seq = load_entry(e);
      if (!seq.frame_gt) {
        throw InputFault(e.path.string() + ": no frame-level ground truth");
      }
      if (!truth.emplace(seq.id, VideoTruth{seq.label, std::move(*seq.frame_gt)}).second) {
        throw InputFault("video id '" + seq.id + "' appears twice in " + gt_manifest);
      }
    }
    const auto traces = read_score_dir(scores_dir);
    const EvalReport r = evaluate(traces, truth,
                                  abnormal_subset ? Subset::kAbnormalOnly : Subset::kAll,
                                  threshold);
    if (warn) {
      for (const auto& w : r.warnings) warn(w.c_str(), user);
    }
    urdmu_eval_report c{};
    auto put = [](const std::optional<double>& v, int& has, double& dst) {
      has = v.has_value() ? 1 : 0;
      dst = v.value_or(0.0);
    };
    put(r.auc, c.has_auc, c.auc);
    put(r.ap, c.has_ap, c.ap);
    put(r.far, c.has_far, c.far);
    put(r.auc_sub, c.has_auc_sub, c.auc_sub);
    put(r.ap_sub, c.has_ap_sub, c.ap_sub);
    *out = c;
  });
}

urdmu_status urdmu_report_text(const urdmu_eval_report* report, char* buf,
                               size_t cap, size_t* len) {
  return guarded([&] {
    need(report, "report");
    EvalReport r;
    if (report->has_auc) r.auc = report->auc;
    if (report->has_ap) r.ap = report->ap;
    if (report->has_far) r.far = report->far;
    if (report->has_auc_sub) r.auc_sub = report->auc_sub;
    if (report->has_ap_sub) r.ap_sub = report->ap_sub;
    copy_text(format_report(r), buf, cap, len);
  });
}

urdmu_status urdmu_roc_auc(const double* scores, const uint8_t* labels,
                           size_t n, double* out) {
  return guarded([&] {
    need(out, "output");
    if (n > 0) {
      need(scores, "scores");
      need(labels, "labels");
    }
    *out = roc_auc({scores, n}, {labels, n});
  });
}

urdmu_status urdmu_pr_ap(const double* scores, const uint8_t* labels, size_t n,
                         double* out) {
  return guarded([&] {
    need(out, "output");
    if (n > 0) {
      need(scores, "scores");
      need(labels, "labels");
    }
    *out = pr_ap({scores, n}, {labels, n});
  });
}

urdmu_status urdmu_false_alarm_rate(const double* normal_scores, size_t n,
                                    double threshold, double* out) {
  return guarded([&] {
    need(out, "output");
    if (n > 0) need(normal_scores, "scores");
    *out = false_alarm_rate({normal_scores, n}, threshold);
  });
}

urdmu_status urdmu_selftest(urdmu_property_fn on_result, void* user,
                            size_t* groups, size_t* failures) {
  return guarded([&] {
    const auto results = run_selftest();
    std::size_t failed = 0;
    for (const auto& r : results) {
      if (!r.passed) ++failed;
      if (on_result) on_result(r.group.c_str(), r.passed ? 1 : 0, r.detail.c_str(), user);
    }
    if (groups) *groups = results.size();
    if (failures) *failures = failed;
  });
}

void urdmu_debug_corrupt_kl(int enabled) { debug::set_kl_sign_corruption(enabled != 0); }

}  // extern "C"
