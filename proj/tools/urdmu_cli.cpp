// urdmu command-line front end: synth | train | score | eval | selftest.
// Exit codes: 0 success, 1 selftest failure, 2 usage or input error,
// 3 numeric fault.

#include <cerrno>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "urdmu/urdmu.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSelftest = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(urdmu_status s) {
  switch (s) {
    case URDMU_OK: return kExitOk;
    case URDMU_ERR_NUMERIC: return kExitNumeric;
    default: return kExitUsage;
  }
}

int report_failure(const char* what, urdmu_status s) {
  std::fprintf(stderr, "urdmu %s: %s\n", what, urdmu_last_error());
  return exit_code_for(s);
}

void print_warning(const char* message, void*) {
  std::fprintf(stderr, "warning: %s\n", message);
}

// URDMU_SEED, when set, replaces the --seed value.
bool apply_seed_override(std::uint64_t& seed) {
  const char* env = std::getenv("URDMU_SEED");
  if (env == nullptr || *env == '\0') return true;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') {
    std::fprintf(stderr, "urdmu: URDMU_SEED must be a non-negative integer, got '%s'\n", env);
    return false;
  }
  seed = v;
  return true;
}

void print_config_line(const std::string& key, const std::string& value) {
  std::printf("# %s=%s\n", key.c_str(), value.c_str());
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, res.ptr);
}

struct SynthArgs {
  std::string out;
  urdmu_synth_config cfg{};
};

int run_synth(SynthArgs& a) {
  if (!apply_seed_override(a.cfg.seed)) return kExitUsage;
  if (a.cfg.train_per_class == 0 || a.cfg.test_per_class == 0) {
    std::fprintf(stderr, "urdmu synth: --videos and --test-videos must be >= 1\n");
    return kExitUsage;
  }
  if (!(a.cfg.separation > 0)) {
    std::fprintf(stderr, "urdmu synth: --separation must be > 0\n");
    return kExitUsage;
  }
  std::printf("# resolved config (synth)\n");
  print_config_line("out", a.out);
  print_config_line("videos", std::to_string(a.cfg.train_per_class));
  print_config_line("test_videos", std::to_string(a.cfg.test_per_class));
  print_config_line("min_snippets", std::to_string(a.cfg.min_snippets));
  print_config_line("max_snippets", std::to_string(a.cfg.max_snippets));
  print_config_line("dim", std::to_string(a.cfg.dim));
  print_config_line("anomaly_ratio", num(a.cfg.anomaly_ratio));
  print_config_line("separation", num(a.cfg.separation));
  print_config_line("noise_sd", num(a.cfg.noise_sd));
  print_config_line("normal_radius", num(a.cfg.normal_radius));
  print_config_line("seed", std::to_string(a.cfg.seed));
  std::size_t written = 0;
  const urdmu_status s = urdmu_synth(&a.cfg, a.out.c_str(), &written);
  if (s != URDMU_OK) return report_failure("synth", s);
  std::printf("wrote %zu FVB files and train.tsv/test.tsv to %s\n", written, a.out.c_str());
  return kExitOk;
}

struct TrainArgs {
  std::string normal, abnormal, out, loss_csv;
  urdmu_train_config cfg{};
  bool bypass = false;
  bool freeze = false;
  std::size_t log_every = 50;
};

struct TrainContext {
  std::FILE* csv = nullptr;
  std::size_t log_every = 0;
};

void on_train_step(const urdmu_loss_record* r, void* user) {
  auto* ctx = static_cast<TrainContext*>(user);
  std::fprintf(ctx->csv, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r->step,
               r->total, r->cls, r->dm, r->trip, r->kl, r->dis);
  if (ctx->log_every && (r->step == 1 || r->step % ctx->log_every == 0)) {
    std::fprintf(stderr, "step %zu loss %.6f (cls %.6f)\n", r->step, r->total, r->cls);
  }
}

int run_train(TrainArgs& a) {
  a.cfg.bypass_memory = a.bypass ? 1 : 0;
  a.cfg.freeze_banks = a.freeze ? 1 : 0;
  if (!apply_seed_override(a.cfg.seed)) return kExitUsage;
  if (urdmu_train_config_resolve(&a.cfg) != URDMU_OK) {
    std::fprintf(stderr, "urdmu train: %s\n", urdmu_last_error());
    return kExitUsage;
  }
  if (a.loss_csv.empty()) a.loss_csv = a.out + ".loss.csv";
  std::printf("# resolved config (train)\n");
  print_config_line("normal", a.normal);
  print_config_line("abnormal", a.abnormal);
  print_config_line("out", a.out);
  print_config_line("loss_csv", a.loss_csv);
  std::size_t len = 0;
  urdmu_train_config_text(&a.cfg, nullptr, 0, &len);
  std::string text(len + 1, '\0');
  urdmu_train_config_text(&a.cfg, text.data(), text.size(), &len);
  text.resize(len);
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::printf("# %s\n", text.substr(start, nl - start).c_str());
    start = nl == std::string::npos ? text.size() : nl + 1;
  }
  std::fflush(stdout);

  TrainContext ctx;
  ctx.log_every = a.log_every;
  ctx.csv = std::fopen(a.loss_csv.c_str(), "w");
  if (ctx.csv == nullptr) {
    std::fprintf(stderr, "urdmu train: cannot write %s\n", a.loss_csv.c_str());
    return kExitUsage;
  }
  std::fprintf(ctx.csv, "step,total,cls,dm,trip,kl,dis\n");
  urdmu_model* model = nullptr;
  const urdmu_status s = urdmu_train(&a.cfg, a.normal.c_str(), a.abnormal.c_str(),
                                     on_train_step, &ctx, &model);
  std::fclose(ctx.csv);
  if (s == URDMU_ERR_NUMERIC) {
    std::fprintf(stderr, "urdmu train: numeric fault at step %zu: %s\n",
                 urdmu_last_error_step(), urdmu_last_error());
    return kExitNumeric;
  }
  if (s != URDMU_OK) return report_failure("train", s);
  const urdmu_status saved = urdmu_model_save(model, a.out.c_str());
  urdmu_model_free(model);
  if (saved != URDMU_OK) return report_failure("train", saved);
  std::printf("checkpoint written to %s\n", a.out.c_str());
  return kExitOk;
}

struct ScoreArgs {
  std::string checkpoint, input, out;
};

int run_score(const ScoreArgs& a) {
  std::printf("# resolved config (score)\n");
  print_config_line("checkpoint", a.checkpoint);
  print_config_line("input", a.input);
  print_config_line("out", a.out);
  urdmu_model* model = nullptr;
  urdmu_status s = urdmu_model_load(a.checkpoint.c_str(), &model);
  if (s != URDMU_OK) return report_failure("score", s);
  std::size_t written = 0;
  s = urdmu_score_manifest(model, a.input.c_str(), a.out.c_str(), print_warning,
                           nullptr, &written);
  urdmu_model_free(model);
  if (s != URDMU_OK) return report_failure("score", s);
  std::printf("wrote %zu score traces to %s\n", written, a.out.c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string scores, gt, report, subset = "all";
  double threshold = 0.5;
};

int run_eval(EvalArgs& a) {
  if (a.report.empty()) a.report = a.scores + "/report.txt";
  std::printf("# resolved config (eval)\n");
  print_config_line("scores", a.scores);
  print_config_line("gt", a.gt);
  print_config_line("threshold", num(a.threshold));
  print_config_line("subset", a.subset);
  print_config_line("report", a.report);
  urdmu_eval_report r{};
  const urdmu_status s = urdmu_evaluate(a.scores.c_str(), a.gt.c_str(), a.threshold,
                                        a.subset == "abnormal", print_warning, nullptr, &r);
  if (s != URDMU_OK) return report_failure("eval", s);
  std::size_t len = 0;
  urdmu_report_text(&r, nullptr, 0, &len);
  std::string text(len + 1, '\0');
  urdmu_report_text(&r, text.data(), text.size(), &len);
  text.resize(len);
  std::fputs(text.c_str(), stdout);
  std::ofstream out(a.report, std::ios::trunc);
  out << text;
  if (!out) {
    std::fprintf(stderr, "urdmu eval: cannot write %s\n", a.report.c_str());
    return kExitUsage;
  }
  return kExitOk;
}

void print_property(const char* group, int passed, const char* detail, void*) {
  std::printf("%s %-26s %s\n", passed ? "PASS" : "FAIL", group, detail);
}

int run_selftest(bool corrupt_kl) {
  std::printf("# resolved config (selftest)\n");
  print_config_line("corrupt_kl", corrupt_kl ? "1" : "0");
  urdmu_debug_corrupt_kl(corrupt_kl ? 1 : 0);
  std::size_t groups = 0, failures = 0;
  const urdmu_status s = urdmu_selftest(print_property, nullptr, &groups, &failures);
  if (s != URDMU_OK) return report_failure("selftest", s);
  std::printf("%zu property groups, %zu failed\n", groups, failures);
  return failures == 0 ? kExitOk : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UR-DMU weakly supervised video anomaly detection"};
  app.require_subcommand(1);

  SynthArgs synth;
  urdmu_synth_config_default(&synth.cfg);
  auto* s = app.add_subcommand("synth", "generate a synthetic feature dataset");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--videos", synth.cfg.train_per_class, "training videos per class")
      ->capture_default_str();
  s->add_option("--test-videos", synth.cfg.test_per_class, "test videos per class")
      ->capture_default_str();
  s->add_option("--dim", synth.cfg.dim, "feature width F")->capture_default_str();
  s->add_option("--min-snippets", synth.cfg.min_snippets)->capture_default_str();
  s->add_option("--max-snippets", synth.cfg.max_snippets)->capture_default_str();
  s->add_option("--anomaly-ratio", synth.cfg.anomaly_ratio)->capture_default_str();
  s->add_option("--separation", synth.cfg.separation)->capture_default_str();
  s->add_option("--noise-sd", synth.cfg.noise_sd)->capture_default_str();
  s->add_option("--seed", synth.cfg.seed)->capture_default_str();

  TrainArgs train;
  urdmu_train_config_default(&train.cfg);
  auto* t = app.add_subcommand("train", "train a model and write a checkpoint");
  t->add_option("--normal", train.normal, "manifest of normal videos")->required();
  t->add_option("--abnormal", train.abnormal, "manifest of abnormal videos")->required();
  t->add_option("--out", train.out, "checkpoint path")->required();
  t->add_option("--loss-csv", train.loss_csv, "per-step loss trace (default <out>.loss.csv)");
  t->add_option("--iters", train.cfg.iters)->capture_default_str();
  t->add_option("--batch", train.cfg.batch)->capture_default_str();
  t->add_option("--lr", train.cfg.lr)->capture_default_str();
  t->add_option("--snippets", train.cfg.n_snippets, "snippets per video N")->capture_default_str();
  t->add_option("--dim", train.cfg.dim, "model width D")->capture_default_str();
  t->add_option("--heads", train.cfg.heads)->capture_default_str();
  t->add_option("--ff-dim", train.cfg.ff_dim, "MLP width (0: 4 * dim)")->capture_default_str();
  t->add_option("--mem-a", train.cfg.mem_a)->capture_default_str();
  t->add_option("--mem-n", train.cfg.mem_n)->capture_default_str();
  t->add_option("--tau", train.cfg.tau)->capture_default_str();
  t->add_option("--lambda1", train.cfg.lambda[0])->capture_default_str();
  t->add_option("--lambda2", train.cfg.lambda[1])->capture_default_str();
  t->add_option("--lambda3", train.cfg.lambda[2])->capture_default_str();
  t->add_option("--lambda4", train.cfg.lambda[3])->capture_default_str();
  t->add_option("--margin", train.cfg.margin)->capture_default_str();
  t->add_option("--dist-d", train.cfg.dist_d)->capture_default_str();
  t->add_option("--dropout", train.cfg.dropout)->capture_default_str();
  t->add_option("--seed", train.cfg.seed)->capture_default_str();
  t->add_flag("--bypass-memory", train.bypass, "disable both memory banks");
  t->add_flag("--freeze-banks", train.freeze, "never update the prototypes");
  t->add_option("--log-every", train.log_every, "progress interval (0: quiet)")
      ->capture_default_str();

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "write per-frame score traces");
  sc->add_option("--checkpoint", score.checkpoint)->required();
  sc->add_option("--input", score.input, "manifest to score")->required();
  sc->add_option("--out", score.out, "output directory")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "frame-level AUC, AP and FAR");
  e->add_option("--scores", eval.scores, "directory of score traces")->required();
  e->add_option("--gt", eval.gt, "manifest with frame ground truth")->required();
  e->add_option("--threshold", eval.threshold)->capture_default_str();
  e->add_option("--subset", eval.subset, "all | abnormal")
      ->check(CLI::IsMember({"all", "abnormal"}))
      ->capture_default_str();
  e->add_option("--report", eval.report, "report file (default <scores>/report.txt)");

  bool corrupt_kl = false;
  auto* st = app.add_subcommand("selftest", "run the property suites");
  st->add_flag("--debug-corrupt-kl", corrupt_kl, "negative control: flip the KL sign");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  if (s->parsed()) return run_synth(synth);
  if (t->parsed()) return run_train(train);
  if (sc->parsed()) return run_score(score);
  if (e->parsed()) return run_eval(eval);
  if (st->parsed()) return run_selftest(corrupt_kl);
  return kExitUsage;
}
