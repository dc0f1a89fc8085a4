/* C interface to the urdmu shared library. Every fallible call returns a
 * urdmu_status; on failure urdmu_last_error() describes the problem for the
 * calling thread until its next call into the library. */
#ifndef URDMU_URDMU_H
#define URDMU_URDMU_H

#include <stddef.h>
#include <stdint.h>

#if defined(URDMU_BUILDING_LIBRARY)
#define URDMU_API __attribute__((visibility("default")))
#else
#define URDMU_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum urdmu_status {
  URDMU_OK = 0,
  URDMU_ERR_ARGUMENT = 1,         /* invalid argument or configuration */
  URDMU_ERR_INPUT = 2,            /* missing file, id mismatch, bad manifest */
  URDMU_ERR_FORMAT = 3,           /* malformed FVB or checkpoint bytes */
  URDMU_ERR_NUMERIC = 4,          /* NaN/Inf during computation */
  URDMU_ERR_UNDEFINED_METRIC = 5, /* e.g. AUC over a single class */
  URDMU_ERR_INTERNAL = 6
} urdmu_status;

URDMU_API const char* urdmu_version(void);
URDMU_API const char* urdmu_last_error(void);
/* 1-based optimizer step of the last URDMU_ERR_NUMERIC raised by
 * urdmu_train, 0 otherwise. */
URDMU_API size_t urdmu_last_error_step(void);

typedef void (*urdmu_message_fn)(const char* message, void* user);

/* ---- synthetic data ---------------------------------------------------- */

typedef struct urdmu_synth_config {
  size_t train_per_class;
  size_t test_per_class;
  size_t min_snippets;
  size_t max_snippets;
  size_t dim;
  double anomaly_ratio;
  double separation;
  double noise_sd;
  double normal_radius;
  uint64_t seed;
} urdmu_synth_config;

URDMU_API void urdmu_synth_config_default(urdmu_synth_config* cfg);
/* Writes <out_dir>/<id>.fvb for every video plus train.tsv and test.tsv. */
URDMU_API urdmu_status urdmu_synth(const urdmu_synth_config* cfg,
                                   const char* out_dir, size_t* files_written);

/* ---- training ---------------------------------------------------------- */

typedef struct urdmu_train_config {
  size_t n_snippets;
  double lr;
  size_t batch;
  size_t iters;
  size_t mem_a;
  size_t mem_n;
  double lambda[4];
  double dist_d;
  double tau;
  double margin;
  double dropout;
  uint64_t seed;
  size_t in_dim; /* 0: taken from the training data */
  size_t dim;
  size_t heads;
  size_t ff_dim; /* 0: 4 * dim */
  size_t cls_hidden1;
  size_t cls_hidden2;
  int bypass_memory;
  int freeze_banks;
} urdmu_train_config;

URDMU_API void urdmu_train_config_default(urdmu_train_config* cfg);
/* Fills derived defaults and validates. */
URDMU_API urdmu_status urdmu_train_config_resolve(urdmu_train_config* cfg);
/* key=value lines. Writes at most `cap` bytes including the terminator and
 * stores the full length (without terminator) in *len. */
URDMU_API urdmu_status urdmu_train_config_text(const urdmu_train_config* cfg,
                                               char* buf, size_t cap,
                                               size_t* len);

typedef struct urdmu_loss_record {
  size_t step;
  double total, cls, dm, trip, kl, dis;
} urdmu_loss_record;

typedef void (*urdmu_step_fn)(const urdmu_loss_record* record, void* user);

typedef struct urdmu_model urdmu_model;

/* Videos labelled 0 in `normal_manifest` and 1 in `abnormal_manifest` form
 * the two pools; the same manifest may be passed twice. */
URDMU_API urdmu_status urdmu_train(const urdmu_train_config* cfg,
                                   const char* normal_manifest,
                                   const char* abnormal_manifest,
                                   urdmu_step_fn on_step, void* user,
                                   urdmu_model** out);

URDMU_API urdmu_status urdmu_model_save(const urdmu_model* model,
                                        const char* path);
URDMU_API urdmu_status urdmu_model_load(const char* path, urdmu_model** out);
URDMU_API void urdmu_model_free(urdmu_model* model);
URDMU_API urdmu_status urdmu_model_config(const urdmu_model* model,
                                          urdmu_train_config* out);

/* ---- scoring ----------------------------------------------------------- */

/* Test-mode scores for one T x F feature matrix (row-major); out_scores
 * receives T snippet scores. */
URDMU_API urdmu_status urdmu_score_features(const urdmu_model* model,
                                            const float* features, size_t t,
                                            size_t f, double* out_scores);

/* One <out_dir>/<id>.csv score trace per manifest entry, 16 frames per
 * snippet. */
URDMU_API urdmu_status urdmu_score_manifest(const urdmu_model* model,
                                            const char* manifest,
                                            const char* out_dir,
                                            urdmu_message_fn warn, void* user,
                                            size_t* traces_written);

/* ---- evaluation -------------------------------------------------------- */

typedef struct urdmu_eval_report {
  int has_auc, has_ap, has_far, has_auc_sub, has_ap_sub;
  double auc, ap, far, auc_sub, ap_sub;
} urdmu_eval_report;

/* Reads every *.csv in `scores_dir` and the ground truth of every entry in
 * `gt_manifest`. */
URDMU_API urdmu_status urdmu_evaluate(const char* scores_dir,
                                      const char* gt_manifest,
                                      double threshold, int abnormal_subset,
                                      urdmu_message_fn warn, void* user,
                                      urdmu_eval_report* out);
URDMU_API urdmu_status urdmu_report_text(const urdmu_eval_report* report,
                                         char* buf, size_t cap, size_t* len);

URDMU_API urdmu_status urdmu_roc_auc(const double* scores,
                                     const uint8_t* labels, size_t n,
                                     double* out);
URDMU_API urdmu_status urdmu_pr_ap(const double* scores, const uint8_t* labels,
                                   size_t n, double* out);
URDMU_API urdmu_status urdmu_false_alarm_rate(const double* normal_scores,
                                              size_t n, double threshold,
                                              double* out);

/* ---- self-test --------------------------------------------------------- */

typedef void (*urdmu_property_fn)(const char* group, int passed,
                                  const char* detail, void* user);

URDMU_API urdmu_status urdmu_selftest(urdmu_property_fn on_result, void* user,
                                      size_t* groups, size_t* failures);
/* Negative control: flips the sign of the KL term until reset. */
URDMU_API void urdmu_debug_corrupt_kl(int enabled);

#ifdef __cplusplus
}
#endif

#endif /* URDMU_URDMU_H */
