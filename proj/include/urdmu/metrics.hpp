#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace urdmu {

struct ScoreTrace {
  std::string video_id;
  std::vector<double> frame_scores;  // 16 per snippet
};

struct EvalReport {
  std::optional<double> auc;
  std::optional<double> ap;
  std::optional<double> far;  // absent when there are no normal videos
  std::optional<double> auc_sub;
  std::optional<double> ap_sub;
  std::vector<std::string> warnings;
};

enum class Subset { kAll, kAbnormalOnly };

struct VideoTruth {
  std::uint8_t label = 0;
  std::vector<std::uint8_t> frame_gt;
};

// Repeats every snippet score for the 16 frames it spans.
std::vector<double> expand_snippets(std::span<const double> snippet_scores);

// Area under the ROC curve by threshold sweep and trapezoidal integration
// (ties get half credit). Throws UndefinedMetric unless both classes occur.
double roc_auc(std::span<const double> scores,
               std::span<const std::uint8_t> labels);

// Average precision: sum over distinct score thresholds (descending) of
// recall gain x precision; tied scores form one threshold. Throws
// UndefinedMetric when there are no positives.
double pr_ap(std::span<const double> scores,
             std::span<const std::uint8_t> labels);

// Fraction of (normal) frame scores >= threshold.
double false_alarm_rate(std::span<const double> normal_scores,
                        double threshold = 0.5);

// Concatenates frames over the selected videos and applies the metrics.
// FAR is taken over normal videos only; kAbnormalOnly additionally fills
// auc_sub/ap_sub. Length mismatches truncate to the shorter side with a
// warning. Throws InputFault on duplicate or unmatched ids.
EvalReport evaluate(std::span<const ScoreTrace> traces,
                    const std::map<std::string, VideoTruth>& truth,
                    Subset subset, double threshold = 0.5);

// `key=value` lines, values at 6 decimals.
std::string format_report(const EvalReport& report);

// UTF-8 lines `video_id,frame_index,score`.
void write_score_trace(const ScoreTrace& trace,
                       const std::filesystem::path& path);
std::vector<ScoreTrace> read_score_traces(const std::filesystem::path& path);
// Every *.csv in a directory, in filename order.
std::vector<ScoreTrace> read_score_dir(const std::filesystem::path& dir);

}  // namespace urdmu
