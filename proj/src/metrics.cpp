#include "urdmu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "urdmu/errors.hpp"
#include "urdmu/feature_io.hpp"

namespace urdmu {

namespace fs = std::filesystem;

namespace {

void check_inputs(std::span<const double> scores,
                  std::span<const std::uint8_t> labels, const char* metric) {
  if (scores.size() != labels.size()) {
    throw ContractViolation(std::string(metric) + ": scores and labels differ in length");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw ContractViolation(std::string(metric) + ": non-finite score");
    }
  }
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return idx;
}

}  // namespace

std::vector<double> expand_snippets(std::span<const double> snippet_scores) {
  if (snippet_scores.empty()) {
    throw ContractViolation("expand_snippets: need at least one snippet");
  }
  std::vector<double> frames;
  frames.reserve(snippet_scores.size() * kFramesPerSnippet);
  for (double s : snippet_scores) frames.insert(frames.end(), kFramesPerSnippet, s);
  return frames;
}

double roc_auc(std::span<const double> scores,
               std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels, "roc_auc");
  double pos = 0, neg = 0;
  for (auto l : labels) (l ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw UndefinedMetric("roc_auc: labels must contain both classes");
  }
  const auto order = descending_order(scores);
  double tp = 0, fp = 0, area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    double gtp = 0, gfp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      (labels[order[i]] ? gtp : gfp) += 1;
    }
    // Trapezoid between consecutive ROC points, in unnormalised counts.
    area += gfp * (tp + tp + gtp) / 2.0;
    tp += gtp;
    fp += gfp;
  }
  return area / (pos * neg);
}

double pr_ap(std::span<const double> scores,
             std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels, "pr_ap");
  double pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  if (pos == 0) throw UndefinedMetric("pr_ap: no positive labels");
  const auto order = descending_order(scores);
  double tp = 0, seen = 0, ap = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    double gtp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      gtp += labels[order[i]] ? 1 : 0;
      seen += 1;
    }
    tp += gtp;
    if (gtp > 0) ap += (gtp / pos) * (tp / seen);
  }
  return ap;
}

double false_alarm_rate(std::span<const double> normal_scores,
                        double threshold) {
  if (normal_scores.empty()) {
    throw ContractViolation("false_alarm_rate: no normal frames");
  }
  const auto alarms = std::count_if(normal_scores.begin(), normal_scores.end(),
                                    [&](double s) { return s >= threshold; });
  return static_cast<double>(alarms) / static_cast<double>(normal_scores.size());
}

EvalReport evaluate(std::span<const ScoreTrace> traces,
                    const std::map<std::string, VideoTruth>& truth,
                    Subset subset, double threshold) {
  std::map<std::string, const ScoreTrace*> by_id;
  for (const auto& t : traces) {
    if (!by_id.emplace(t.video_id, &t).second) {
      throw InputFault("duplicate score trace for video '" + t.video_id + "'");
    }
  }
  for (const auto& [id, _] : by_id) {
    if (!truth.count(id)) {
      throw InputFault("score trace '" + id + "' has no ground truth entry");
    }
  }
  EvalReport report;
  std::vector<double> all_s, sub_s, normal_s;
  std::vector<std::uint8_t> all_y, sub_y;
  for (const auto& [id, gt] : truth) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw InputFault("no score trace for video '" + id + "'");
    }
    const auto& scores = it->second->frame_scores;
    std::size_t n = scores.size();
    if (gt.frame_gt.size() != n) {
      n = std::min(n, gt.frame_gt.size());
      report.warnings.push_back("video '" + id + "': trace has " +
                                std::to_string(scores.size()) +
                                " frames, ground truth " +
                                std::to_string(gt.frame_gt.size()) +
                                "; truncated to " + std::to_string(n));
    }
    all_s.insert(all_s.end(), scores.begin(), scores.begin() + static_cast<long>(n));
    all_y.insert(all_y.end(), gt.frame_gt.begin(),
                 gt.frame_gt.begin() + static_cast<long>(n));
    if (gt.label == 1) {
      sub_s.insert(sub_s.end(), scores.begin(), scores.begin() + static_cast<long>(n));
      sub_y.insert(sub_y.end(), gt.frame_gt.begin(),
                   gt.frame_gt.begin() + static_cast<long>(n));
    } else {
      normal_s.insert(normal_s.end(), scores.begin(),
                      scores.begin() + static_cast<long>(n));
    }
  }
  if (all_s.empty()) throw InputFault("evaluate: no frames to score");
  report.auc = roc_auc(all_s, all_y);
  report.ap = pr_ap(all_s, all_y);
  if (!normal_s.empty()) report.far = false_alarm_rate(normal_s, threshold);
  if (subset == Subset::kAbnormalOnly) {
    if (sub_s.empty()) throw InputFault("evaluate: no abnormal videos for subset metrics");
    report.auc_sub = roc_auc(sub_s, sub_y);
    report.ap_sub = pr_ap(sub_s, sub_y);
  }
  return report;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  auto line = [&](const char* key, const std::optional<double>& v) {
    if (!v) return;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.6f\n", key, *v);
    out += buf;
  };
  line("auc", r.auc);
  line("ap", r.ap);
  line("far", r.far);
  line("auc_sub", r.auc_sub);
  line("ap_sub", r.ap_sub);
  return out;
}

void write_score_trace(const ScoreTrace& trace, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputFault("cannot write score trace " + path.string());
  char buf[64];
  for (std::size_t i = 0; i < trace.frame_scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%zu,%.17g\n", i, trace.frame_scores[i]);
    out << trace.video_id << buf;
  }
  if (!out) throw InputFault("short write to " + path.string());
}

std::vector<ScoreTrace> read_score_traces(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputFault("cannot open score trace " + path.string());
  std::vector<ScoreTrace> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos || c2 == 0
                        ? std::string::npos
                        : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos) {
      throw InputFault(where + ": expected video_id,frame_index,score");
    }
    const std::string id = line.substr(0, c1);
    std::size_t frame = 0;
    double score = 0;
    try {
      std::size_t used = 0;
      const std::string fs_ = line.substr(c1 + 1, c2 - c1 - 1);
      frame = std::stoull(fs_, &used);
      if (used != fs_.size()) throw std::invalid_argument("frame");
      const std::string ss = line.substr(c2 + 1);
      score = std::stod(ss, &used);
      if (used != ss.size()) throw std::invalid_argument("score");
    } catch (const std::exception&) {
      throw InputFault(where + ": malformed frame index or score");
    }
    if (!std::isfinite(score)) throw InputFault(where + ": non-finite score");
    if (out.empty() || out.back().video_id != id) {
      for (const auto& t : out) {
        if (t.video_id == id) {
          throw InputFault(where + ": video '" + id + "' appears twice");
        }
      }
      out.push_back({id, {}});
    }
    if (frame != out.back().frame_scores.size()) {
      throw InputFault(where + ": frame indices must be consecutive from 0");
    }
    out.back().frame_scores.push_back(score);
  }
  return out;
}

std::vector<ScoreTrace> read_score_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputFault("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ScoreTrace> out;
  for (const auto& f : files) {
    auto part = read_score_traces(f);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace urdmu
