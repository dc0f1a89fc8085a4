#include "urdmu/feature_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "urdmu/errors.hpp"

namespace urdmu {

namespace fs = std::filesystem;

namespace {

constexpr char kFvbMagic[4] = {'F', 'V', 'B', '1'};
constexpr std::size_t kFvbHeader = 4 + 4 + 4 + 1 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatFault(pos_, std::string("truncated FVB: expected ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    return std::bit_cast<float>(u32(what));
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFault("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

void validate(const VideoFeatureSequence& seq) {
  if (seq.snippets < 1 || seq.dim < 1) {
    throw ContractViolation("feature sequence needs T >= 1 and F >= 1");
  }
  if (seq.features.size() != seq.snippets * seq.dim) {
    throw ContractViolation("feature buffer does not match T x F");
  }
  if (seq.label > 1) throw ContractViolation("video label must be 0 or 1");
  for (float v : seq.features) {
    if (!std::isfinite(v)) throw ContractViolation("non-finite feature value");
  }
  if (seq.frame_gt) {
    if (seq.frame_gt->size() != kFramesPerSnippet * seq.snippets) {
      throw ContractViolation("frame_gt length must equal 16 * T");
    }
    for (auto g : *seq.frame_gt) {
      if (g > 1) throw ContractViolation("frame_gt entries must be 0 or 1");
    }
  }
}

std::vector<std::uint8_t> encode_fvb(const VideoFeatureSequence& seq) {
  validate(seq);
  std::vector<std::uint8_t> out;
  const std::size_t gt_len = seq.frame_gt ? seq.frame_gt->size() : 0;
  out.reserve(kFvbHeader + gt_len + 4 * seq.features.size());
  out.insert(out.end(), std::begin(kFvbMagic), std::end(kFvbMagic));
  put_u32(out, static_cast<std::uint32_t>(seq.snippets));
  put_u32(out, static_cast<std::uint32_t>(seq.dim));
  out.push_back(seq.label);
  put_u32(out, static_cast<std::uint32_t>(gt_len));
  if (seq.frame_gt) out.insert(out.end(), seq.frame_gt->begin(), seq.frame_gt->end());
  for (float v : seq.features) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

VideoFeatureSequence decode_fvb(std::span<const std::uint8_t> bytes,
                                std::string id) {
  ByteReader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kFvbMagic, 4) != 0) {
    throw FormatFault(0, "bad FVB magic");
  }
  VideoFeatureSequence seq;
  seq.id = std::move(id);
  const std::size_t t_off = r.offset();
  seq.snippets = r.u32("snippet count");
  if (seq.snippets == 0) throw FormatFault(t_off, "FVB snippet count is zero");
  const std::size_t f_off = r.offset();
  seq.dim = r.u32("feature dim");
  if (seq.dim == 0) throw FormatFault(f_off, "FVB feature dim is zero");
  const std::size_t label_off = r.offset();
  seq.label = r.u8("label");
  if (seq.label > 1) throw FormatFault(label_off, "FVB label must be 0 or 1");
  const std::size_t gt_off = r.offset();
  const std::uint32_t gt_len = r.u32("gt length");
  if (gt_len != 0) {
    if (gt_len != kFramesPerSnippet * seq.snippets) {
      throw FormatFault(gt_off, "FVB gt length must be 0 or 16 * T");
    }
    const std::size_t start = r.offset();
    auto gt = r.take(gt_len, "frame ground truth");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] > 1) throw FormatFault(start + i, "FVB gt byte is not 0/1");
    }
    seq.frame_gt.emplace(gt.begin(), gt.end());
  }
  const std::size_t count = seq.snippets * seq.dim;
  r.need(4 * count, "feature payload");
  seq.features.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = r.offset();
    const float v = r.f32("feature");
    if (!std::isfinite(v)) throw FormatFault(off, "non-finite FVB feature");
    seq.features[i] = v;
  }
  if (r.remaining() != 0) {
    throw FormatFault(r.offset(), "trailing bytes after FVB payload");
  }
  return seq;
}

void write_fvb(const VideoFeatureSequence& seq, const fs::path& path) {
  const auto bytes = encode_fvb(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputFault("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputFault("short write to " + path.string());
}

VideoFeatureSequence read_fvb(const fs::path& path) {
  const auto bytes = read_all(path);
  return decode_fvb(bytes, path.stem().string());
}

VideoFeatureSequence concat_features(const VideoFeatureSequence& a,
                                     const VideoFeatureSequence& b) {
  if (a.snippets != b.snippets) {
    throw InputFault("cannot fuse " + a.id + " and " + b.id +
                     ": snippet counts differ");
  }
  VideoFeatureSequence out;
  out.id = a.id;
  out.snippets = a.snippets;
  out.dim = a.dim + b.dim;
  out.label = a.label;
  out.frame_gt = a.frame_gt ? a.frame_gt : b.frame_gt;
  out.features.reserve(out.snippets * out.dim);
  for (std::size_t t = 0; t < a.snippets; ++t) {
    auto ra = a.features.begin() + static_cast<long>(t * a.dim);
    auto rb = b.features.begin() + static_cast<long>(t * b.dim);
    out.features.insert(out.features.end(), ra, ra + static_cast<long>(a.dim));
    out.features.insert(out.features.end(), rb, rb + static_cast<long>(b.dim));
  }
  return out;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputFault("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() < 2 || fields.size() > 3) {
      throw InputFault(where + ": expected path<TAB>label[<TAB>gt_path]");
    }
    ManifestEntry e;
    std::string joined;
    for (const auto& part : split(fields[0], '+')) {
      const fs::path p = resolve(part);
      if (!fs::exists(p)) throw InputFault(where + ": missing file " + p.string());
      if (!joined.empty()) joined += '+';
      joined += p.string();
    }
    e.path = joined;
    if (fields[1] == "0") {
      e.label = 0;
    } else if (fields[1] == "1") {
      e.label = 1;
    } else {
      throw InputFault(where + ": label must be 0 or 1");
    }
    if (fields.size() == 3 && !fields[2].empty()) {
      const fs::path g = resolve(fields[2]);
      if (!fs::exists(g)) throw InputFault(where + ": missing gt " + g.string());
      e.gt_path = g;
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputFault("cannot write manifest " + path.string());
  for (const auto& e : manifest.entries) {
    out << e.path.string() << '\t' << int{e.label};
    if (e.gt_path) out << '\t' << e.gt_path->string();
    out << '\n';
  }
}

VideoFeatureSequence load_entry(const ManifestEntry& entry) {
  const auto parts = split(entry.path.string(), '+');
  VideoFeatureSequence seq = read_fvb(parts.at(0));
  for (std::size_t i = 1; i < parts.size(); ++i) {
    seq = concat_features(seq, read_fvb(parts[i]));
  }
  if (seq.label != entry.label) {
    throw InputFault(entry.path.string() + ": manifest label disagrees with file");
  }
  if (entry.gt_path) {
    auto gt = read_frame_gt(*entry.gt_path);
    if (gt.size() != kFramesPerSnippet * seq.snippets) {
      throw InputFault(entry.gt_path->string() + ": expected " +
                       std::to_string(kFramesPerSnippet * seq.snippets) +
                       " frame labels");
    }
    seq.frame_gt = std::move(gt);
  }
  return seq;
}

std::vector<std::uint8_t> read_frame_gt(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputFault("cannot open gt " + path.string());
  std::vector<std::uint8_t> gt;
  std::string tok;
  char c;
  auto flush = [&] {
    if (tok.empty()) return;
    if (tok != "0" && tok != "1") {
      throw InputFault(path.string() + ": gt values must be 0 or 1");
    }
    gt.push_back(tok == "1" ? 1 : 0);
    tok.clear();
  };
  while (in.get(c)) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      tok += c;
    }
  }
  flush();
  return gt;
}

Tensor resample_to_n(const VideoFeatureSequence& seq, std::size_t n) {
  if (n == 0) throw ContractViolation("resample_to_n: n must be >= 1");
  validate(seq);
  const std::size_t T = seq.snippets, F = seq.dim;
  std::vector<double> out(n * F, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * F;
    if (T >= n) {
      const std::size_t lo = i * T / n, hi = (i + 1) * T / n;
      for (std::size_t t = lo; t < hi; ++t)
        for (std::size_t f = 0; f < F; ++f) row[f] += seq.at(t, f);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t f = 0; f < F; ++f) row[f] *= inv;
    } else {
      const std::size_t t = i * T / n;
      for (std::size_t f = 0; f < F; ++f) row[f] = seq.at(t, f);
    }
  }
  return Tensor::from({n, F}, std::move(out));
}

std::vector<double> scores_to_snippets(std::span<const double> row_scores,
                                       std::size_t snippets) {
  const std::size_t n = row_scores.size();
  if (n == 0 || snippets == 0) {
    throw ContractViolation("scores_to_snippets: empty input");
  }
  std::vector<double> sum(snippets, 0.0);
  std::vector<std::size_t> count(snippets, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (snippets >= n) {
      for (std::size_t t = i * snippets / n; t < (i + 1) * snippets / n; ++t) {
        sum[t] += row_scores[i];
        ++count[t];
      }
    } else {
      const std::size_t t = i * snippets / n;
      sum[t] += row_scores[i];
      ++count[t];
    }
  }
  for (std::size_t t = 0; t < snippets; ++t) sum[t] /= static_cast<double>(count[t]);
  return sum;
}

Batch sample_batch(std::span<const VideoFeatureSequence> normal_pool,
                   std::span<const VideoFeatureSequence> abnormal_pool,
                   std::size_t batch_size, std::size_t n, Rng& rng) {
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw ContractViolation("sample_batch: batch size must be even and > 0");
  }
  if (normal_pool.empty() || abnormal_pool.empty()) {
    throw ContractViolation("sample_batch: both pools must be nonempty");
  }
  Batch b;
  const std::size_t pairs = batch_size / 2;
  for (std::size_t i = 0; i < pairs; ++i) {
    b.normal_index.push_back(rng.below(normal_pool.size()));
    b.abnormal_index.push_back(rng.below(abnormal_pool.size()));
  }
  for (std::size_t i = 0; i < pairs; ++i) {
    b.normal.push_back(resample_to_n(normal_pool[b.normal_index[i]], n));
    b.abnormal.push_back(resample_to_n(abnormal_pool[b.abnormal_index[i]], n));
  }
  return b;
}

namespace {

std::vector<double> random_direction(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

VideoFeatureSequence synth_video(const SynthConfig& cfg, Rng& rng,
                                 const std::vector<double>& normal_centre,
                                 const std::vector<double>& anomaly_centre,
                                 std::uint8_t label, bool with_gt,
                                 std::string id) {
  VideoFeatureSequence v;
  v.id = std::move(id);
  v.label = label;
  v.dim = cfg.dim;
  v.snippets = cfg.min_snippets +
               rng.below(cfg.max_snippets - cfg.min_snippets + 1);
  std::size_t start = v.snippets, len = 0;
  if (label == 1) {
    len = static_cast<std::size_t>(
        std::ceil(cfg.anomaly_ratio * static_cast<double>(v.snippets)));
    len = std::clamp<std::size_t>(len, 1, v.snippets);
    start = rng.below(v.snippets - len + 1);
  }
  v.features.resize(v.snippets * v.dim);
  for (std::size_t t = 0; t < v.snippets; ++t) {
    const bool anomalous = t >= start && t < start + len;
    const auto& centre = anomalous ? anomaly_centre : normal_centre;
    for (std::size_t f = 0; f < v.dim; ++f) {
      v.features[t * v.dim + f] =
          static_cast<float>(centre[f] + cfg.noise_sd * rng.normal());
    }
  }
  if (with_gt) {
    std::vector<std::uint8_t> gt(kFramesPerSnippet * v.snippets, 0);
    for (std::size_t t = start; t < start + len; ++t)
      std::fill_n(gt.begin() + static_cast<long>(t * kFramesPerSnippet),
                  kFramesPerSnippet, std::uint8_t{1});
    v.frame_gt = std::move(gt);
  }
  return v;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg) {
  if (!(cfg.separation > 0)) {
    throw ContractViolation("synth: separation must be > 0");
  }
  if (!(cfg.anomaly_ratio > 0 && cfg.anomaly_ratio < 1)) {
    throw ContractViolation("synth: anomaly_ratio must lie in (0, 1)");
  }
  if (cfg.dim == 0 || cfg.min_snippets == 0 ||
      cfg.max_snippets < cfg.min_snippets) {
    throw ContractViolation("synth: need dim >= 1 and 1 <= min <= max snippets");
  }
  if (cfg.train_per_class == 0) {
    throw ContractViolation("synth: need at least one training video per class");
  }
  if (!(cfg.noise_sd >= 0) || !(cfg.normal_radius >= 0)) {
    throw ContractViolation("synth: noise_sd and normal_radius must be >= 0");
  }
  Rng rng(cfg.seed);
  auto normal_centre = random_direction(rng, cfg.dim);
  auto anomaly_centre = random_direction(rng, cfg.dim);
  for (double& x : normal_centre) x *= cfg.normal_radius;
  for (double& x : anomaly_centre) x *= cfg.normal_radius + cfg.separation;

  SynthDataset data;
  for (std::size_t i = 0; i < cfg.train_per_class; ++i)
    data.train.push_back(synth_video(cfg, rng, normal_centre, anomaly_centre, 0,
                                     false, numbered("train_n", i)));
  for (std::size_t i = 0; i < cfg.train_per_class; ++i)
    data.train.push_back(synth_video(cfg, rng, normal_centre, anomaly_centre, 1,
                                     false, numbered("train_a", i)));
  for (std::size_t i = 0; i < cfg.test_per_class; ++i)
    data.test.push_back(synth_video(cfg, rng, normal_centre, anomaly_centre, 0,
                                    true, numbered("test_n", i)));
  for (std::size_t i = 0; i < cfg.test_per_class; ++i)
    data.test.push_back(synth_video(cfg, rng, normal_centre, anomaly_centre, 1,
                                    true, numbered("test_a", i)));
  return data;
}

SynthFiles write_synth(const SynthDataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw InputFault("cannot create output directory " + dir.string());
  }
  SynthFiles files;
  auto emit = [&](const std::vector<VideoFeatureSequence>& videos,
                  const char* name) {
    Manifest m;
    for (const auto& v : videos) {
      const std::string file = v.id + ".fvb";
      write_fvb(v, dir / file);
      ++files.files_written;
      m.entries.push_back({file, v.label, std::nullopt});
    }
    const fs::path mpath = dir / name;
    write_manifest(m, mpath);
    return mpath;
  };
  files.train_manifest = emit(data.train, "train.tsv");
  files.test_manifest = emit(data.test, "test.tsv");
  return files;
}

}  // namespace urdmu
