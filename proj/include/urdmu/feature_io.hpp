#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urdmu/rng.hpp"
#include "urdmu/tensor.hpp"

namespace urdmu {

inline constexpr std::size_t kFramesPerSnippet = 16;

// One video's snippet features (T x F, row-major) plus labels.
struct VideoFeatureSequence {
  std::string id;
  std::size_t snippets = 0;  // T
  std::size_t dim = 0;       // F
  std::vector<float> features;
  std::uint8_t label = 0;  // 0 normal, 1 abnormal
  std::optional<std::vector<std::uint8_t>> frame_gt;  // 16 * T entries

  float at(std::size_t t, std::size_t f) const { return features[t * dim + f]; }
};

// Throws ContractViolation when a type invariant does not hold.
void validate(const VideoFeatureSequence& seq);

// FVB: "FVB1", u32 T, u32 F, u8 label, u32 gt_len, gt bytes, T*F f32 (LE).
std::vector<std::uint8_t> encode_fvb(const VideoFeatureSequence& seq);
VideoFeatureSequence decode_fvb(std::span<const std::uint8_t> bytes,
                                std::string id = {});
void write_fvb(const VideoFeatureSequence& seq,
               const std::filesystem::path& path);
// The sequence id is the file stem. Throws FormatFault with the byte offset.
VideoFeatureSequence read_fvb(const std::filesystem::path& path);

// Column-wise concatenation of two feature streams over the same snippets
// (e.g. RGB + audio). Labels and ground truth come from `a`.
VideoFeatureSequence concat_features(const VideoFeatureSequence& a,
                                     const VideoFeatureSequence& b);

struct ManifestEntry {
  std::filesystem::path path;  // may name several FVBs joined by '+'
  std::uint8_t label = 0;
  std::optional<std::filesystem::path> gt_path;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

// Lines of `path<TAB>label[<TAB>gt_path]`; relative paths resolve against
// the manifest's directory. Missing files raise InputFault.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest,
                    const std::filesystem::path& path);

// Loads an entry's features, fusing '+'-joined paths by column
// concatenation, and attaches ground truth from gt_path when present.
VideoFeatureSequence load_entry(const ManifestEntry& entry);

// Frame-level ground truth: whitespace- or comma-separated 0/1 values.
std::vector<std::uint8_t> read_frame_gt(const std::filesystem::path& path);

// Maps T snippets onto n rows: segment means when T >= n, nearest-index
// rows (floor(i*T/n)) when T < n.
Tensor resample_to_n(const VideoFeatureSequence& seq, std::size_t n);

// Inverse of resample_to_n for per-row scores: each of the T original
// snippets receives the mean score of the rows it contributed to.
std::vector<double> scores_to_snippets(std::span<const double> row_scores,
                                       std::size_t snippets);

struct Batch {
  std::vector<Tensor> normal;
  std::vector<Tensor> abnormal;
  std::vector<std::size_t> normal_index;    // draws from the normal pool
  std::vector<std::size_t> abnormal_index;  // draws from the abnormal pool
};

// b/2 draws with replacement from each pool, each resampled to n rows.
Batch sample_batch(std::span<const VideoFeatureSequence> normal_pool,
                   std::span<const VideoFeatureSequence> abnormal_pool,
                   std::size_t batch_size, std::size_t n, Rng& rng);

struct SynthConfig {
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 10;
  std::size_t min_snippets = 64;
  std::size_t max_snippets = 256;
  std::size_t dim = 32;
  double anomaly_ratio = 0.2;
  double separation = 6.0;
  double noise_sd = 1.0;
  double normal_radius = 1.0;
  std::uint64_t seed = 7;
};

struct SynthDataset {
  std::vector<VideoFeatureSequence> train;  // no frame_gt
  std::vector<VideoFeatureSequence> test;   // frame_gt on every video
};

// Normal snippets come from an isotropic Gaussian around a centre of norm
// `normal_radius`; abnormal videos carry ceil(anomaly_ratio * T) contiguous
// snippets from a cluster whose centre norm is larger by `separation`.
SynthDataset synth_generate(const SynthConfig& cfg);

struct SynthFiles {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  std::size_t files_written = 0;
};

// Writes every video as <dir>/<id>.fvb plus train.tsv / test.tsv manifests.
SynthFiles write_synth(const SynthDataset& data,
                       const std::filesystem::path& dir);

}  // namespace urdmu
