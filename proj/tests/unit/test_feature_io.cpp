#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "support.hpp"
#include "urdmu/errors.hpp"
#include "urdmu/feature_io.hpp"
#include "urdmu/metrics.hpp"

using namespace urdmu;
using urdmu::testing::TempDir;

namespace {

VideoFeatureSequence make_seq(std::size_t t, std::size_t f, std::uint64_t seed,
                              std::uint8_t label = 0) {
  Rng rng(seed);
  VideoFeatureSequence s;
  s.id = "v" + std::to_string(seed);
  s.snippets = t;
  s.dim = f;
  s.label = label;
  s.features.resize(t * f);
  for (float& x : s.features) x = static_cast<float>(rng.normal());
  return s;
}

VideoFeatureSequence column(std::vector<float> v) {
  VideoFeatureSequence s;
  s.snippets = v.size();
  s.dim = 1;
  s.features = std::move(v);
  return s;
}

}  // namespace

TEST(Fvb, RoundTripIsBitExact) {
  TempDir dir("fvb");
  VideoFeatureSequence s = make_seq(5, 7, 1, 1);
  s.frame_gt = std::vector<std::uint8_t>(80, 0);
  (*s.frame_gt)[40] = 1;
  write_fvb(s, dir / "clip.fvb");
  const auto back = read_fvb(dir / "clip.fvb");
  EXPECT_EQ(back.id, "clip");
  EXPECT_EQ(back.features, s.features);
  EXPECT_EQ(back.frame_gt, s.frame_gt);
  EXPECT_EQ(encode_fvb(back), encode_fvb(s));
  std::ifstream in(dir / "clip.fvb", std::ios::binary);
  const std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(file, encode_fvb(s));
}

TEST(Fvb, OneByOneFileSize) {
  VideoFeatureSequence s = column({3.5f});
  const auto bytes = encode_fvb(s);
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 1 + 4 + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FVB1");
  EXPECT_EQ(decode_fvb(bytes).features[0], 3.5f);
}

TEST(Fvb, BadMagicIsFormatFault) {
  auto bytes = encode_fvb(make_seq(2, 2, 2));
  std::copy_n("XXXX", 4, bytes.begin());
  try {
    decode_fvb(bytes);
    FAIL();
  } catch (const FormatFault& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Fvb, TruncatedPayloadReportsOffset) {
  auto bytes = encode_fvb(make_seq(3, 4, 3));
  bytes.resize(bytes.size() - 3);
  try {
    decode_fvb(bytes);
    FAIL();
  } catch (const FormatFault& e) {
    EXPECT_GE(e.offset(), 17u);
  }
}

TEST(Fvb, NonFiniteValueIsFormatFault) {
  VideoFeatureSequence s = make_seq(2, 2, 4);
  auto bytes = encode_fvb(s);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
  EXPECT_THROW(decode_fvb(bytes), FormatFault);
}

TEST(Fvb, MissingFileIsInputFault) {
  EXPECT_THROW(read_fvb("/nonexistent/x.fvb"), InputFault);
}

TEST(Resample, IdentityWhenLengthsMatch) {
  const auto s = make_seq(6, 3, 5);
  const Tensor r = resample_to_n(s, 6);
  for (std::size_t i = 0; i < 18; ++i) EXPECT_EQ(r.data()[i], s.features[i]);
}

TEST(Resample, ExactHalves) {
  const Tensor r = resample_to_n(column({1, 2, 3, 5}), 2);
  EXPECT_EQ(r(0, 0), 1.5);
  EXPECT_EQ(r(1, 0), 4.0);
}

TEST(Resample, NearestIndexWhenUpsampling) {
  const Tensor r = resample_to_n(column({10, 20, 30}), 5);
  // floor(i * 3 / 5) for i = 0..4
  const double want[] = {10, 10, 20, 20, 30};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r(i, 0), want[i]);
}

TEST(Resample, DuplicatingEveryRowPreservesSegmentMeans) {
  // T = 2n: each segment gets [r_i, r_i] and its mean is r_i.
  const auto s = make_seq(5, 3, 6);
  VideoFeatureSequence doubled = s;
  doubled.snippets = 10;
  doubled.features.clear();
  for (std::size_t t = 0; t < 5; ++t) {
    for (int rep = 0; rep < 2; ++rep)
      doubled.features.insert(doubled.features.end(), s.features.begin() + t * 3,
                              s.features.begin() + t * 3 + 3);
  }
  EXPECT_EQ(urdmu::testing::values(resample_to_n(doubled, 5)),
            urdmu::testing::values(resample_to_n(s, 5)));
  // The other direction: a non-multiple length changes the partition.
  VideoFeatureSequence extended = s;
  extended.snippets = 6;
  extended.features.insert(extended.features.end(), s.features.end() - 3, s.features.end());
  EXPECT_NE(urdmu::testing::values(resample_to_n(extended, 4)),
            urdmu::testing::values(resample_to_n(s, 4)));
}

TEST(Resample, ScoresMapBackToSnippets) {
  // T=4, n=2: every snippet inherits its segment's score.
  const std::vector<double> rows{0.25, 0.75};
  EXPECT_EQ(scores_to_snippets(rows, 4), (std::vector<double>{0.25, 0.25, 0.75, 0.75}));
  // T=3, n=5: snippet 0 feeds rows 0 and 1, snippet 2 feeds row 4.
  const std::vector<double> up{0.1, 0.3, 0.5, 0.7, 0.9};
  const auto back = scores_to_snippets(up, 3);
  EXPECT_DOUBLE_EQ(back[0], 0.2);
  EXPECT_DOUBLE_EQ(back[1], 0.6);
  EXPECT_DOUBLE_EQ(back[2], 0.9);
}

TEST(Batch, TwoGivesOnePair) {
  const std::vector<VideoFeatureSequence> n{make_seq(10, 4, 7)}, a{make_seq(12, 4, 8, 1)};
  Rng rng(1);
  const Batch b = sample_batch(n, a, 2, 16, rng);
  ASSERT_EQ(b.normal.size(), 1u);
  ASSERT_EQ(b.abnormal.size(), 1u);
  EXPECT_EQ(b.normal[0].rows(), 16u);
  EXPECT_EQ(b.abnormal[0].rows(), 16u);
}

TEST(Batch, SameSeedSameBatch) {
  std::vector<VideoFeatureSequence> n, a;
  for (int i = 0; i < 5; ++i) {
    n.push_back(make_seq(8 + i, 3, 10 + i));
    a.push_back(make_seq(9 + i, 3, 20 + i, 1));
  }
  Rng r1(42), r2(42);
  const Batch b1 = sample_batch(n, a, 8, 6, r1);
  const Batch b2 = sample_batch(n, a, 8, 6, r2);
  EXPECT_EQ(b1.normal_index, b2.normal_index);
  EXPECT_EQ(b1.abnormal_index, b2.abnormal_index);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(urdmu::testing::values(b1.normal[i]), urdmu::testing::values(b2.normal[i]));
  }
}

TEST(Batch, OddSizeIsContractViolation) {
  const std::vector<VideoFeatureSequence> n{make_seq(4, 2, 1)}, a{make_seq(4, 2, 2, 1)};
  Rng rng(0);
  EXPECT_THROW(sample_batch(n, a, 3, 4, rng), ContractViolation);
}

TEST(Batch, DrawsAreUniformOverThePool) {
  const std::vector<VideoFeatureSequence> n{make_seq(2, 1, 1), make_seq(2, 1, 2), make_seq(2, 1, 3)};
  const std::vector<VideoFeatureSequence> a{make_seq(2, 1, 4, 1)};
  Rng rng(3);
  std::map<std::size_t, int> count;
  int draws = 0;
  while (draws < 10000) {
    const Batch b = sample_batch(n, a, 200, 2, rng);
    for (auto i : b.normal_index) ++count[i];
    draws += 100;
    EXPECT_EQ(b.normal.size(), b.abnormal.size());
  }
  // Binomial(10000, 1/3): 5 sigma is about 236.
  const double mean = 10000.0 / 3, sd = std::sqrt(10000.0 * (1.0 / 3) * (2.0 / 3));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(count[i] - mean), 5 * sd);
}

TEST(Synth, AnomalyIsContiguousWithCeilRatioSnippets) {
  SynthConfig cfg;
  cfg.min_snippets = cfg.max_snippets = 50;
  const SynthDataset d = synth_generate(cfg);
  for (const auto& v : d.test) {
    ASSERT_TRUE(v.frame_gt.has_value());
    ASSERT_EQ(v.frame_gt->size(), 16u * 50);
    std::size_t first = 0, ones = 0;
    bool seen = false;
    for (std::size_t i = 0; i < v.frame_gt->size(); ++i) {
      if ((*v.frame_gt)[i]) {
        if (!seen) first = i;
        seen = true;
        ++ones;
      }
    }
    if (v.label == 0) {
      EXPECT_EQ(ones, 0u);
      continue;
    }
    EXPECT_EQ(ones, 16u * 10);
    EXPECT_EQ(first % 16, 0u);
    for (std::size_t i = first; i < first + ones; ++i) EXPECT_EQ((*v.frame_gt)[i], 1);
  }
}

TEST(Synth, ZeroSeparationRejected) {
  SynthConfig cfg;
  cfg.separation = 0;
  EXPECT_THROW(synth_generate(cfg), ContractViolation);
  cfg.separation = 6;
  cfg.anomaly_ratio = 1.0;
  EXPECT_THROW(synth_generate(cfg), ContractViolation);
}

TEST(Synth, DefaultCounts) {
  const SynthDataset d = synth_generate(SynthConfig{});
  EXPECT_EQ(d.train.size(), 40u);
  EXPECT_EQ(d.test.size(), 20u);
  for (const auto& v : d.train) {
    EXPECT_EQ(v.dim, 32u);
    EXPECT_GE(v.snippets, 64u);
    EXPECT_LE(v.snippets, 256u);
  }
}

TEST(Synth, RawFeatureNormSeparatesTheTestSplit) {
  const SynthDataset d = synth_generate(SynthConfig{});
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (const auto& v : d.test) {
    for (std::size_t t = 0; t < v.snippets; ++t) {
      double n2 = 0;
      for (std::size_t f = 0; f < v.dim; ++f) n2 += double(v.at(t, f)) * v.at(t, f);
      for (std::size_t k = 0; k < 16; ++k) {
        s.push_back(std::sqrt(n2));
        y.push_back((*v.frame_gt)[t * 16 + k]);
      }
    }
  }
  EXPECT_GT(roc_auc(s, y), 0.99);
}

TEST(Synth, WritesFilesAndManifests) {
  TempDir dir("synth");
  const SynthFiles f = write_synth(synth_generate(SynthConfig{}), dir.path());
  EXPECT_EQ(f.files_written, 60u);
  const Manifest train = read_manifest(f.train_manifest);
  const Manifest test = read_manifest(f.test_manifest);
  EXPECT_EQ(train.entries.size(), 40u);
  EXPECT_EQ(test.entries.size(), 20u);
  const auto v = load_entry(test.entries.front());
  EXPECT_TRUE(v.frame_gt.has_value());
}

TEST(Manifest, RelativePathsGroundTruthAndFusion) {
  TempDir dir("manifest");
  VideoFeatureSequence rgb = make_seq(3, 2, 1, 1);
  VideoFeatureSequence audio = make_seq(3, 1, 2, 1);
  write_fvb(rgb, dir / "rgb.fvb");
  write_fvb(audio, dir / "audio.fvb");
  {
    std::ofstream gt(dir / "gt.txt");
    for (int i = 0; i < 48; ++i) gt << (i >= 16 && i < 32 ? 1 : 0) << (i % 10 == 9 ? '\n' : ',');
    std::ofstream m(dir / "list.tsv");
    m << "rgb.fvb+audio.fvb\t1\tgt.txt\n";
  }
  const Manifest m = read_manifest(dir / "list.tsv");
  ASSERT_EQ(m.entries.size(), 1u);
  const auto v = load_entry(m.entries[0]);
  EXPECT_EQ(v.dim, 3u);
  EXPECT_EQ(v.at(1, 0), rgb.at(1, 0));
  EXPECT_EQ(v.at(1, 2), audio.at(1, 0));
  ASSERT_TRUE(v.frame_gt.has_value());
  EXPECT_EQ((*v.frame_gt)[16], 1);
  EXPECT_EQ((*v.frame_gt)[15], 0);
}

TEST(Manifest, ErrorsAreInputFaults) {
  TempDir dir("manifest_err");
  write_fvb(make_seq(2, 2, 1), dir / "a.fvb");
  {
    std::ofstream(dir / "missing.tsv") << "nope.fvb\t0\n";
    std::ofstream(dir / "label.tsv") << "a.fvb\t2\n";
    std::ofstream(dir / "mismatch.tsv") << "a.fvb\t1\n";
  }
  EXPECT_THROW(read_manifest(dir / "missing.tsv"), InputFault);
  EXPECT_THROW(read_manifest(dir / "label.tsv"), InputFault);
  EXPECT_THROW(load_entry(read_manifest(dir / "mismatch.tsv").entries[0]), InputFault);
  EXPECT_THROW(read_manifest(dir / "absent.tsv"), InputFault);
}

TEST(Manifest, WriteReadRoundTrip) {
  TempDir dir("manifest_rt");
  write_fvb(make_seq(2, 2, 1), dir / "a.fvb");
  write_fvb(make_seq(2, 2, 2, 1), dir / "b.fvb");
  Manifest m;
  m.entries.push_back({"a.fvb", 0, std::nullopt});
  m.entries.push_back({"b.fvb", 1, std::nullopt});
  write_manifest(m, dir / "m.tsv");
  const Manifest back = read_manifest(dir / "m.tsv");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].label, 1);
  EXPECT_EQ(read_fvb(back.entries[1].path).features, make_seq(2, 2, 2, 1).features);
}
