#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "urdmu/dmu.hpp"
#include "urdmu/errors.hpp"
#include "urdmu/optim.hpp"

using namespace urdmu;
using urdmu::testing::probe;
using urdmu::testing::random_tensor;
using urdmu::testing::values;

namespace {

// Stable sort by descending value: equal values keep index order.
std::vector<std::size_t> sort_oracle(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] > v[b]; });
  idx.resize(k);
  return idx;
}

double clamp_log(double p) { return std::log(std::clamp(p, 1e-7, 1 - 1e-7)); }

double bce_oracle(const std::vector<double>& p, double y) {
  double s = 0;
  for (double x : p) s += -(y * clamp_log(x) + (1 - y) * clamp_log(1 - x));
  return s / p.size();
}

double topk_mean_oracle(const std::vector<double>& v, std::size_t k) {
  double s = 0;
  for (auto i : sort_oracle(v, k)) s += v[i];
  return s / k;
}

std::vector<double> row_mean_oracle(const Tensor& x, const std::vector<std::size_t>& rows) {
  std::vector<double> m(x.cols(), 0.0);
  for (auto r : rows)
    for (std::size_t j = 0; j < x.cols(); ++j) m[j] += x(r, j) / rows.size();
  return m;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Tensor column(std::vector<double> v, bool grad = false) {
  const std::size_t n = v.size();
  return Tensor::from({n, 1}, std::move(v), grad);
}

}  // namespace

TEST(TopK, CountRule) {
  EXPECT_EQ(topk_count(60), 4u);
  EXPECT_EQ(topk_count(200), 13u);
  EXPECT_EQ(topk_count(15), 1u);
  EXPECT_EQ(topk_count(16), 2u);
}

TEST(TopK, Examples) {
  const TopK all = topk_rows(std::vector<double>{4, 1, 2}, 3);
  EXPECT_DOUBLE_EQ(all.mean, 7.0 / 3);
  const TopK tie = topk_rows(std::vector<double>{3, 1, 3, 0}, 2);
  EXPECT_EQ(tie.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(tie.mean, 3.0);
}

TEST(TopK, OutOfRangeK) {
  const std::vector<double> v{1, 2};
  EXPECT_THROW(topk_rows(v, 3), ContractViolation);
  EXPECT_THROW(topk_rows(v, 0), ContractViolation);
}

TEST(TopK, MatchesSortOracleIncludingTies) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> v(n);
    // Few distinct values force plenty of ties.
    for (double& x : v) x = trial % 2 ? double(rng.below(4)) : rng.uniform();
    const std::size_t k = 1 + rng.below(n);
    const TopK got = topk_rows(v, k);
    const auto want = sort_oracle(v, k);
    ASSERT_EQ(got.indices, want);
    EXPECT_NEAR(got.mean, topk_mean_oracle(v, k), 1e-12);
  }
  std::vector<double> big(200);
  for (double& x : big) x = rng.normal();
  EXPECT_EQ(topk_rows(big, 13).indices, sort_oracle(big, 13));
}

TEST(MemoryQuery, OrthogonalInputGivesHalfScores) {
  // Prototypes live in the first two coordinates, the query in the last two.
  MemoryBank bank{Tensor::from({3, 4}, {1, 2, 0, 0, -1, 3, 0, 0, 2, 2, 0, 0}), BankRole::kNormal};
  const Tensor x = Tensor::from({2, 4}, {0, 0, 1, -1, 0, 0, 5, 2});
  const QueryResult q = memory_query(x, bank);
  for (double s : q.scores.data()) EXPECT_EQ(s, 0.5);
  const double col[] = {1, 3.5, 0, 0};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(q.augmented(i, j), col[j]);
}

TEST(MemoryQuery, TopKMeanMatchesOracle) {
  Rng rng(2);
  MemoryBank bank = init_bank(6, 8, BankRole::kAbnormal, rng);
  const Tensor x = random_tensor({5, 8}, rng, -2, 2, false);
  const QueryResult q = memory_query(x, bank);
  ASSERT_EQ(q.topk_index.front().size(), 1u);
  for (std::size_t i = 0; i < 5; ++i) {
    double m = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      double dot = 0;
      for (std::size_t d = 0; d < 8; ++d) dot += x(i, d) * bank.prototypes(j, d);
      const double s = 1 / (1 + std::exp(-dot / std::sqrt(8.0)));
      EXPECT_NEAR(q.scores(i, j), s, 1e-14);
      m = std::max(m, s);
    }
    EXPECT_NEAR(q.topk_mean(i, 0), m, 1e-14);
  }
}

TEST(MemoryQuery, SixtySlotsUseFourPerRow) {
  Rng rng(3);
  const MemoryBank bank = init_bank(60, 16, BankRole::kNormal, rng);
  const QueryResult q = memory_query(random_tensor({7, 16}, rng, -1, 1, false), bank);
  for (const auto& row : q.topk_index) EXPECT_EQ(row.size(), 4u);
  for (std::size_t i = 0; i < 7; ++i) {
    std::vector<double> r(60);
    for (std::size_t j = 0; j < 60; ++j) r[j] = q.scores(i, j);
    EXPECT_EQ(q.topk_index[i], sort_oracle(r, 4));
  }
}

TEST(MemoryQuery, AugmentedIsScoresTimesPrototypes) {
  Rng rng(4);
  const MemoryBank bank = init_bank(9, 12, BankRole::kNormal, rng);
  const QueryResult q = memory_query(random_tensor({6, 12}, rng, -3, 3, false), bank);
  double bound = 0;
  for (std::size_t m = 0; m < 9; ++m) {
    double n2 = 0;
    for (std::size_t d = 0; d < 12; ++d) n2 += bank.prototypes(m, d) * bank.prototypes(m, d);
    bound += std::sqrt(n2);
  }
  for (std::size_t i = 0; i < 6; ++i) {
    double n2 = 0;
    for (std::size_t d = 0; d < 12; ++d) {
      double want = 0;
      for (std::size_t m = 0; m < 9; ++m) want += q.scores(i, m) * bank.prototypes(m, d);
      EXPECT_NEAR(q.augmented(i, d), want, 1e-14);
      n2 += want * want;
    }
    EXPECT_LE(std::sqrt(n2), bound);
  }
  for (double s : q.scores.data()) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(MemoryQuery, DimensionMismatch) {
  Rng rng(5);
  const MemoryBank bank = init_bank(4, 8, BankRole::kNormal, rng);
  EXPECT_THROW(memory_query(Tensor::zeros({2, 6}), bank), ContractViolation);
}

TEST(MemoryQuery, InitScaleIsOneOverSqrtD) {
  Rng rng(6);
  const MemoryBank bank = init_bank(200, 64, BankRole::kNormal, rng);
  double s2 = 0;
  for (double v : bank.prototypes.data()) s2 += v * v;
  const double var = s2 / bank.prototypes.size();
  EXPECT_NEAR(var, 1.0 / 64, 0.05 / 64);
}

TEST(DualMemoryLoss, PerfectPredictionsAreNearZero) {
  const Tensor one = column(std::vector<double>(20, 1.0));
  const Tensor zero = column(std::vector<double>(20, 0.0));
  const double l = dual_memory_loss(one, zero, one, one).item();
  EXPECT_LT(l, 1e-5);
  EXPECT_NEAR(l, -4 * std::log(1 - 1e-7), 1e-12);
}

TEST(DualMemoryLoss, HalfEverywhereIsFourLnTwo) {
  const Tensor h = column(std::vector<double>(33, 0.5));
  EXPECT_NEAR(dual_memory_loss(h, h, h, h).item(), 4 * std::log(2.0), 1e-12);
}

TEST(DualMemoryLoss, MatchesScalarOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<std::vector<double>> s(4, std::vector<double>(n));
    for (auto& v : s)
      for (double& x : v) x = rng.uniform(0.001, 0.999);
    const std::size_t k = n / 16 + 1;
    const double want = bce_oracle(s[0], 1) + bce_oracle(s[1], 0) +
                        bce_oracle({topk_mean_oracle(s[2], k)}, 1) +
                        bce_oracle({topk_mean_oracle(s[3], k)}, 1);
    const double got =
        dual_memory_loss(column(s[0]), column(s[1]), column(s[2]), column(s[3])).item();
    EXPECT_NEAR(got, want, 1e-12);
  }
}

TEST(DualMemoryLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  std::vector<Tensor> s;
  for (int i = 0; i < 4; ++i) s.push_back(random_tensor({20, 1}, rng, 0.05, 0.95));
  const double err =
      finite_diff_check([&] { return dual_memory_loss(s[0], s[1], s[2], s[3]); }, s);
  EXPECT_LT(err, 1e-5);
}

TEST(DualMemoryLoss, GradientDescentOnScoresReachesZero) {
  // Optimise unconstrained logits; the loss is driven by the scores alone.
  Rng rng(9);
  std::vector<Tensor> logits;
  for (int i = 0; i < 4; ++i) logits.push_back(random_tensor({16, 1}, rng, -1, 1));
  Adam adam;
  double loss = 0;
  for (std::uint64_t step = 1; step <= 4000; ++step) {
    const Tensor l = dual_memory_loss(sigmoid(logits[0]), sigmoid(logits[1]),
                                      sigmoid(logits[2]), sigmoid(logits[3]));
    loss = l.item();
    if (loss < 1e-3) break;
    reverse_accumulate(l);
    adam.update(logits, 0.05, step);
  }
  EXPECT_LT(loss, 1e-3);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_GT(sigmoid(logits[0]).data()[i], 0.99);
    EXPECT_LT(sigmoid(logits[1]).data()[i], 0.01);
  }
}

TEST(DualMemoryLoss, LossesGradToFeaturesAndPrototypes) {
  Rng rng(10);
  MemoryBank nbank = init_bank(5, 6, BankRole::kNormal, rng);
  MemoryBank abank = init_bank(5, 6, BankRole::kAbnormal, rng);
  nbank.prototypes.set_requires_grad(true);
  abank.prototypes.set_requires_grad(true);
  const Tensor xn = random_tensor({18, 6}, rng, -1, 1);
  const Tensor xa = random_tensor({18, 6}, rng, -1, 1);
  const std::vector<Tensor> params{nbank.prototypes, abank.prototypes, xn, xa};
  const auto dm = [&] {
    return dual_memory_loss(memory_query(xn, nbank).topk_mean, memory_query(xn, abank).topk_mean,
                            memory_query(xa, nbank).topk_mean, memory_query(xa, abank).topk_mean);
  };
  EXPECT_LT(finite_diff_check(dm, params), 1e-5);
  const auto trip = [&] {
    return triplet_separation_loss(memory_query(xn, nbank).topk_mean, xn,
                                   memory_query(xa, nbank).topk_mean,
                                   memory_query(xa, abank).topk_mean, xa, 5.0);
  };
  EXPECT_GT(trip().item(), 0.0);
  EXPECT_LT(finite_diff_check(trip, params), 1e-5);
}

TEST(TripletLoss, SatisfiedMarginIsZero) {
  // N=2, K=1: anchor row 0 of x_n, positive/negative picked from x_a.
  const Tensor xn = Tensor::from({2, 2}, {1, 1, 9, 9});
  const Tensor xa = Tensor::from({2, 2}, {1, 1, 4, 5});
  const Tensor snn = column({0.9, 0.1});
  const Tensor sna = column({0.8, 0.2});
  const Tensor saa = column({0.3, 0.7});
  EXPECT_EQ(triplet_separation_loss(snn, xn, sna, saa, xa, 1.0).item(), 0.0);
}

TEST(TripletLoss, EqualPositiveAndNegativeGivesMargin) {
  const Tensor xn = Tensor::from({2, 2}, {1, 1, 9, 9});
  const Tensor xa = Tensor::from({2, 2}, {3, -2, 4, 5});
  const Tensor s = column({0.9, 0.1});
  EXPECT_DOUBLE_EQ(triplet_separation_loss(s, xn, s, s, xa, 1.0).item(), 1.0);
  EXPECT_DOUBLE_EQ(triplet_separation_loss(s, xn, s, s, xa, 2.5).item(), 2.5);
}

TEST(TripletLoss, MatchesHandComputedDistances) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 8 + rng.below(40), d = 1 + rng.below(10);
    const Tensor xn = random_tensor({n, d}, rng, -1, 1, false);
    const Tensor xa = random_tensor({n, d}, rng, -1, 1, false);
    std::vector<std::vector<double>> s(3, std::vector<double>(n));
    for (auto& v : s)
      for (double& x : v) x = rng.uniform();
    const std::size_t k = n / 16 + 1;
    const auto fa = row_mean_oracle(xn, sort_oracle(s[0], k));
    const auto fp = row_mean_oracle(xa, sort_oracle(s[1], k));
    const auto fn = row_mean_oracle(xa, sort_oracle(s[2], k));
    const double margin = rng.uniform(0.1, 2);
    const double want = std::max(0.0, dist(fa, fp) - dist(fa, fn) + margin);
    const double got =
        triplet_separation_loss(column(s[0]), xn, column(s[1]), column(s[2]), xa, margin).item();
    EXPECT_NEAR(got, want, 1e-12);
  }
}

TEST(TripletLoss, ShapeMismatch) {
  const Tensor s = column({0.5, 0.5, 0.5});
  EXPECT_THROW(triplet_separation_loss(s, Tensor::zeros({3, 2}), s, s, Tensor::zeros({3, 3})),
               ContractViolation);
}

TEST(TopKMean, GradientFlowsToSelectedEntriesOnly) {
  const Tensor v = Tensor::from({5, 1}, {0.1, 0.9, 0.4, 0.9, 0.2}, true);
  const Tensor m = topk_mean(v, 2);
  EXPECT_DOUBLE_EQ(m.item(), 0.9);
  reverse_accumulate(m);
  const std::vector<double> want{0, 0.5, 0, 0.5, 0};
  EXPECT_EQ(std::vector<double>(v.grad().begin(), v.grad().end()), want);
}

TEST(TopKMean, RowMeanGradient) {
  Rng rng(12);
  const Tensor x = random_tensor({9, 4}, rng);
  const Tensor s = random_tensor({9, 1}, rng, 0, 1, false);
  const std::vector<Tensor> params{x};
  EXPECT_LT(finite_diff_check([&] { return probe(topk_row_mean(s, x, 3), 5); }, params), 1e-7);
}
