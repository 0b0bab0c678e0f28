#include "ctpd/error.hpp"
#include "ctpd/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace ctpd;
using namespace ctpd::metrics;

using test::f1_oracle;
using test::random_scored;

TEST(Auroc, Examples) {
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.7, 0.1}, std::vector<int>{1, 1, 0}), 1.0);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), MetricError);
}

TEST(Auroc, MatchesPairCountingOracle) {
  const auto r = test::auroc_trials(1, 1000);
  EXPECT_EQ(r.trials, 1000);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Auroc, RandomScoresApproachOneHalf) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 10000; ++i) {
    s.push_back(u(rng));
    y.push_back(i % 2);
  }
  EXPECT_NEAR(auroc(s, y), 0.5, 0.02);
}

TEST(Aupr, Examples) {
  EXPECT_DOUBLE_EQ(aupr(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(aupr(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(aupr(std::vector<double>{0.3, 0.5, 0.2}, std::vector<int>{1, 1, 1}), 1.0);
  EXPECT_THROW(aupr(std::vector<double>{0.3}, std::vector<int>{0}), MetricError);
}

TEST(Aupr, MatchesThresholdSweepOracle) {
  const auto r = test::aupr_trials(3, 1000);
  EXPECT_EQ(r.trials, 1000);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(F1Threshold, Examples) {
  std::vector<double> s{0.9, 0.6, 0.4};
  std::vector<int> y{1, 0, 1};
  auto c = f1_best_threshold(s, y, s, y);
  EXPECT_DOUBLE_EQ(c.validation_f1, 0.8);
  EXPECT_DOUBLE_EQ(c.threshold, 0.4);
  EXPECT_DOUBLE_EQ(c.f1, 0.8);

  std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  std::vector<int> ys{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(f1_best_threshold(sep, ys, sep, ys).f1, 1.0);
  EXPECT_THROW(f1_best_threshold(sep, std::vector<int>{1, 1, 1, 1}, sep, ys), MetricError);
}

TEST(F1Threshold, MatchesExhaustiveSweep) {
  const auto r = test::f1_trials(4, 1000);
  EXPECT_EQ(r.trials, 1000);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(F1Threshold, TestLabelsNeverMoveTheThreshold) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto val = random_scored(rng, true);
    auto target = random_scored(rng, false);
    const double t = f1_best_threshold(val.scores, val.labels, target.scores, target.labels).threshold;
    for (auto& y : target.labels) y = 1 - y;
    EXPECT_EQ(f1_best_threshold(val.scores, val.labels, target.scores, target.labels).threshold, t);
  }
}

TEST(Report, BinaryAndMultilabelShapes) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  std::bernoulli_distribution coin(0.4);
  Matrix vs(40, 25), vl(40, 25), ts(30, 25), tl(30, 25);
  for (Eigen::Index i = 0; i < vs.size(); ++i) {
    vs.data()[i] = u(rng);
    vl.data()[i] = coin(rng);
  }
  for (Eigen::Index i = 0; i < ts.size(); ++i) {
    ts.data()[i] = u(rng);
    tl.data()[i] = coin(rng);
  }
  auto multi = evaluate_scores(vs, vl, ts, tl);
  EXPECT_TRUE(multi.macro);
  ASSERT_EQ(multi.per_label.size(), 25u);
  double mean = 0.0;
  for (const auto& l : multi.per_label) {
    EXPECT_TRUE(l.defined);
    mean += l.auroc;
  }
  EXPECT_NEAR(multi.auroc, mean / 25.0, 1e-12);
  EXPECT_NEAR(selection_auroc(vs, vl), [&] {
    double m = 0;
    for (int c = 0; c < 25; ++c) {
      std::vector<double> s(vs.col(c).data(), vs.col(c).data() + 40);
      std::vector<int> y;
      for (int i = 0; i < 40; ++i) y.push_back(static_cast<int>(vl(i, c)));
      m += auroc(s, y);
    }
    return m / 25.0;
  }(), 1e-12);

  auto bin = evaluate_scores(vs.leftCols(1), vl.leftCols(1), ts.leftCols(1), tl.leftCols(1));
  EXPECT_FALSE(bin.macro);
  EXPECT_TRUE(bin.per_label.empty());

  Matrix perfect_s = (Matrix(4, 1) << 0.9, 0.8, 0.2, 0.1).finished();
  Matrix perfect_l = (Matrix(4, 1) << 1, 1, 0, 0).finished();
  auto p = evaluate_scores(perfect_s, perfect_l, perfect_s, perfect_l);
  EXPECT_DOUBLE_EQ(p.auroc, 1.0);
  EXPECT_DOUBLE_EQ(p.aupr, 1.0);
}
