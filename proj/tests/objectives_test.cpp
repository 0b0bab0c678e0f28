#include "ctpd/error.hpp"
#include "ctpd/objectives.hpp"
#include "ctpd/model.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace ctpd;
using namespace ctpd::objectives;

using test::beta_oracle;
using test::random_prototype_batch;
using test::run_tpnce;
using Batch = test::PrototypeBatch;

TEST(SlotImportance, ZeroMlpIsUniformAndRowsSumToOne) {
  ParameterStore store;
  Rng rng(2);
  auto imp = SlotImportance::create(store, "imp", 6, 6, 5, rng);
  Matrix a = test::random_matrix(3, 6, rng), b = test::random_matrix(4, 6, rng);
  {
    ad::Tape tape;
    nn::Graph g{tape, store};
    Matrix beta = imp(g, g.constant(a), g.constant(b)).value();
    ASSERT_EQ(beta.rows(), 12);
    for (int r = 0; r < 12; ++r) {
      EXPECT_NEAR(beta.row(r).sum(), 1.0, 1e-9);
      EXPECT_GE(beta.row(r).minCoeff(), 0.0);
      RowVector expect = beta_oracle(store, imp, a.row(r / 4), b.row(r % 4));
      EXPECT_LE((beta.row(r) - expect).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
  for (auto id : store.with_prefix("imp.")) store.value(id).setZero();
  ad::Tape tape;
  nn::Graph g{tape, store};
  Matrix beta = imp(g, g.constant(a), g.constant(b)).value();
  EXPECT_LE((beta.array() - 0.2).abs().maxCoeff(), 1e-15);
}

TEST(PairSimilarity, HandExamples) {
  ParameterStore store;
  ad::Tape tape;
  nn::Graph g{tape, store};
  Matrix bank = (Matrix(2, 3) << 1, 2, 3, -1, 0.5, 2).finished();
  Matrix uniform = Matrix::Constant(1, 2, 0.5);
  EXPECT_NEAR(pair_similarities(g.constant(bank), g.constant(bank), g.constant(uniform), 2).value()(0, 0),
              1.0, 1e-12);

  Matrix a = (Matrix(2, 2) << 1, 0, 0, 1).finished();
  Matrix b = (Matrix(2, 2) << 0, 3, 2, 0).finished();
  EXPECT_NEAR(pair_similarities(g.constant(a), g.constant(b), g.constant(uniform), 2).value()(0, 0),
              0.0, 1e-15);

  Matrix c = (Matrix(2, 2) << 2, 0, 1, 0).finished();  // cosines (1, 0) against a
  Matrix beta = (Matrix(1, 2) << 0.25, 0.75).finished();
  EXPECT_NEAR(pair_similarities(g.constant(a), g.constant(c), g.constant(beta), 2).value()(0, 0),
              0.25, 1e-12);
}

TEST(PairSimilarity, BoundedWithSimplexWeights) {
  Rng rng(5);
  ParameterStore store;
  auto imp = SlotImportance::create(store, "imp", 4, 4, 3, rng);
  for (int trial = 0; trial < 100; ++trial) {
    auto b = random_prototype_batch(3, 3, 4, rng);
    ad::Tape tape;
    nn::Graph g{tape, store};
    Var beta = imp(g, g.constant(b.g_ts), g.constant(b.g_text));
    Matrix s = pair_similarities(g.constant(b.p_ts), g.constant(b.p_text), beta, 3).value();
    EXPECT_LE(s.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(Tpnce, SingleSampleIsExactlyZero) {
  Rng rng(1);
  ParameterStore store;
  auto imp = SlotImportance::create(store, "imp", 4, 4, 3, rng);
  for (auto reduction : {Reduction::mean, Reduction::sum}) {
    TpnceConfig cfg;
    cfg.reduction = reduction;
    EXPECT_EQ(run_tpnce(store, imp, random_prototype_batch(1, 3, 4, rng), cfg, 3), 0.0);
  }
}

TEST(Tpnce, EqualSimilaritiesGiveLogTwo) {
  Rng rng(1);
  ParameterStore store;
  auto imp = SlotImportance::create(store, "imp", 4, 4, 3, rng);
  auto b = random_prototype_batch(2, 3, 4, rng);
  b.p_text = b.p_ts;
  b.p_text.middleRows(3, 3) = b.p_ts.topRows(3);
  b.p_ts.middleRows(3, 3) = b.p_ts.topRows(3);
  EXPECT_NEAR(run_tpnce(store, imp, b, {}, 3), std::log(2.0), 1e-12);
}

TEST(Tpnce, MatchesExhaustiveSimilarityMatrix) {
  // also fails any trial with a negative loss
  const auto r = test::tpnce_trials(41, 1000);
  EXPECT_EQ(r.trials, 1000);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Tpnce, InvariantUnderConsistentBatchPermutation) {
  Rng rng(3);
  ParameterStore store;
  auto imp = SlotImportance::create(store, "imp", 4, 5, 3, rng);
  auto b = random_prototype_batch(5, 3, 4, rng);
  const std::vector<int> order{3, 0, 4, 1, 2};
  Batch p = b;
  for (int i = 0; i < 5; ++i) {
    p.g_ts.row(i) = b.g_ts.row(order[i]);
    p.g_text.row(i) = b.g_text.row(order[i]);
    p.p_ts.middleRows(i * 3, 3) = b.p_ts.middleRows(order[i] * 3, 3);
    p.p_text.middleRows(i * 3, 3) = b.p_text.middleRows(order[i] * 3, 3);
  }
  EXPECT_NEAR(run_tpnce(store, imp, b, {}, 3), run_tpnce(store, imp, p, {}, 3), 1e-12);
}

TEST(Tpnce, SymmetricUnderModalitySwap) {
  Rng rng(6);
  ParameterStore store;
  auto imp = SlotImportance::create(store, "imp", 4, 5, 3, rng);
  auto b = random_prototype_batch(6, 3, 4, rng);
  Batch swapped{b.p_text, b.p_ts, b.g_text, b.g_ts};

  // The importance MLP reads (TS global, text global); after a swap its two
  // input blocks trade places as well.
  ParameterStore mirror;
  SlotImportance flipped{
      nn::Linear{mirror.add("ts_in.weight", store.value(imp.text_in.weight)),
                 mirror.add("ts_in.bias", store.value(imp.ts_in.bias)), true, 4, 5},
      nn::Linear{mirror.add("text_in.weight", store.value(imp.ts_in.weight)), ParamId{}, false, 4, 5},
      nn::Linear{mirror.add("out.weight", store.value(imp.out.weight)),
                 mirror.add("out.bias", store.value(imp.out.bias)), true, 5, 3}};
  EXPECT_NEAR(run_tpnce(store, imp, b, {}, 3), run_tpnce(mirror, flipped, swapped, {}, 3), 1e-12);

  // With input-independent weights the plain swap is symmetric too.
  store.value(imp.ts_in.weight).setZero();
  store.value(imp.text_in.weight).setZero();
  EXPECT_NEAR(run_tpnce(store, imp, b, {}, 3), run_tpnce(store, imp, swapped, {}, 3), 1e-12);
}

TEST(Tpnce, RejectsBadTemperatureAndShapes) {
  Rng rng(1);
  ParameterStore store;
  auto imp = SlotImportance::create(store, "imp", 4, 4, 3, rng);
  TpnceConfig cfg;
  cfg.temperature = 0.0;
  EXPECT_THROW(run_tpnce(store, imp, random_prototype_batch(2, 3, 4, rng), cfg, 3), ConfigError);
  auto b = random_prototype_batch(2, 3, 4, rng);
  b.g_text = test::random_matrix(3, 4, rng);
  EXPECT_THROW(run_tpnce(store, imp, b, {}, 3), Error);
}

TEST(Recon, MeanSquaredErrorExamples) {
  ParameterStore store;
  ad::Tape tape;
  nn::Graph g{tape, store};
  Rng rng(2);
  Matrix target = test::random_matrix(4, 3, rng);
  EXPECT_EQ(ad::mse(g.constant(target), target).value()(0, 0), 0.0);
  EXPECT_NEAR(ad::mse(g.constant(target.array() + 1.0), target).value()(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(ad::mse(g.constant(target.array() + 2.0), target).value()(0, 0), 4.0, 1e-12);
}

TEST(Recon, TargetReceivesNoGradient) {
  ParameterStore store;
  Rng rng(2);
  ad::Tape tape;
  nn::Graph g{tape, store};
  Var x = tape.leaf(test::random_matrix(3, 3, rng));
  Var target = tape.leaf(test::random_matrix(3, 3, rng));
  Var loss = ad::mse(x, ad::detach(target).value());
  tape.backward(loss);
  EXPECT_GT(tape.grad(x).norm(), 0.0);
  EXPECT_EQ(tape.grad(target).norm(), 0.0);
}

TEST(Recon, DecoderShapes) {
  ParameterStore store;
  Rng rng(3);
  auto ts = ReconDecoder::create(store, "ts", 8, 6, 2, 5, 2, rng);
  auto tx = ReconDecoder::create(store, "tx", 8, 6, 2, 6, 2, rng);
  EXPECT_EQ(store.value(ts.queries).rows(), 8);
  ad::Tape tape;
  nn::Graph g{tape, store};
  Var protos = g.constant(test::random_matrix(4, 6, rng));
  Matrix a = ts(g, protos).value(), b = tx(g, protos).value();
  EXPECT_EQ(a.rows(), 8);
  EXPECT_EQ(a.cols(), 5);
  EXPECT_EQ(b.cols(), 6);
}

TEST(TotalLoss, WeightedSumAndDefaults) {
  auto l = total_loss(1.0, 2.0, 4.0, 0.0, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(l.recon, 2.0);
  EXPECT_NEAR(l.total, 2.2, 1e-15);
  EXPECT_EQ(total_loss(0.7, 3.0, 5.0, 1.0, 0.0, 0.0).total, 0.7);
  ModelConfig m;
  EXPECT_DOUBLE_EQ(m.lambda1, 0.1);
  EXPECT_DOUBLE_EQ(m.lambda2, 0.5);
}

TEST(TotalLoss, NonFiniteComponentIsNamed) {
  try {
    total_loss(1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, 0.1, 0.5);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("tpnce"), std::string::npos);
  }
  EXPECT_THROW(total_loss(1.0, 0.0, 0.0, std::numeric_limits<double>::infinity(), 0.1, 0.5), NumericError);
}
