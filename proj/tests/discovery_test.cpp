#include "ctpd/error.hpp"
#include "ctpd/pattern_discovery.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace ctpd;
using namespace ctpd::discovery;

namespace {

struct Fixture {
  ParameterStore store;
  Rng rng{31};
  MultiScale ms;
  PrototypeBank bank;
  SlotAttention slots;

  explicit Fixture(int D = 6, int K = 4, int iters = 3) {
    ms = MultiScale::create(store, "ms", D, rng);
    bank = PrototypeBank::create(store, "bank", K, D, rng);
    slots = SlotAttention::create(store, "slots", D, iters, rng);
  }
};

}  // namespace

TEST(MultiScale, TokenCountIsSevenQuartersOfT) {
  for (int T : {8, 16, 24}) {
    EXPECT_EQ(MultiScale::token_count(T) * 4, 7 * T);
    Fixture f;
    ad::Tape tape;
    nn::Graph g{tape, f.store};
    auto out = f.ms(g, g.constant(test::random_matrix(T, 6, f.rng)));
    EXPECT_EQ(out.rows(), 7 * T / 4);
  }
  EXPECT_EQ(MultiScale::token_count(8), 14);
  EXPECT_THROW(MultiScale::token_count(6), ConfigError);
}

TEST(MultiScale, ZeroInputAndWeightsGivePositionTable) {
  Fixture f;
  for (auto id : f.store.with_prefix("ms.")) f.store.value(id).setZero();
  ad::Tape tape;
  nn::Graph g{tape, f.store};
  Matrix out = f.ms(g, g.constant(Matrix::Zero(8, 6))).value();
  EXPECT_EQ(out, nn::sinusoidal_positions(14, 6));
}

TEST(MultiScale, WindowTwoAveragesPairs) {
  Fixture f(2);
  for (auto id : f.store.with_prefix("ms.")) f.store.value(id).setZero();
  auto& w = f.store.value(f.ms.conv[1].weight);
  w.block(2, 0, 2, 2) = Matrix::Identity(2, 2);
  Matrix x = Matrix::Zero(4, 2);
  x.col(0) << 1, 3, 5, 7;
  ad::Tape tape;
  nn::Graph g{tape, f.store};
  Matrix out = f.ms(g, g.constant(x)).value() - nn::sinusoidal_positions(7, 2);
  EXPECT_DOUBLE_EQ(out(4, 0), 2.0);
  EXPECT_DOUBLE_EQ(out(5, 0), 6.0);
}

TEST(PrototypeBank, SigmaPositiveAndKAtLeastTwo) {
  Fixture f;
  Matrix sigma = f.store.value(f.bank.sigma_raw).unaryExpr([](double x) { return std::log1p(std::exp(x)); });
  EXPECT_GT(sigma.minCoeff(), 0.0);
  EXPECT_NEAR(sigma(0, 0), 0.1, 1e-12);
  ParameterStore s;
  Rng rng(1);
  EXPECT_THROW(PrototypeBank::create(s, "b", 1, 4, rng), ConfigError);
  EXPECT_THROW(SlotAttention::create(s, "s", 4, 0, rng), ConfigError);
}

TEST(SlotAttention, ZeroProjectionsGiveUniformWeights) {
  Fixture f(6, 4, 1);
  f.store.value(f.slots.query.weight).setZero();
  f.store.value(f.slots.key.weight).setZero();
  Matrix x = test::random_matrix(9, 6, f.rng);
  Matrix init = test::random_matrix(4, 6, f.rng);
  ad::Tape tape;
  nn::Graph g{tape, f.store};
  auto r = f.slots(g, g.constant(init), g.constant(x));
  EXPECT_LE((r.weights.value().array() - 1.0 / 9.0).abs().maxCoeff(), 1e-15);

  // one iteration: protos = f(cell(mean of v(x), init))
  Var v = f.slots.value(g, g.constant(x));
  Matrix mean = v.value().colwise().mean();
  Var z = g.constant(mean.replicate(4, 1));
  Var h = f.slots.cell(g, z, g.constant(init));
  Matrix expect = h.value() + f.slots.refine(g, h).value();
  EXPECT_LE((r.prototypes.value() - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SlotAttention, WeightRowsSumToOne) {
  Fixture f;
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ad::Tape tape;
    nn::Graph g{tape, f.store};
    auto r = f.slots(g, g.constant(test::random_matrix(4, 6, rng)),
                     g.constant(test::random_matrix(1 + trial, 6, rng, 3.0)));
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(r.weights.value().row(k).sum(), 1.0, 1e-6);
  }
}

TEST(Discover, EvalModeDeterministicAndRowsNormalized) {
  Fixture f;
  Matrix ts = test::random_matrix(14, 6, f.rng), text = test::random_matrix(8, 6, f.rng);
  auto run = [&](Mode mode, const Matrix& noise) {
    ad::Tape tape;
    nn::Graph g{tape, f.store};
    auto d = discover(g, g.constant(ts), g.constant(text), f.bank, f.slots, mode, noise);
    return std::array<Matrix, 4>{d.p_ts.value(), d.p_text.value(), d.w_ts.value(), d.w_text.value()};
  };
  auto a = run(Mode::eval, Matrix());
  auto b = run(Mode::eval, Matrix());
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_EQ(a[2].rows(), 4);
  EXPECT_EQ(a[2].cols(), 14);
  EXPECT_EQ(a[3].cols(), 8);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(a[2].row(k).sum(), 1.0, 1e-6);
    EXPECT_NEAR(a[3].row(k).sum(), 1.0, 1e-6);
  }
}

TEST(Discover, TinySigmaMatchesEvalMode) {
  Fixture f;
  f.store.value(f.bank.sigma_raw).setConstant(inverse_softplus(1e-12));
  Matrix ts = test::random_matrix(14, 6, f.rng), text = test::random_matrix(8, 6, f.rng);
  Matrix noise = sample_noise(4, 6, f.rng);
  ad::Tape tape;
  nn::Graph g{tape, f.store};
  auto tr = discover(g, g.constant(ts), g.constant(text), f.bank, f.slots, Mode::train, noise);
  auto ev = discover(g, g.constant(ts), g.constant(text), f.bank, f.slots, Mode::eval, noise);
  EXPECT_LE((tr.p_ts.value() - ev.p_ts.value()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((tr.p_text.value() - ev.p_text.value()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Discover, TrainModeUsesFreshSample) {
  Fixture f;
  Matrix ts = test::random_matrix(14, 6, f.rng), text = test::random_matrix(8, 6, f.rng);
  ad::Tape tape;
  nn::Graph g{tape, f.store};
  auto a = discover(g, g.constant(ts), g.constant(text), f.bank, f.slots, Mode::train, sample_noise(4, 6, f.rng));
  auto b = discover(g, g.constant(ts), g.constant(text), f.bank, f.slots, Mode::train, sample_noise(4, 6, f.rng));
  EXPECT_GT((a.p_ts.value() - b.p_ts.value()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Discover, EquivariantUnderPrototypePermutation) {
  Fixture f;
  Matrix ts = test::random_matrix(14, 6, f.rng), text = test::random_matrix(8, 6, f.rng);
  Matrix noise = sample_noise(4, 6, f.rng);
  auto run = [&](const Matrix& n) {
    ad::Tape tape;
    nn::Graph g{tape, f.store};
    auto d = discover(g, g.constant(ts), g.constant(text), f.bank, f.slots, Mode::train, n);
    return std::array<Matrix, 4>{d.p_ts.value(), d.p_text.value(), d.w_ts.value(), d.w_text.value()};
  };
  auto base = run(noise);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  f.store.value(f.bank.mu) = perm * f.store.value(f.bank.mu);
  f.store.value(f.bank.sigma_raw) = perm * f.store.value(f.bank.sigma_raw);
  auto permuted = run(perm * noise);
  for (int i = 0; i < 4; ++i) EXPECT_LE((permuted[i] - perm * base[i]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Discover, ModalitiesShareInitialPrototypesAndParameters) {
  Fixture f;
  // one set of slot-attention parameters in the store
  EXPECT_EQ(f.store.with_prefix("slots.query").size(), 1u);
  EXPECT_EQ(f.store.with_prefix("slots.key").size(), 1u);
  EXPECT_EQ(f.store.with_prefix("slots.value").size(), 1u);
  // identical inputs and a shared initial sample give identical prototypes
  Matrix x = test::random_matrix(8, 6, f.rng);
  ad::Tape tape;
  nn::Graph g{tape, f.store};
  auto d = discover(g, g.constant(x), g.constant(x), f.bank, f.slots, Mode::train, sample_noise(4, 6, f.rng));
  EXPECT_EQ(d.p_ts.value(), d.p_text.value());
  // both paths read the same parameter nodes
  d.p_ts = ad::sum_all(d.p_ts);
  tape.backward(d.p_ts);
  Gradients grads(f.store);
  tape.accumulate(grads);
  EXPECT_GT(grads[f.slots.query.weight].norm(), 0.0);
}
