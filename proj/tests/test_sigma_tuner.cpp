#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mipruner/sigma_tuner.hpp"
#include "support.hpp"

using namespace mipruner;

namespace {

// Collects warnings for the lifetime of the guard.
struct WarningCapture {
  std::vector<std::string> messages;
  WarningSink previous;
  WarningCapture() {
    previous = set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { set_warning_sink(previous); }
};

}  // namespace

TEST(Scott, KnownValues) {
  EXPECT_NEAR(scott_sigma(100, 1, 1.0), 0.39811, 1e-4);
  EXPECT_NEAR(scott_sigma(100, 1, 1.0), std::pow(100.0, -0.2), 1e-15);
  EXPECT_NEAR(scott_sigma(1000, 4, 2.0), 2.0 * std::pow(1000.0, -1.0 / 8.0), 1e-15);
  EXPECT_THROW(scott_sigma(1, 1, 1.0), InvalidParameter);
  EXPECT_THROW(scott_sigma(10, 0, 1.0), InvalidParameter);
  EXPECT_THROW(scott_sigma(10, 1, 0.0), InvalidParameter);
}

TEST(Alignment, SelfIsOneAndBounded) {
  Rng rng(30);
  const Matrix x = fixtures::gaussian_matrix(rng, 30, 2);
  const auto a = rbf_gram(x.col(0), 0.5);
  EXPECT_NEAR(alignment(a, a), 1.0, 1e-12);
  for (int t = 0; t < 20; ++t) {
    const double v = alignment(rbf_gram(x.col(0), 0.05 + rng.uniform()), rbf_gram(x.col(1), 0.05 + rng.uniform()));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}

TEST(Ema, EndpointsAndBlend) {
  EXPECT_EQ(ema_update(2.0, 5.0, 1.0), 2.0);
  EXPECT_EQ(ema_update(2.0, 5.0, 0.0), 5.0);
  EXPECT_NEAR(ema_update(2.0, 5.0, 0.9), 2.3, 1e-15);
  EXPECT_THROW(ema_update(1.0, 1.0, 1.5), InvalidParameter);
  EXPECT_THROW(ema_update(1.0, 1.0, -0.1), InvalidParameter);
}

TEST(Grid, LogSpacedAroundCentre) {
  const GridSpec spec;
  const auto g = spec.around(2.0);
  ASSERT_EQ(g.size(), 50u);
  EXPECT_NEAR(g.front(), 0.2, 1e-12);
  EXPECT_NEAR(g.back(), 20.0, 1e-12);
  const double ratio = g[1] / g[0];
  for (std::size_t i = 2; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], ratio, 1e-9);
  GridSpec one{1, 0.5, 2.0};
  EXPECT_NEAR(one.around(3.0)[0], 3.0, 1e-12);
  EXPECT_THROW((GridSpec{0, 0.1, 10}).validate(), InvalidParameter);
  EXPECT_THROW((GridSpec{5, 2.0, 1.0}).validate(), InvalidParameter);
}

TEST(NeuronTuning, ArgmaxIsInteriorOnGaussianLayer) {
  Rng rng(32);
  const Matrix batch = fixtures::gaussian_matrix(rng, 100, 8);
  const auto layer = layer_gram(batch, 1.0);
  std::size_t interior = 0;
  for (Index c = 0; c < 8; ++c) {
    const auto t = tune_neuron_sigma_curve(batch.col(c), layer, neuron_grid(batch.col(c), 1.0, GridSpec{}));
    EXPECT_EQ(t.alignments.size(), 50u);
    EXPECT_EQ(t.sigma, t.grid[t.index]);
    for (double a : t.alignments) EXPECT_LE(a, t.alignments[t.index]);
    if (!t.at_endpoint()) ++interior;
  }
  EXPECT_EQ(interior, 8u);
}

TEST(NeuronTuning, SingleCandidateGridAndUnsortedInput) {
  Rng rng(34);
  const Matrix batch = fixtures::gaussian_matrix(rng, 40, 3);
  const auto layer = layer_gram(batch, 1.0);
  EXPECT_EQ(tune_neuron_sigma(batch.col(1), layer, {0.7}), 0.7);
  const auto t = tune_neuron_sigma_curve(batch.col(1), layer, {3.0, 0.1, 1.0});
  EXPECT_EQ(t.grid, (std::vector<double>{0.1, 1.0, 3.0}));
  EXPECT_THROW(tune_neuron_sigma(batch.col(1), layer, {}), InvalidParameter);
}

TEST(NeuronTuning, TiesGoToSmallerWidth) {
  // A constant column has the same Gram at every width.
  Rng rng(36);
  Matrix batch = fixtures::gaussian_matrix(rng, 20, 3);
  batch.col(2).setConstant(1.0);
  const auto layer = layer_gram(batch, 1.0);
  const auto t = tune_neuron_sigma_curve(batch.col(2), layer, {0.5, 1.0, 2.0});
  EXPECT_EQ(t.index, 0u);
}

TEST(TuneAll, DuplicateColumnsGetEqualWidths) {
  Rng rng(38);
  Matrix v = fixtures::gaussian_matrix(rng, 300, 5);
  v.col(4) = v.col(1);
  const auto s = tune_all(fixtures::as_activations(v), TuneOptions{});
  EXPECT_EQ(s.neuron_sigmas[1], s.neuron_sigmas[4]);
  EXPECT_EQ(s.neurons(), 5u);
}

TEST(TuneAll, ScaleEquivariant) {
  Rng rng(40);
  const Matrix v = fixtures::gaussian_matrix(rng, 200, 4);
  const auto a = tune_all(fixtures::as_activations(v), TuneOptions{});
  const auto b = tune_all(fixtures::as_activations(v * 3.0), TuneOptions{});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(b.neuron_sigmas[i], 3.0 * a.neuron_sigmas[i], 1e-9 * b.neuron_sigmas[i]);
  EXPECT_NEAR(b.layer_sigma, 3.0 * a.layer_sigma, 1e-9 * b.layer_sigma);
}

TEST(TuneAll, BetaOneKeepsFirstBatchAndRangesCoverGrids) {
  Rng rng(42);
  const Matrix v = fixtures::gaussian_matrix(rng, 300, 3);
  TuneOptions opt;
  opt.beta = 1.0;
  opt.shuffle = false;
  const auto s = tune_all(fixtures::as_activations(v), opt);
  const Matrix first = v.topRows(100);
  const auto layer = layer_gram(first, 1.0);
  for (Index c = 0; c < 3; ++c) {
    const auto t = tune_neuron_sigma_curve(first.col(c), layer, neuron_grid(first.col(c), 1.0, opt.grid));
    EXPECT_EQ(s.neuron_sigmas[static_cast<std::size_t>(c)], t.sigma);
    const auto [lo, hi] = s.neuron_ranges[static_cast<std::size_t>(c)];
    EXPECT_LE(lo, t.grid.front());
    EXPECT_GE(hi, t.grid.back());
  }
}

TEST(TuneAll, SeededShuffleIsReproducible) {
  Rng rng(44);
  const auto x = fixtures::as_activations(fixtures::gaussian_matrix(rng, 250, 3));
  TuneOptions opt;
  opt.seed = 5;
  const auto a = tune_all(x, opt);
  const auto b = tune_all(x, opt);
  EXPECT_EQ(a.neuron_sigmas, b.neuron_sigmas);
}

TEST(TuneAll, SmallSampleWarnsAndUsesOneBatch) {
  WarningCapture cap;
  Rng rng(46);
  const auto s = tune_all(fixtures::as_activations(fixtures::gaussian_matrix(rng, 30, 3)), TuneOptions{});
  EXPECT_EQ(s.batch_size, 30);
  ASSERT_FALSE(cap.messages.empty());
  EXPECT_NE(cap.messages[0].find("single batch"), std::string::npos);
}

TEST(TuneAll, EndpointHitsWarnOnce) {
  WarningCapture cap;
  Rng rng(48);
  TuneOptions opt;
  opt.grid = GridSpec{3, 0.999, 1.001};  // a grid too narrow to contain the optimum
  tune_all(fixtures::as_activations(fixtures::gaussian_matrix(rng, 100, 4)), opt);
  std::size_t hits = 0;
  for (const auto& m : cap.messages) hits += m.find("grid endpoint") != std::string::npos;
  EXPECT_EQ(hits, 1u);
}

TEST(TuneAll, RejectsBadOptions) {
  Rng rng(50);
  const auto x = fixtures::as_activations(fixtures::gaussian_matrix(rng, 20, 2));
  TuneOptions o;
  o.batch_size = 1;
  EXPECT_THROW(tune_all(x, o), InvalidParameter);
  o = {};
  o.beta = 2.0;
  EXPECT_THROW(tune_all(x, o), InvalidParameter);
  o = {};
  o.gamma = 0.0;
  EXPECT_THROW(tune_all(x, o), InvalidParameter);
}
