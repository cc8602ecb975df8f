#include <cmath>

#include <gtest/gtest.h>

#include "mipruner/pipeline.hpp"
#include "mipruner/toy_model.hpp"
#include "support.hpp"

using namespace mipruner;

TEST(Gelu, ExactErfForm) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(gelu(-1.0), -0.15865525393145707, 1e-15);
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(gelu_grad(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Matrix z(2, 3);
  z << 1, 2, 3, 1000, 1001, 1002;
  const Matrix p = softmax_rows(z);
  EXPECT_NEAR(p.row(0).sum(), 1.0, 1e-15);
  EXPECT_LT((p.row(0) - p.row(1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SynthTask, ShapesLabelsAndReproducible) {
  TaskSpec spec;
  spec.n_samples = 300;
  const Dataset a = synth_task(3, spec);
  EXPECT_EQ(a.inputs.rows(), 300);
  EXPECT_EQ(a.inputs.cols(), 16);
  for (int l : a.labels) EXPECT_TRUE(l >= 0 && l < 3);
  EXPECT_EQ(a.inputs, synth_task(3, spec).inputs);
  EXPECT_NE(a.inputs, synth_task(4, spec).inputs);
}

TEST(SynthTask, PlantedRedundancyCorrelatesInputs) {
  TaskSpec spec;
  spec.n_samples = 2000;
  spec.redundancy = {4, 0.1};
  const Dataset d = synth_task(5, spec);
  // inputs 0 and 4 share latent 0; 0 and 1 do not
  EXPECT_GT(abs_pearson(d.inputs.col(0), d.inputs.col(4)), 0.95);
  EXPECT_LT(abs_pearson(d.inputs.col(0), d.inputs.col(1)), 0.9);
  spec.redundancy.latent_dims = 17;
  EXPECT_THROW(synth_task(0, spec), InvalidParameter);
}

TEST(ToyTraining, ReachesHighTrainAccuracyAndIsDeterministic) {
  ToyExperimentConfig cfg;
  const ToyExperiment ex = make_toy_experiment(1, cfg);
  EXPECT_GE(accuracy(ex.model.forward(ex.data.train.inputs), ex.data.train.labels), 0.9);
  ex.model.validate();
  TrainOptions quick{20, 0.05};
  const Dataset small = synth_task(1, TaskSpec{200});
  const ToyFFN a = train_toy_ffn(small, 8, 9, quick);
  const ToyFFN b = train_toy_ffn(small, 8, 9, quick);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_EQ(a.w2, b.w2);
}

TEST(ToyTraining, DivergenceIsReported) {
  const Dataset small = synth_task(1, TaskSpec{100});
  EXPECT_THROW(train_toy_ffn(small, 8, 0, TrainOptions{200, 1e6}), TrainingError);
}

TEST(Masking, ZeroedUnitsEqualRemovedUnits) {
  const Dataset d = synth_task(2, TaskSpec{150});
  const ToyFFN m = train_toy_ffn(d, 12, 4, TrainOptions{30, 0.05});
  const PruneMask mask = prune_random(12, 5, 1);
  const Matrix a = forward_with_mask(m, mask, d.inputs);
  const ToyFFN small = remove_units(m, mask);
  EXPECT_EQ(small.hidden(), 5);
  EXPECT_LT((a - small.forward(d.inputs)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((forward_with_mask(m, PruneMask::all_keep(12), d.inputs) - m.forward(d.inputs)).cwiseAbs().maxCoeff(),
            1e-12);
  PruneMask none = PruneMask::all_keep(12);
  none.keep.assign(12, false);
  EXPECT_THROW(forward_with_mask(m, none, d.inputs), InvalidParameter);
  EXPECT_THROW(forward_with_mask(m, PruneMask::all_keep(11), d.inputs), InvalidParameter);
}

TEST(Capture, PostGeluActivations) {
  const Dataset d = synth_task(2, TaskSpec{50});
  const ToyFFN m = train_toy_ffn(d, 6, 4, TrainOptions{1, 0.05});
  const auto x = capture_activations(m, d.inputs, "blk.fc1", 0.5);
  EXPECT_EQ(x.values, m.pre_activation(d.inputs).unaryExpr(&gelu));
  EXPECT_EQ(x.layer_id, "blk.fc1");
  EXPECT_EQ(x.sample_fraction, 0.5);
}

TEST(Subsample, CountOrderAndFraction) {
  Matrix rows(10, 1);
  for (Index i = 0; i < 10; ++i) rows(i, 0) = static_cast<double>(i);
  const Matrix s = subsample_rows(rows, 0.35, 3);
  EXPECT_EQ(s.rows(), 4);
  for (Index i = 1; i < s.rows(); ++i) EXPECT_LT(s(i - 1, 0), s(i, 0));
  EXPECT_EQ(subsample_rows(rows, 0.01, 0).rows(), 2);
  EXPECT_EQ(subsample_rows(rows, 1.0, 0), rows);
  EXPECT_THROW(subsample_rows(rows, 0.0, 0), InvalidParameter);
  auto x = fixtures::as_activations(Matrix::Random(10, 3));
  x.sample_fraction = 0.5;
  EXPECT_DOUBLE_EQ(subsample(x, 0.5, 1).sample_fraction, 0.25);
}

TEST(Pipeline, FlopsLevels) {
  EXPECT_EQ(flops_levels(0.25), (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(flops_levels(0.01).size(), 100u);
  EXPECT_EQ(flops_levels(0.3).back(), 1.0);
}

TEST(Pipeline, RepresentationFallbackDropsPlantedDuplicate) {
  const DemoFixture f = make_demo_fixture();
  PipelineOptions po;
  po.seeds = 20;
  const MIEstimate est = estimate_mi(f.activations, po);
  const auto res = cluster_prune_representation(est.mi, 9, f.activations, po);
  const PruneMask& m = res.selection.mask;
  EXPECT_EQ(m.kept(), 9u);
  bool dropped_duplicate = false;
  for (const auto& [a, b] : f.planted)
    dropped_duplicate |= !m.keep[static_cast<std::size_t>(a)] || !m.keep[static_cast<std::size_t>(b)];
  EXPECT_TRUE(dropped_duplicate);
}

TEST(Pipeline, AblationRowsHaveExpectedShape) {
  AblationOptions ab;
  ab.experiment.task.n_samples = 400;
  ab.experiment.hidden = 12;
  ab.experiment.test = 200;
  ab.experiment.sample_fraction = 0.25;
  ab.experiment.train.steps = 50;
  ab.pipeline.seeds = 3;
  ab.values = {0.5, 2.0};
  ab.levels = {0.5, 1.0};
  const auto rows = run_ablation(AblationKind::alpha, ab);
  ASSERT_EQ(rows.size(), 1u + 2u * 2u * 2u);
  EXPECT_EQ(rows[0].value, "reference");
  for (const auto& r : rows) EXPECT_EQ(r.parameter, "alpha");
  ab.values = {0.5};
  const auto pcc = run_ablation(AblationKind::pcc, ab);
  ASSERT_EQ(pcc.size(), 3u);
  EXPECT_EQ(pcc[1].method, "pairwise_mi");
  EXPECT_EQ(pcc[2].method, "pairwise_pcc");
}
