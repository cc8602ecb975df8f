#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "mipruner/eval_metrics.hpp"

using namespace mipruner;

namespace {

PruneMask keep_first(std::size_t k, std::size_t kept) {
  PruneMask m = PruneMask::all_keep(k);
  for (std::size_t i = kept; i < k; ++i) m.keep[i] = false;
  return m;
}

}  // namespace

TEST(RelativeFlops, SingleLayerIsKeptFraction) {
  const LayerShape s{16, 64, 3, 0};
  EXPECT_EQ(s.ffn_flops(64), 2 * 16 * 64 + 2 * 64 * 3);
  const auto r = relative_flops({keep_first(64, 32)}, {s});
  EXPECT_DOUBLE_EQ(r.relative, 0.5);
  EXPECT_EQ(r.per_layer.size(), 1u);
  EXPECT_DOUBLE_EQ(relative_flops({PruneMask::all_keep(64)}, {s}).relative, 1.0);
}

TEST(RelativeFlops, WeightedAcrossLayersAndScopes) {
  const std::vector<LayerShape> arch{{10, 40, 10, 1000}, {10, 20, 10, 1000}};
  const auto r = relative_flops({keep_first(40, 10), PruneMask::all_keep(20)}, arch);
  // layer costs 1600 and 800; pruned 400 + 800
  EXPECT_DOUBLE_EQ(r.relative, 1200.0 / 2400.0);
  const auto whole = relative_flops({keep_first(40, 10), PruneMask::all_keep(20)}, arch, FlopsScope::whole_model);
  EXPECT_DOUBLE_EQ(whole.relative, 3200.0 / 4400.0);
  EXPECT_THROW(relative_flops({keep_first(40, 10)}, arch), InvalidParameter);
  EXPECT_THROW(relative_flops({keep_first(41, 10), PruneMask::all_keep(20)}, arch), InvalidParameter);
}

TEST(KeepForFlops, RoundsAndClamps) {
  EXPECT_EQ(keep_for_relative_flops(64, 0.5), 32);
  EXPECT_EQ(keep_for_relative_flops(64, 1.0), 64);
  EXPECT_EQ(keep_for_relative_flops(64, 0.001), 1);
  EXPECT_EQ(keep_for_relative_flops(10, 0.25), 3);
  EXPECT_THROW(keep_for_relative_flops(64, 0.0), InvalidParameter);
  EXPECT_THROW(keep_for_relative_flops(64, 1.1), InvalidParameter);
}

TEST(KlProxy, HandValuesInBits) {
  Matrix p(1, 2), q(1, 2);
  p << 0.5, 0.5;
  q << 0.25, 0.75;
  EXPECT_NEAR(kl_proxy(p, q), 0.5 * std::log2(2.0) + 0.5 * std::log2(0.5 / 0.75), 1e-15);
  EXPECT_EQ(kl_proxy(p, p), 0.0);
}

TEST(KlProxy, ZeroMassFlooredAndSkipped) {
  Matrix p(1, 2), q(1, 2);
  p << 1.0, 0.0;
  q << 0.0, 1.0;
  EXPECT_NEAR(kl_proxy(p, q), std::log2(1e12), 1e-9);
  EXPECT_EQ(kl_proxy(q, q), 0.0);
  EXPECT_THROW(kl_proxy(p, Matrix(2, 2)), InvalidParameter);
}

TEST(KlProxy, MeanOverRows) {
  Matrix p(2, 2), q(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  q << 0.5, 0.5, 0.25, 0.75;
  Matrix q1 = q.bottomRows(1), p1 = p.bottomRows(1);
  EXPECT_NEAR(kl_proxy(p, q), kl_proxy(p1, q1) / 2.0, 1e-15);
}

TEST(ProbabilityRows, Validation) {
  Matrix p(1, 2);
  p << 0.3, 0.7;
  EXPECT_NO_THROW(check_probability_rows(p, "p"));
  p << 0.3, 0.6;
  EXPECT_THROW(check_probability_rows(p, "p"), InvalidData);
  p << -0.1, 1.1;
  EXPECT_THROW(check_probability_rows(p, "p"), InvalidData);
}

TEST(Accuracy, ArgmaxWithLowIndexTies) {
  Matrix out(4, 3);
  out << 0.2, 0.5, 0.3,  //
      0.4, 0.4, 0.2,     //
      0.1, 0.1, 0.8,     //
      0.6, 0.3, 0.1;
  EXPECT_DOUBLE_EQ(accuracy(out, {1, 0, 2, 1}), 0.75);
  EXPECT_THROW(accuracy(out, {1, 0}), InvalidParameter);
}

TEST(MetricsCsv, HeaderAndRows) {
  std::ostringstream os;
  write_metrics_csv(os, {MetricsRow{"cluster_mi", 0.5, 3, 0.9, 0.01, "alpha", "2"}});
  EXPECT_EQ(os.str(), "parameter,value,method,relative_flops,seed,accuracy,kl_proxy\nalpha,2,cluster_mi,0.5,3,0.9,0.01\n");
  std::ostringstream table;
  write_metrics_table(table, {MetricsRow{"random", 0.25, 1, 0.5, 0.2, "", ""}});
  EXPECT_NE(table.str().find("random"), std::string::npos);
}
