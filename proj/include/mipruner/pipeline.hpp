#pragma once

// End-to-end orchestration on top of the estimators and pruners: the toy
// experiment setup, MI estimation from a model, budgeted cluster pruning
// with KL seed selection, mask evaluation and the ablation sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mipruner/entropy_mi.hpp"
#include "mipruner/eval_metrics.hpp"
#include "mipruner/io.hpp"
#include "mipruner/pruner_cluster.hpp"
#include "mipruner/pruner_pairwise.hpp"
#include "mipruner/sigma_tuner.hpp"
#include "mipruner/toy_model.hpp"

namespace mipruner {

/// max(2, ceil(fraction * N)) rows chosen by a seeded shuffle, in original order.
inline Matrix subsample_rows(const Matrix& rows, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidParameter("sample fraction must lie in (0, 1]");
  const Index n = rows.rows();
  if (fraction == 1.0) return rows;
  Index take = static_cast<Index>(std::ceil(fraction * static_cast<double>(n)));
  take = std::clamp<Index>(take, std::min<Index>(2, n), n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(std::span<Index>(order));
  std::sort(order.begin(), order.begin() + take);
  Matrix out(take, rows.cols());
  for (Index i = 0; i < take; ++i) out.row(i) = rows.row(order[static_cast<std::size_t>(i)]);
  return out;
}

inline ActivationMatrix subsample(const ActivationMatrix& x, double fraction, std::uint64_t seed) {
  ActivationMatrix out;
  out.values = subsample_rows(x.values, fraction, seed);
  out.layer_id = x.layer_id;
  out.sample_fraction = x.sample_fraction * fraction;
  return out;
}

// ---------------------------------------------------------------- toy experiment

struct ToyExperimentConfig {
  TaskSpec task{2000, 16, 3, 5.0, RedundancyPlan{4, 0.3}};  // n_samples = training rows
  int hidden = 64;
  int calibration = 100;  // held-out rows for KL seed selection
  int test = 1000;
  double sample_fraction = 0.05;  // training rows used for MI estimation
  TrainOptions train;
};

inline json to_json(const ToyExperimentConfig& c) {
  return {{"train_samples", c.task.n_samples}, {"d_in", c.task.d_in},
          {"classes", c.task.n_classes},       {"separation", c.task.separation},
          {"latent_dims", c.task.redundancy.latent_dims}, {"noise", c.task.redundancy.noise},
          {"hidden", c.hidden},                {"calibration", c.calibration},
          {"test", c.test},                    {"sample_fraction", c.sample_fraction},
          {"steps", c.train.steps},            {"learning_rate", c.train.learning_rate}};
}

inline ToyExperimentConfig experiment_config_from_json(const json& j) {
  ToyExperimentConfig c;
  c.task.n_samples = j.value("train_samples", c.task.n_samples);
  c.task.d_in = j.value("d_in", c.task.d_in);
  c.task.n_classes = j.value("classes", c.task.n_classes);
  c.task.separation = j.value("separation", c.task.separation);
  c.task.redundancy.latent_dims = j.value("latent_dims", c.task.redundancy.latent_dims);
  c.task.redundancy.noise = j.value("noise", c.task.redundancy.noise);
  c.hidden = j.value("hidden", c.hidden);
  c.calibration = j.value("calibration", c.calibration);
  c.test = j.value("test", c.test);
  c.sample_fraction = j.value("sample_fraction", c.sample_fraction);
  c.train.steps = j.value("steps", c.train.steps);
  c.train.learning_rate = j.value("learning_rate", c.train.learning_rate);
  return c;
}

/// One synthetic task split into train / calibration / test, without a model.
struct ToySplits {
  Dataset train;
  Matrix calibration;
  Matrix test;
  std::vector<int> test_labels;
};

inline ToySplits make_toy_splits(std::uint64_t seed, const ToyExperimentConfig& cfg) {
  if (cfg.calibration < 1 || cfg.test < 1) throw InvalidParameter("calibration and test splits must be non-empty");
  TaskSpec all = cfg.task;
  all.n_samples = cfg.task.n_samples + cfg.calibration + cfg.test;
  const Dataset d = synth_task(seed, all);
  const Index ntr = cfg.task.n_samples;
  ToySplits s;
  s.train.inputs = d.inputs.topRows(ntr);
  s.train.labels.assign(d.labels.begin(), d.labels.begin() + ntr);
  s.train.classes = d.classes;
  s.calibration = d.inputs.middleRows(ntr, cfg.calibration);
  s.test = d.inputs.bottomRows(cfg.test);
  s.test_labels.assign(d.labels.end() - cfg.test, d.labels.end());
  return s;
}

struct ToyExperiment {
  ToySplits data;
  ToyFFN model;
  std::uint64_t seed = 0;
};

/// Data from `seed`, model trained with the same seed.
inline ToyExperiment make_toy_experiment(std::uint64_t seed, const ToyExperimentConfig& cfg) {
  ToyExperiment e;
  e.seed = seed;
  e.data = make_toy_splits(seed, cfg);
  e.model = train_toy_ffn(e.data.train, cfg.hidden, seed, cfg.train);
  return e;
}

// ---------------------------------------------------------------- pruning pipeline

struct PipelineOptions {
  TuneOptions tune;
  double alpha = kDefaultAlpha;
  Index mds_dim = 0;
  int seeds = 500;
  std::uint64_t seed_base = 0;
};

struct MIEstimate {
  SigmaSchedule sigmas;
  MIMatrix mi;
};

inline MIEstimate estimate_mi(const ActivationMatrix& x, const PipelineOptions& opt) {
  MIEstimate e;
  TuneOptions tune = opt.tune;
  tune.alpha = opt.alpha;
  e.sigmas = tune_all(x, tune);
  e.mi = mi_matrix(x, e.sigmas, opt.alpha);
  return e;
}

/// Cluster pruning scored on a toy model's class probabilities over `kl_inputs`.
inline ClusterResult cluster_prune_model(const MIMatrix& mi, int target_keep, const ToyFFN& model,
                                         const Matrix& kl_inputs, const PipelineOptions& opt) {
  ClusterOptions co;
  co.target_keep = target_keep;
  co.mds_dim = opt.mds_dim;
  co.seeds = seed_range(opt.seed_base, static_cast<std::size_t>(std::max(opt.seeds, 1)));
  const Matrix orig = model.forward(kl_inputs);
  return prune_cluster(mi, co, orig, [&](const PruneMask& m) { return forward_with_mask(model, m, kl_inputs); });
}

/// Softmax over each row of the layer representation with dropped units zeroed.
inline Matrix representation_probabilities(const Matrix& hidden, const PruneMask& mask) {
  Matrix h = hidden;
  for (Index j = 0; j < h.cols(); ++j)
    if (!mask.keep[static_cast<std::size_t>(j)]) h.col(j).setZero();
  return softmax_rows(h);
}

/// Cluster pruning scored on the layer representation itself (no downstream model).
inline ClusterResult cluster_prune_representation(const MIMatrix& mi, int target_keep, const ActivationMatrix& x,
                                                  const PipelineOptions& opt) {
  ClusterOptions co;
  co.target_keep = target_keep;
  co.mds_dim = opt.mds_dim;
  co.seeds = seed_range(opt.seed_base, static_cast<std::size_t>(std::max(opt.seeds, 1)));
  const Matrix orig = representation_probabilities(x.values, PruneMask::all_keep(static_cast<std::size_t>(x.neurons())));
  return prune_cluster(mi, co, orig, [&](const PruneMask& m) { return representation_probabilities(x.values, m); });
}

/// Accuracy on the test split, KL proxy against the unpruned model on the test split.
inline MetricsRow evaluate_mask(const ToyFFN& model, const PruneMask& mask, const Matrix& inputs,
                                const std::vector<int>& labels) {
  const Matrix orig = model.forward(inputs);
  const Matrix masked = forward_with_mask(model, mask, inputs);
  MetricsRow row;
  row.method = std::string(to_string(mask.method));
  row.seed = mask.seed;
  row.relative_flops = relative_flops({mask}, {model.shape()}).relative;
  row.accuracy = accuracy(masked, labels);
  row.kl_proxy = kl_proxy(orig, masked);
  return row;
}

/// Relative FFN FLOPs levels step, 2*step, ..., 1.0.
inline std::vector<double> flops_levels(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw InvalidParameter("FLOPs step must lie in (0, 1]");
  std::vector<double> out;
  const int n = static_cast<int>(std::floor(1.0 / step + 1e-9));
  for (int i = 1; i <= n; ++i) out.push_back(std::round(i * step * 1e6) / 1e6);
  if (out.empty() || out.back() < 1.0) out.push_back(1.0);
  return out;
}

// ---------------------------------------------------------------- ablations

enum class AblationKind { alpha, sample_fraction, pcc, seeds };

inline std::string_view to_string(AblationKind k) {
  switch (k) {
    case AblationKind::alpha: return "alpha";
    case AblationKind::sample_fraction: return "sample_fraction";
    case AblationKind::pcc: return "mi_vs_pcc";
    case AblationKind::seeds: return "mds_seeds";
  }
  return "";
}

struct AblationOptions {
  ToyExperimentConfig experiment;
  PipelineOptions pipeline;
  std::vector<double> values;
  std::vector<double> levels = flops_levels(0.1);
  int trials = 1;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string format_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Runs one ablation sweep on freshly trained toy models and returns one
/// row per (value, method, relative FLOPs, trial seed).
inline std::vector<MetricsRow> run_ablation(AblationKind kind, const AblationOptions& opt) {
  if (opt.values.empty()) throw InvalidParameter("ablation needs at least one value");
  for (double v : opt.values) {
    if (kind == AblationKind::alpha) check_alpha(v);
    if (kind == AblationKind::sample_fraction && !(v > 0.0 && v <= 1.0))
      throw InvalidParameter("sample fractions must lie in (0, 1]");
    if (kind == AblationKind::pcc && !(v >= 0.0 && v <= 1.0)) throw InvalidParameter("quantiles must lie in [0, 1]");
    if (kind == AblationKind::seeds && !(v >= 1.0 && v == std::floor(v)))
      throw InvalidParameter("seed counts must be positive integers");
  }
  std::vector<MetricsRow> rows;
  const std::string param(to_string(kind));
  for (int t = 0; t < opt.trials; ++t) {
    const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(t);
    const ToyExperiment ex = make_toy_experiment(seed, opt.experiment);
    const ToyFFN& model = ex.model;
    const auto k = static_cast<std::size_t>(model.hidden());
    auto push = [&](const PruneMask& m, const std::string& value) {
      MetricsRow r = evaluate_mask(model, m, ex.data.test, ex.data.test_labels);
      r.seed = seed;
      r.parameter = param;
      r.value = value;
      rows.push_back(r);
    };
    push(PruneMask::all_keep(k), "reference");

    const Matrix default_rows = subsample_rows(ex.data.train.inputs, opt.experiment.sample_fraction, seed);
    for (double v : opt.values) {
      const std::string value = detail::format_value(v);
      PipelineOptions po = opt.pipeline;
      Matrix est_rows = default_rows;
      if (kind == AblationKind::alpha) po.alpha = v;
      if (kind == AblationKind::sample_fraction) est_rows = subsample_rows(ex.data.train.inputs, v, seed);
      if (kind == AblationKind::seeds) po.seeds = static_cast<int>(v);
      const ActivationMatrix x = capture_activations(model, est_rows);

      if (kind == AblationKind::pcc) {
        // Same pairwise loop, thresholds at the v-quantile of each measure.
        const MIEstimate est = estimate_mi(x, po);
        std::vector<double> mi_vals, pcc_vals;
        for (Index a = 0; a < x.neurons(); ++a)
          for (Index b = a + 1; b < x.neurons(); ++b) {
            mi_vals.push_back(est.mi.at(a, b));
            pcc_vals.push_back(abs_pearson(x.values.col(a), x.values.col(b)));
          }
        const int itr = default_max_itr(x.neurons());
        const double t_mi = std::max(detail::quantile(mi_vals, v), 1e-12);
        const double t_pcc = std::clamp(detail::quantile(pcc_vals, v), 1e-12, 1.0 - 1e-12);
        PruneMask mm = prune_pairwise(x, est.sigmas, po.alpha, t_mi, itr, seed);
        PruneMask pm = prune_pcc(x, t_pcc, itr, seed);
        push(mm, value);
        push(pm, value);
        continue;
      }

      const MIEstimate est = estimate_mi(x, po);
      for (double level : opt.levels) {
        const int keep = keep_for_relative_flops(model.hidden(), level);
        PruneMask m = cluster_prune_model(est.mi, keep, model, ex.data.calibration, po).selection.mask;
        push(m, value);
        push(prune_random(k, keep, seed), value);
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------- demo fixture

struct DemoFixture {
  ActivationMatrix activations;
  std::vector<NeuronPair> planted;  // (original, duplicate)
};

/// Ten neurons over 200 samples; neurons 6..9 are exact or affine copies of 0..3.
inline DemoFixture make_demo_fixture(std::uint64_t seed = 7) {
  constexpr Index n = 200;
  Rng rng(seed);
  DemoFixture f;
  Matrix v(n, 10);
  for (Index i = 0; i < n; ++i) {
    v(i, 0) = rng.normal();
    v(i, 1) = gelu(rng.normal());
    v(i, 2) = rng.uniform() * 2.0 - 1.0;
    v(i, 3) = rng.normal(0.5, 2.0);
    v(i, 4) = gelu(rng.normal(0.0, 1.5));
    v(i, 5) = rng.normal();
  }
  v.col(6) = v.col(0);
  v.col(7) = (3.0 * v.col(1).array() + 2.0).matrix();
  v.col(8) = v.col(2);
  v.col(9) = -v.col(3);
  // AMX stores single precision; round here so the fixture equals its file.
  v = v.cast<float>().cast<double>();
  f.activations.values = v;
  f.activations.layer_id = "demo.fc1";
  f.planted = {{0, 6}, {1, 7}, {2, 8}, {3, 9}};
  return f;
}

}  // namespace mipruner
