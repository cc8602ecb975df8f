#pragma once

// Randomized pairwise redundancy pruning and the unsupervised baselines
// (random subset, weight magnitude, Pearson correlation).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "mipruner/entropy_mi.hpp"
#include "mipruner/prune_mask.hpp"
#include "mipruner/random.hpp"

namespace mipruner {

/// ceil(10 K ln K), the coupon-collector scale for seeing every neuron.
inline int default_max_itr(Index k) {
  if (k < 2) return 1;
  const double kd = static_cast<double>(k);
  return static_cast<int>(std::ceil(10.0 * kd * std::log(kd)));
}

struct SampledPair {
  Index first;
  Index second;
  double value;
  bool dropped;  // `second` was switched off
};

/// Pairwise pruning loop with an arbitrary redundancy measure.
///
/// Each iteration draws two distinct survivors uniformly: an index i into
/// the ascending survivor list, then j from the remaining s - 1 positions.
/// When measure(first, second) >= threshold the second-drawn neuron is
/// dropped. The loop stops early once a single survivor remains.
template <typename Measure, typename Observer>
PruneMask prune_pairwise_with(Index k, Measure&& measure, double threshold, int max_itr, std::uint64_t seed,
                              Observer&& observe) {
  if (k < 1) throw InvalidParameter("pairwise pruning needs at least one neuron");
  if (max_itr < 1) throw InvalidParameter("max_itr must be at least 1");

  PruneMask mask = PruneMask::all_keep(static_cast<std::size_t>(k));
  mask.seed = seed;
  mask.threshold = threshold;

  std::vector<Index> survivors(static_cast<std::size_t>(k));
  std::iota(survivors.begin(), survivors.end(), Index{0});
  Rng rng(seed);
  int it = 0;
  for (; it < max_itr && survivors.size() >= 2; ++it) {
    const std::size_t s = survivors.size();
    const std::size_t i = rng.index(s);
    std::size_t j = rng.index(s - 1);
    if (j >= i) ++j;
    const Index first = survivors[i];
    const Index second = survivors[j];
    const double value = measure(first, second);
    const bool drop = value >= threshold;
    observe(SampledPair{first, second, value, drop});
    if (drop) {
      mask.keep[static_cast<std::size_t>(second)] = false;
      survivors.erase(survivors.begin() + static_cast<std::ptrdiff_t>(j));
    }
  }
  mask.iterations_used = it;
  mask.target_keep = static_cast<int>(survivors.size());
  return mask;
}

template <typename Measure>
PruneMask prune_pairwise_with(Index k, Measure&& measure, double threshold, int max_itr, std::uint64_t seed) {
  return prune_pairwise_with(k, std::forward<Measure>(measure), threshold, max_itr, seed, [](const SampledPair&) {});
}

/// Pairwise MI pruning: drop one of every sampled pair whose MI reaches `threshold_bits`.
template <typename Observer>
PruneMask prune_pairwise(const ActivationMatrix& x, const SigmaSchedule& sigmas, double alpha, double threshold_bits,
                         int max_itr, std::uint64_t seed, Observer&& observe) {
  if (!(threshold_bits > 0.0)) throw InvalidParameter("MI threshold must be positive");
  if (sigmas.neurons() != static_cast<std::size_t>(x.neurons()))
    throw InvalidParameter("sigma schedule does not match the activation matrix width");
  PairwiseMI mi(x, sigmas.neuron_sigmas, alpha);
  PruneMask mask = prune_pairwise_with(
      x.neurons(), [&](Index a, Index b) { return mi(a, b); }, threshold_bits, max_itr, seed,
      std::forward<Observer>(observe));
  mask.method = PruneMethod::pairwise_mi;
  mask.layer_id = x.layer_id;
  return mask;
}

inline PruneMask prune_pairwise(const ActivationMatrix& x, const SigmaSchedule& sigmas, double alpha,
                                double threshold_bits, int max_itr, std::uint64_t seed) {
  return prune_pairwise(x, sigmas, alpha, threshold_bits, max_itr, seed, [](const SampledPair&) {});
}

/// Uniformly random subset of `target_keep` neurons.
inline PruneMask prune_random(std::size_t k, int target_keep, std::uint64_t seed) {
  check_target_keep(k, target_keep);
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  PruneMask mask;
  mask.keep.assign(k, false);
  for (int i = 0; i < target_keep; ++i) mask.keep[order[static_cast<std::size_t>(i)]] = true;
  mask.method = PruneMethod::random;
  mask.seed = seed;
  mask.target_keep = target_keep;
  return mask;
}

/// Keeps the neurons with the largest L1 norm of their outgoing weights
/// (rows of `outgoing`, K x out). Ties go to the lower index.
inline PruneMask prune_weight_magnitude(const Matrix& outgoing, int target_keep) {
  const auto k = static_cast<std::size_t>(outgoing.rows());
  check_target_keep(k, target_keep);
  const Vector norms = outgoing.cwiseAbs().rowwise().sum();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return norms(static_cast<Index>(a)) > norms(static_cast<Index>(b));
  });
  PruneMask mask;
  mask.keep.assign(k, false);
  for (int i = 0; i < target_keep; ++i) mask.keep[order[static_cast<std::size_t>(i)]] = true;
  mask.method = PruneMethod::weight_magnitude;
  mask.target_keep = target_keep;
  return mask;
}

/// |Pearson correlation| of two columns; 0 when either has zero variance.
template <typename DerivedA, typename DerivedB>
double abs_pearson(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const auto ca = (a.array() - a.mean()).eval();
  const auto cb = (b.array() - b.mean()).eval();
  const double va = ca.square().sum();
  const double vb = cb.square().sum();
  if (!(va > 0.0) || !(vb > 0.0)) return 0.0;
  return std::min(1.0, std::abs((ca * cb).sum()) / std::sqrt(va * vb));
}

/// Pairwise pruning with |Pearson correlation| as the redundancy measure.
template <typename Observer>
PruneMask prune_pcc(const ActivationMatrix& x, double threshold, int max_itr, std::uint64_t seed,
                    Observer&& observe) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidParameter("PCC threshold must lie in (0, 1)");
  x.validate();
  PruneMask mask = prune_pairwise_with(
      x.neurons(), [&](Index a, Index b) { return abs_pearson(x.values.col(a), x.values.col(b)); }, threshold,
      max_itr, seed, std::forward<Observer>(observe));
  mask.method = PruneMethod::pairwise_pcc;
  mask.layer_id = x.layer_id;
  return mask;
}

inline PruneMask prune_pcc(const ActivationMatrix& x, double threshold, int max_itr, std::uint64_t seed) {
  return prune_pcc(x, threshold, max_itr, seed, [](const SampledPair&) {});
}

}  // namespace mipruner
