#pragma once

// Budgeted pruning: MI -> distance, classical MDS, seeded k-means over the
// embedding, one representative per cluster, and selection of the best
// seed by the KL proxy between original and pruned outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <vector>

#include "mipruner/entropy_mi.hpp"
#include "mipruner/eval_metrics.hpp"
#include "mipruner/log.hpp"
#include "mipruner/prune_mask.hpp"
#include "mipruner/random.hpp"

namespace mipruner {

/// d = A * exp(-I), zero on the diagonal. Needs every pair.
inline Matrix mi_to_distance(const MIMatrix& mi, double a = 1.0) {
  if (!(a > 0.0)) throw InvalidParameter("distance constant A must be positive");
  if (!mi.complete()) throw InvalidParameter("MI matrix is partial; clustering needs every pair");
  Matrix d = (-mi.values().array()).exp().matrix() * a;
  d.diagonal().setZero();
  return d;
}

struct MDSEmbedding {
  Matrix coords;  // K x m
  double distance_constant = 1.0;
  Vector eigen_spectrum;  // retained eigenvalues, descending

  Index dims() const { return coords.cols(); }
};

/// Classical (Torgerson) MDS of a symmetric distance matrix into m dimensions.
inline MDSEmbedding classical_mds(const Matrix& d, Index m, double distance_constant = 1.0) {
  const Index n = d.rows();
  if (n < 1 || d.cols() != n) throw InvalidParameter("distance matrix must be square and non-empty");
  if (m < 1) throw InvalidParameter("embedding dimension must be at least 1");
  if (!d.allFinite() || (d.array() < 0.0).any()) throw InvalidData("distances must be finite and nonnegative");
  const double scale = std::max(d.cwiseAbs().maxCoeff(), 1e-300);
  if ((d - d.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw InvalidData("distance matrix is not symmetric");
  if (d.diagonal().cwiseAbs().maxCoeff() != 0.0) throw InvalidData("distance matrix diagonal must be zero");

  const Matrix sq = d.cwiseProduct(d);
  const Vector row_mean = sq.rowwise().mean();
  const double grand_mean = sq.mean();
  Matrix b(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) b(i, j) = -0.5 * (sq(i, j) - row_mean(i) - row_mean(j) + grand_mean);
  b = 0.5 * (b + b.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> solver(b);
  if (solver.info() != Eigen::Success) throw NumericalError("MDS eigendecomposition did not converge");
  const Vector& values = solver.eigenvalues();  // ascending
  const Matrix& vectors = solver.eigenvectors();

  const double top = std::max(values(n - 1), 0.0);
  const double tol = std::max(1e-12 * top, 1e-300);
  Index positive = 0;
  for (Index i = n - 1; i >= 0 && values(i) > tol; --i) ++positive;

  Index keep = std::min(m, n);
  if (positive < keep) {
    std::ostringstream os;
    os << "only " << positive << " positive MDS eigenvalues; embedding dimension reduced from " << m;
    warn(os.str());
    keep = std::max<Index>(positive, 1);
  }

  MDSEmbedding emb;
  emb.distance_constant = distance_constant;
  emb.coords = Matrix::Zero(n, keep);
  emb.eigen_spectrum = Vector::Zero(keep);
  for (Index a = 0; a < keep && a < positive; ++a) {
    const Index src = n - 1 - a;
    emb.eigen_spectrum(a) = values(src);
    Vector axis = vectors.col(src) * std::sqrt(values(src));
    Index big = 0;
    for (Index i = 1; i < n; ++i)
      if (std::abs(axis(i)) > std::abs(axis(big))) big = i;
    if (axis(big) < 0.0) axis = -axis;
    emb.coords.col(a) = axis;
  }
  return emb;
}

namespace detail {

inline double sq_dist(const Matrix& a, Index i, const Matrix& b, Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

}  // namespace detail

/// Seeded k-means (k-means++ seeding, at most 300 Lloyd iterations, relative
/// inertia tolerance 1e-4). Every cluster is non-empty on return.
inline std::vector<int> cluster_neurons(const MDSEmbedding& emb, int clusters, std::uint64_t seed) {
  const Matrix& x = emb.coords;
  const Index n = x.rows();
  if (clusters < 1 || clusters > n) {
    std::ostringstream os;
    os << "cluster count " << clusters << " outside [1, " << n << "]";
    throw InvalidParameter(os.str());
  }
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  if (clusters == n) {
    for (Index i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = static_cast<int>(i);
    return assign;
  }

  Rng rng(seed);
  Matrix centroids(clusters, x.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  Vector best_d2 = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Index first = static_cast<Index>(rng.index(static_cast<std::size_t>(n)));
  centroids.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = true;
  for (int c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      best_d2(i) = std::min(best_d2(i), detail::sq_dist(x, i, centroids, c - 1));
      total += best_d2(i);
    }
    Index pick = -1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (Index i = 0; i < n; ++i) {
        if (best_d2(i) <= 0.0) continue;
        pick = i;
        target -= best_d2(i);
        if (target < 0.0) break;
      }
    } else {
      // Every point already coincides with a centroid.
      std::vector<Index> rest;
      for (Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) rest.push_back(i);
      pick = rest[rng.index(rest.size())];
    }
    centroids.row(c) = x.row(pick);
    chosen[static_cast<std::size_t>(pick)] = true;
  }

  std::vector<Index> counts(static_cast<std::size_t>(clusters));
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 300; ++iter) {
    std::fill(counts.begin(), counts.end(), 0);
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = detail::sq_dist(x, i, centroids, 0);
      for (int c = 1; c < clusters; ++c) {
        const double dd = detail::sq_dist(x, i, centroids, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      ++counts[static_cast<std::size_t>(best)];
    }
    // Re-seed empty clusters from the point farthest from its centroid.
    for (int c = 0; c < clusters; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Index far = -1;
      double fd = -1.0;
      for (Index i = 0; i < n; ++i) {
        const int ci = assign[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(ci)] < 2) continue;
        const double dd = detail::sq_dist(x, i, centroids, ci);
        if (dd > fd) {
          fd = dd;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
    }
    centroids.setZero();
    for (Index i = 0; i < n; ++i) centroids.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < clusters; ++c) centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);

    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) inertia += detail::sq_dist(x, i, centroids, assign[static_cast<std::size_t>(i)]);
    if (inertia == 0.0 || (std::isfinite(prev_inertia) && prev_inertia - inertia <= 1e-4 * prev_inertia)) break;
    prev_inertia = inertia;
  }
  return assign;
}

/// Keeps, per cluster, the neuron nearest the cluster centroid (ties: lower index).
inline PruneMask select_representatives(const std::vector<int>& assignment, const MDSEmbedding& emb) {
  const Index n = emb.coords.rows();
  if (static_cast<Index>(assignment.size()) != n) throw InvalidParameter("assignment length differs from K");
  if (assignment.empty()) throw InvalidParameter("empty assignment");
  const int clusters = *std::max_element(assignment.begin(), assignment.end()) + 1;
  if (*std::min_element(assignment.begin(), assignment.end()) < 0) throw InvalidParameter("negative cluster id");

  Matrix centroids = Matrix::Zero(clusters, emb.coords.cols());
  std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
  for (Index i = 0; i < n; ++i) {
    centroids.row(assignment[static_cast<std::size_t>(i)]) += emb.coords.row(i);
    ++counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
  }
  std::vector<Index> rep(static_cast<std::size_t>(clusters), -1);
  std::vector<double> rep_d(static_cast<std::size_t>(clusters), 0.0);
  for (int c = 0; c < clusters; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) /= counts[static_cast<std::size_t>(c)];
  for (Index i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)]);
    const double dd = detail::sq_dist(emb.coords, i, centroids, static_cast<Index>(c));
    if (rep[c] < 0 || dd < rep_d[c]) {
      rep[c] = i;
      rep_d[c] = dd;
    }
  }
  PruneMask mask;
  mask.keep.assign(static_cast<std::size_t>(n), false);
  for (Index r : rep)
    if (r >= 0) mask.keep[static_cast<std::size_t>(r)] = true;
  mask.method = PruneMethod::cluster_mi;
  mask.target_keep = static_cast<int>(mask.kept());
  return mask;
}

struct SeedSelection {
  PruneMask mask;
  std::size_t index = 0;
  double proxy = 0.0;
  std::vector<double> proxies;
};

/// Candidate with the smallest KL proxy against the original outputs;
/// ties go to the lower seed.
inline SeedSelection select_best_seed(const std::vector<PruneMask>& candidates, const Matrix& orig_outputs,
                                      const std::vector<Matrix>& masked_outputs) {
  if (candidates.empty()) throw InvalidParameter("no candidate masks");
  if (candidates.size() != masked_outputs.size()) throw InvalidParameter("one output block per candidate required");
  check_probability_rows(orig_outputs, "original output");
  SeedSelection out;
  out.proxies.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    check_probability_rows(masked_outputs[i], "masked output");
    const double p = kl_proxy(orig_outputs, masked_outputs[i]);
    out.proxies.push_back(p);
    const bool better = i == 0 || p < out.proxy ||
                        (p == out.proxy && candidates[i].seed < candidates[out.index].seed);
    if (better) {
      out.index = i;
      out.proxy = p;
    }
  }
  out.mask = candidates[out.index];
  return out;
}

struct ClusterOptions {
  int target_keep = 1;
  Index mds_dim = 0;  // 0: min(16, K - 1)
  double distance_constant = 1.0;
  std::vector<std::uint64_t> seeds{0};
};

inline Index default_mds_dim(Index k) { return std::max<Index>(1, std::min<Index>(16, k - 1)); }

inline std::vector<std::uint64_t> seed_range(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = base + i;
  return seeds;
}

struct ClusterResult {
  SeedSelection selection;
  MDSEmbedding embedding;
  std::vector<PruneMask> candidates;
};

/// Full budgeted path. `outputs_for(mask)` returns the probability rows of
/// the model with `mask` applied; `orig` are the unpruned rows.
template <typename OutputsFor>
ClusterResult prune_cluster(const MIMatrix& mi, const ClusterOptions& opt, const Matrix& orig,
                            OutputsFor&& outputs_for) {
  const Index k = mi.neurons();
  check_target_keep(static_cast<std::size_t>(k), opt.target_keep);
  if (opt.seeds.empty()) throw InvalidParameter("at least one clustering seed is required");
  ClusterResult res;
  res.embedding = classical_mds(mi_to_distance(mi, opt.distance_constant),
                                opt.mds_dim > 0 ? opt.mds_dim : default_mds_dim(k), opt.distance_constant);
  std::vector<Matrix> outputs;
  res.candidates.reserve(opt.seeds.size());
  outputs.reserve(opt.seeds.size());
  for (std::uint64_t seed : opt.seeds) {
    PruneMask m = select_representatives(cluster_neurons(res.embedding, opt.target_keep, seed), res.embedding);
    m.seed = seed;
    m.target_keep = opt.target_keep;
    outputs.push_back(outputs_for(m));
    res.candidates.push_back(std::move(m));
  }
  res.selection = select_best_seed(res.candidates, orig, outputs);
  return res;
}

}  // namespace mipruner
