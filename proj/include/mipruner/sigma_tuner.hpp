#pragma once

// Per-neuron kernel-width estimation. The layer width comes from Scott's
// rule, each neuron's width maximizes kernel alignment with the layer Gram,
// and per-batch optima are folded with an exponential moving average.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "mipruner/gram_kernel.hpp"
#include "mipruner/log.hpp"
#include "mipruner/random.hpp"
#include "mipruner/sigma_schedule.hpp"

namespace mipruner {

/// gamma * N^(-1/(4+d)).
inline double scott_sigma(Index samples, Index dims, double gamma) {
  if (samples < 2) throw InvalidParameter("scott_sigma needs at least two samples");
  if (dims < 1) throw InvalidParameter("scott_sigma needs dimensionality >= 1");
  if (!(gamma > 0.0)) throw InvalidParameter("scott_sigma needs gamma > 0");
  return gamma * std::pow(static_cast<double>(samples), -1.0 / (4.0 + static_cast<double>(dims)));
}

/// Normalized Frobenius inner product of two kernel matrices.
inline double alignment(const NormalizedGram& k1, const NormalizedGram& k2) {
  if (k1.size() != k2.size()) throw InvalidParameter("alignment of Grams with different sizes");
  const double n1 = k1.matrix().norm();
  const double n2 = k2.matrix().norm();
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw NumericalError("alignment of a zero-norm kernel matrix");
  return k1.matrix().cwiseProduct(k2.matrix()).sum() / (n1 * n2);
}

inline double ema_update(double prev, double current_opt, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    std::ostringstream os;
    os << "EMA coefficient must lie in [0, 1], got " << beta;
    throw InvalidParameter(os.str());
  }
  if (beta == 1.0) return prev;
  if (beta == 0.0) return current_opt;
  return beta * prev + (1.0 - beta) * current_opt;
}

namespace detail {

template <typename Derived>
double column_stddev(const Eigen::MatrixBase<Derived>& column) {
  const double mean = column.mean();
  const double var = (column.array() - mean).square().sum() / static_cast<double>(column.size());
  return std::sqrt(var);
}

}  // namespace detail

/// Effective layer width used with raw activations: the Scott width for
/// (N, d) on samples rescaled by 1/(sqrt(d) * rms column stddev).
template <typename Derived>
double layer_sigma(const Eigen::MatrixBase<Derived>& batch, double gamma) {
  const Index d = batch.cols();
  double var = 0.0;
  for (Index c = 0; c < d; ++c) {
    const double s = detail::column_stddev(batch.col(c));
    var += s * s;
  }
  const double rms = std::sqrt(var / static_cast<double>(d));
  const double scott = scott_sigma(batch.rows(), d, gamma);
  return rms > 0.0 ? scott * std::sqrt(static_cast<double>(d)) * rms : scott;
}

/// Gram of all neurons of a batch treated as one d = K dimensional variable.
template <typename Derived>
NormalizedGram layer_gram(const Eigen::MatrixBase<Derived>& batch, double gamma) {
  return rbf_gram(batch, layer_sigma(batch, gamma));
}

/// Candidate widths for one neuron column: the grid around
/// stddev(column) * scott_sigma(N, 1, gamma).
template <typename Derived>
std::vector<double> neuron_grid(const Eigen::MatrixBase<Derived>& column, double gamma, const GridSpec& spec) {
  const double scott = scott_sigma(column.rows(), 1, gamma);
  const double sd = detail::column_stddev(column);
  return spec.around(sd > 0.0 ? sd * scott : scott);
}

struct NeuronTuning {
  double sigma = 0.0;
  std::size_t index = 0;  // position in the ascending grid
  std::vector<double> grid;
  std::vector<double> alignments;

  bool at_endpoint() const { return grid.size() > 1 && (index == 0 || index + 1 == grid.size()); }
};

/// Full alignment curve over the grid and its argmax (ties toward smaller sigma).
template <typename Derived>
NeuronTuning tune_neuron_sigma_curve(const Eigen::MatrixBase<Derived>& column, const NormalizedGram& layer,
                                     std::vector<double> grid) {
  if (grid.empty()) throw InvalidParameter("sigma grid is empty");
  if (column.rows() != layer.size()) throw InvalidParameter("column length differs from layer Gram size");
  std::sort(grid.begin(), grid.end());
  NeuronTuning out;
  out.alignments.reserve(grid.size());
  double best = -1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double a = alignment(rbf_gram(column, grid[i]), layer);
    out.alignments.push_back(a);
    if (a > best) {
      best = a;
      out.index = i;
    }
  }
  out.sigma = grid[out.index];
  out.grid = std::move(grid);
  return out;
}

template <typename Derived>
double tune_neuron_sigma(const Eigen::MatrixBase<Derived>& column, const NormalizedGram& layer,
                         std::vector<double> grid) {
  return tune_neuron_sigma_curve(column, layer, std::move(grid)).sigma;
}

struct TuneOptions {
  double gamma = 1.0;
  double beta = 0.9;
  double alpha = 1.01;
  int batch_size = 100;
  GridSpec grid;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

/// Tunes every neuron's width over consecutive batches of (shuffled) rows.
inline SigmaSchedule tune_all(const ActivationMatrix& x, const TuneOptions& opt) {
  x.validate();
  opt.grid.validate();
  if (opt.batch_size < 2) throw InvalidParameter("tuning batch size must be at least 2");
  if (!(opt.gamma > 0.0)) throw InvalidParameter("gamma must be positive");
  if (!(opt.beta >= 0.0 && opt.beta <= 1.0)) throw InvalidParameter("beta must lie in [0, 1]");

  const Index n = x.samples();
  const Index k = x.neurons();
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  if (opt.shuffle) {
    Rng rng(opt.seed);
    rng.shuffle(std::span<Index>(rows));
  }

  Index batch = opt.batch_size;
  if (n < batch) {
    std::ostringstream os;
    os << "only " << n << " samples for tuning batch size " << batch << "; using a single batch";
    warn(os.str());
    batch = n;
  }
  // Trailing rows that do not fill a batch are not used.
  const Index batches = n / batch;

  SigmaSchedule out;
  out.gamma = opt.gamma;
  out.beta = opt.beta;
  out.alpha = opt.alpha;
  out.batch_size = static_cast<int>(batch);
  out.grid = opt.grid;
  out.neuron_sigmas.assign(static_cast<std::size_t>(k), 0.0);
  out.neuron_ranges.assign(static_cast<std::size_t>(k), {0.0, 0.0});

  std::size_t endpoint_hits = 0;
  Matrix rows_buf(batch, k);
  for (Index b = 0; b < batches; ++b) {
    for (Index r = 0; r < batch; ++r) rows_buf.row(r) = x.values.row(rows[static_cast<std::size_t>(b * batch + r)]);
    const double sigma_layer = layer_sigma(rows_buf, opt.gamma);
    const NormalizedGram layer = rbf_gram(rows_buf, sigma_layer);
    out.layer_sigma = b == 0 ? sigma_layer : ema_update(out.layer_sigma, sigma_layer, opt.beta);

    for (Index c = 0; c < k; ++c) {
      const auto col = rows_buf.col(c);
      NeuronTuning t = tune_neuron_sigma_curve(col, layer, neuron_grid(col, opt.gamma, opt.grid));
      if (t.at_endpoint()) ++endpoint_hits;
      const auto i = static_cast<std::size_t>(c);
      auto& range = out.neuron_ranges[i];
      if (b == 0) {
        out.neuron_sigmas[i] = t.sigma;
        range = {t.grid.front(), t.grid.back()};
      } else {
        out.neuron_sigmas[i] = ema_update(out.neuron_sigmas[i], t.sigma, opt.beta);
        range.first = std::min(range.first, t.grid.front());
        range.second = std::max(range.second, t.grid.back());
      }
    }
  }
  if (endpoint_hits > 0) {
    std::ostringstream os;
    os << endpoint_hits << " of " << k * batches
       << " neuron tunings hit a grid endpoint; consider widening the sigma grid";
    warn(os.str());
  }
  out.validate();
  return out;
}

}  // namespace mipruner
