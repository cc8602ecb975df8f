#pragma once

// A small FFN (linear -> exact GeLU -> linear) with synthetic blob data, so
// the pruning pipeline can be exercised end to end without an ML stack.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <vector>

#include "mipruner/eval_metrics.hpp"
#include "mipruner/gram_kernel.hpp"
#include "mipruner/prune_mask.hpp"
#include "mipruner/random.hpp"

namespace mipruner {

/// Inputs are built from `latent_dims` blob coordinates: input j copies
/// latent j mod latent_dims plus Gaussian noise of stddev `noise`. Zero
/// latent dims puts the blobs directly in input space.
struct RedundancyPlan {
  int latent_dims = 0;
  double noise = 0.1;
};

struct TaskSpec {
  int n_samples = 2000;
  int d_in = 16;
  int n_classes = 3;
  double separation = 4.0;  // distance between blob centres, in units of the blob stddev
  RedundancyPlan redundancy{4, 0.3};
};

struct Dataset {
  Matrix inputs;  // n x d_in
  std::vector<int> labels;
  int classes = 0;
};

namespace detail {

/// Blob centres: antipodal for two classes, random directions otherwise.
inline Matrix blob_centres(Rng& rng, int classes, int dims, double separation) {
  Matrix centres(classes, dims);
  for (int c = 0; c < classes; ++c) {
    Vector v(dims);
    for (int j = 0; j < dims; ++j) v(j) = rng.normal();
    if (classes == 2 && c == 1) {
      centres.row(1) = -centres.row(0);
      continue;
    }
    const double scale = classes == 2 ? separation / 2.0 : separation / std::numbers::sqrt2;
    centres.row(c) = v.normalized().transpose() * scale;
  }
  return centres;
}

}  // namespace detail

/// Seeded Gaussian-blob classification data.
inline Dataset synth_task(std::uint64_t seed, const TaskSpec& spec) {
  if (spec.n_samples < 1) throw InvalidParameter("synthetic task needs at least one sample");
  if (spec.d_in < 1 || spec.n_classes < 2) throw InvalidParameter("synthetic task needs d_in >= 1 and >= 2 classes");
  if (spec.redundancy.latent_dims < 0 || spec.redundancy.latent_dims > spec.d_in)
    throw InvalidParameter("latent dimension must lie in [0, d_in]");
  if (!(spec.separation >= 0.0) || !(spec.redundancy.noise >= 0.0))
    throw InvalidParameter("separation and noise must be nonnegative");

  Rng rng(seed);
  const int latent = spec.redundancy.latent_dims > 0 ? spec.redundancy.latent_dims : spec.d_in;
  const Matrix centres = detail::blob_centres(rng, spec.n_classes, latent, spec.separation);

  Dataset ds;
  ds.classes = spec.n_classes;
  ds.inputs.resize(spec.n_samples, spec.d_in);
  ds.labels.resize(static_cast<std::size_t>(spec.n_samples));
  Vector z(latent);
  for (int i = 0; i < spec.n_samples; ++i) {
    const int label = static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_classes)));
    ds.labels[static_cast<std::size_t>(i)] = label;
    for (int j = 0; j < latent; ++j) z(j) = centres(label, j) + rng.normal();
    if (spec.redundancy.latent_dims > 0) {
      for (int j = 0; j < spec.d_in; ++j) ds.inputs(i, j) = z(j % latent) + spec.redundancy.noise * rng.normal();
    } else {
      ds.inputs.row(i) = z.transpose();
    }
  }
  return ds;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - m).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

struct ToyFFN {
  Matrix w1;  // d_in x K
  Vector b1;  // K
  Matrix w2;  // K x C
  Vector b2;  // C

  Index d_in() const { return w1.rows(); }
  Index hidden() const { return w1.cols(); }
  Index classes() const { return w2.cols(); }

  Matrix pre_activation(const Matrix& x) const {
    if (x.cols() != d_in()) throw InvalidParameter("input width differs from model d_in");
    return (x * w1).rowwise() + b1.transpose();
  }

  Matrix hidden_activations(const Matrix& x) const { return pre_activation(x).unaryExpr(&gelu); }

  Matrix logits_from_hidden(const Matrix& h) const { return (h * w2).rowwise() + b2.transpose(); }

  Matrix forward(const Matrix& x) const { return softmax_rows(logits_from_hidden(hidden_activations(x))); }

  LayerShape shape() const { return LayerShape{d_in(), hidden(), classes(), 0}; }

  void validate() const {
    if (w1.cols() != b1.size() || w2.rows() != w1.cols() || w2.cols() != b2.size())
      throw InvalidData("toy model parameter shapes are inconsistent");
    if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite())
      throw InvalidData("toy model has non-finite parameters");
  }
};

struct TrainOptions {
  int steps = 500;
  double learning_rate = 0.05;
};

/// Full-batch gradient descent on softmax cross-entropy from a seeded init.
inline ToyFFN train_toy_ffn(const Dataset& data, int hidden, std::uint64_t seed, const TrainOptions& opt = {}) {
  const Index n = data.inputs.rows();
  const Index d = data.inputs.cols();
  if (n < 1 || hidden < 1 || data.classes < 2) throw InvalidParameter("training needs samples, hidden >= 1, classes >= 2");
  if (static_cast<std::size_t>(n) != data.labels.size()) throw InvalidParameter("label count differs from inputs");

  Rng rng(seed);
  ToyFFN m;
  m.w1.resize(d, hidden);
  m.w2.resize(hidden, data.classes);
  const double s1 = std::sqrt(2.0 / static_cast<double>(d));
  const double s2 = std::sqrt(1.0 / static_cast<double>(hidden));
  for (Index j = 0; j < hidden; ++j)
    for (Index i = 0; i < d; ++i) m.w1(i, j) = s1 * rng.normal();
  for (Index j = 0; j < data.classes; ++j)
    for (Index i = 0; i < hidden; ++i) m.w2(i, j) = s2 * rng.normal();
  m.b1 = Vector::Zero(hidden);
  m.b2 = Vector::Zero(data.classes);

  Matrix onehot = Matrix::Zero(n, data.classes);
  for (Index r = 0; r < n; ++r) onehot(r, data.labels[static_cast<std::size_t>(r)]) = 1.0;

  const double inv_n = 1.0 / static_cast<double>(n);
  for (int step = 0; step < opt.steps; ++step) {
    const Matrix z1 = m.pre_activation(data.inputs);
    const Matrix h = z1.unaryExpr(&gelu);
    const Matrix p = softmax_rows(m.logits_from_hidden(h));

    double loss = 0.0;
    for (Index r = 0; r < n; ++r) loss -= std::log(std::max(p(r, data.labels[static_cast<std::size_t>(r)]), 1e-300));
    loss *= inv_n;
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "toy training diverged at step " << step << " (loss " << loss << ", lr " << opt.learning_rate
         << ", |w1| " << m.w1.norm() << ", |w2| " << m.w2.norm() << ")";
      throw TrainingError(os.str());
    }

    const Matrix dlogits = (p - onehot) * inv_n;
    const Matrix dh = dlogits * m.w2.transpose();
    const Matrix dz1 = dh.cwiseProduct(z1.unaryExpr(&gelu_grad));
    m.w2 -= opt.learning_rate * (h.transpose() * dlogits);
    m.b2 -= opt.learning_rate * dlogits.colwise().sum().transpose();
    m.w1 -= opt.learning_rate * (data.inputs.transpose() * dz1);
    m.b1 -= opt.learning_rate * dz1.colwise().sum().transpose();
  }
  return m;
}

/// Post-GeLU hidden values of FC1: the pruning substrate.
inline ActivationMatrix capture_activations(const ToyFFN& model, const Matrix& inputs, std::string layer_id = "ffn.fc1",
                                            double sample_fraction = 1.0) {
  ActivationMatrix a;
  a.values = model.hidden_activations(inputs);
  a.layer_id = std::move(layer_id);
  a.sample_fraction = sample_fraction;
  return a;
}

/// Softmax outputs with dropped hidden units zeroed; survivors untouched.
inline Matrix forward_with_mask(const ToyFFN& model, const PruneMask& mask, const Matrix& inputs) {
  if (mask.size() != static_cast<std::size_t>(model.hidden()))
    throw InvalidParameter("mask length differs from the model's hidden width");
  if (mask.kept() == 0) throw InvalidParameter("mask drops every hidden unit");
  Matrix h = model.hidden_activations(inputs);
  for (Index j = 0; j < h.cols(); ++j)
    if (!mask.keep[static_cast<std::size_t>(j)]) h.col(j).setZero();
  return softmax_rows(model.logits_from_hidden(h));
}

/// The physically smaller model: dropped FC1 columns and FC2 rows removed.
inline ToyFFN remove_units(const ToyFFN& model, const PruneMask& mask) {
  if (mask.size() != static_cast<std::size_t>(model.hidden()))
    throw InvalidParameter("mask length differs from the model's hidden width");
  const auto kept = mask.kept_indices();
  if (kept.empty()) throw InvalidParameter("mask drops every hidden unit");
  ToyFFN out;
  out.w1.resize(model.d_in(), static_cast<Index>(kept.size()));
  out.b1.resize(static_cast<Index>(kept.size()));
  out.w2.resize(static_cast<Index>(kept.size()), model.classes());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto src = static_cast<Index>(kept[i]);
    const auto dst = static_cast<Index>(i);
    out.w1.col(dst) = model.w1.col(src);
    out.b1(dst) = model.b1(src);
    out.w2.row(dst) = model.w2.row(src);
  }
  out.b2 = model.b2;
  return out;
}

}  // namespace mipruner
