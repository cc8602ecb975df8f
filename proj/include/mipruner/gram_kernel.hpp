#pragma once

// Kernel-matrix construction and the spectral primitives shared by the
// entropy estimators.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include "mipruner/error.hpp"

namespace mipruner {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// N samples x K neurons of post-activation values captured from one FC layer.
struct ActivationMatrix {
  Matrix values;
  std::string layer_id;
  double sample_fraction = 1.0;

  Index samples() const { return values.rows(); }
  Index neurons() const { return values.cols(); }

  void validate() const {
    if (values.rows() < 2 || values.cols() < 2) {
      std::ostringstream os;
      os << "activation matrix must be at least 2x2, got " << values.rows() << "x" << values.cols();
      throw InvalidData(os.str());
    }
    if (!values.allFinite()) throw InvalidData("activation matrix contains NaN or Inf");
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
      throw InvalidData("sample_fraction must lie in (0, 1]");
  }
};

/// Trace-normalized symmetric PSD kernel matrix.
class NormalizedGram {
public:
  NormalizedGram() = default;

  /// Takes an already trace-normalized matrix. `sigma` is the kernel width it came from.
  NormalizedGram(Matrix normalized, double sigma) : matrix_(std::move(normalized)), sigma_(sigma) {
    constant_ = matrix_.size() > 0 && (matrix_.array() == matrix_(0, 0)).all();
  }

  const Matrix& matrix() const { return matrix_; }
  double source_sigma() const { return sigma_; }
  Index size() const { return matrix_.rows(); }
  /// All entries identical, i.e. the Gram of a constant variable.
  bool is_constant() const { return constant_; }

  /// Checks symmetry (1e-12 relative) and unit trace (1e-9).
  void validate() const {
    if (matrix_.rows() != matrix_.cols() || matrix_.rows() < 1)
      throw InvalidData("gram matrix must be square and non-empty");
    if (!matrix_.allFinite()) throw InvalidData("gram matrix contains NaN or Inf");
    const double scale = std::max(matrix_.cwiseAbs().maxCoeff(), 1e-300);
    if ((matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw InvalidData("gram matrix is not symmetric");
    if (std::abs(matrix_.trace() - 1.0) > 1e-9) throw InvalidData("gram matrix trace differs from 1");
  }

private:
  Matrix matrix_;
  double sigma_ = 0.0;
  bool constant_ = false;
};

namespace detail {

inline void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    std::ostringstream os;
    os << "kernel width must be positive and finite, got " << sigma;
    throw InvalidParameter(os.str());
  }
}

}  // namespace detail

/// Pairwise squared Euclidean distances between the rows of `points`.
template <typename Derived>
Matrix squared_distances(const Eigen::MatrixBase<Derived>& points) {
  const Index n = points.rows();
  const Index d = points.cols();
  Matrix dist = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j + 1; i < n; ++i) {
      double acc = 0.0;
      for (Index c = 0; c < d; ++c) {
        const double diff = static_cast<double>(points(i, c)) - static_cast<double>(points(j, c));
        acc += diff * diff;
      }
      dist(i, j) = acc;
      dist(j, i) = acc;
    }
  }
  return dist;
}

/// Gaussian RBF Gram matrix of the rows of `points` (N x d, or an N-vector),
/// divided by its trace so each diagonal entry equals 1/N.
template <typename Derived>
NormalizedGram rbf_gram(const Eigen::MatrixBase<Derived>& points, double sigma) {
  detail::check_sigma(sigma);
  if (points.rows() < 2) throw InvalidParameter("rbf_gram needs at least two samples");
  if (!points.allFinite()) throw InvalidData("rbf_gram input contains NaN or Inf");

  const Index n = points.rows();
  Matrix kernel = squared_distances(points);
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  kernel = (-kernel.array() * inv_two_sigma_sq).exp().matrix();
  // exp(0) is exactly 1, so the trace is exactly N.
  kernel /= static_cast<double>(n);
  return NormalizedGram(std::move(kernel), sigma);
}

/// Eigenvalues of a normalized Gram, descending. Negative noise is clamped
/// to zero and the spectrum renormalized when the clamp moved the sum.
inline Vector sym_eigenvalues(const NormalizedGram& gram) {
  const Matrix& m = gram.matrix();
  const Index n = m.rows();
  Vector values;
  if (gram.is_constant()) {
    // Rank one: the only nonzero eigenvalue is the trace, 1 up to rounding.
    values = Vector::Zero(n);
    values(0) = 1.0;
    return values;
  }
  if ((m.array() - Matrix(m.diagonal().asDiagonal()).array()).abs().maxCoeff() == 0.0) {
    values = m.diagonal();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
      std::ostringstream os;
      os << "symmetric eigensolver did not converge (n=" << n << ", trace=" << m.trace()
         << ", frobenius=" << m.norm() << ", max|offdiag|="
         << (m - Matrix(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff() << ")";
      throw NumericalError(os.str());
    }
    values = solver.eigenvalues();
  }
  std::sort(values.data(), values.data() + n, std::greater<>());

  const double before = values.sum();
  values = values.cwiseMax(0.0);
  const double after = values.sum();
  if (std::abs(after - before) > 1e-12 && after > 0.0) values /= after;
  return values;
}

/// Entry-wise product of two Grams, trace-renormalized. The Gram of a
/// constant variable acts as the identity.
inline NormalizedGram hadamard_joint(const NormalizedGram& a, const NormalizedGram& b) {
  if (a.size() != b.size()) {
    std::ostringstream os;
    os << "hadamard_joint size mismatch: " << a.size() << " vs " << b.size();
    throw InvalidParameter(os.str());
  }
  if (a.is_constant()) return b;
  if (b.is_constant()) return a;
  Matrix joint = a.matrix().cwiseProduct(b.matrix());
  joint /= joint.trace();
  // 1/s^2 = 1/sa^2 + 1/sb^2 is the width the product would have for a shared input.
  const double sa = a.source_sigma();
  const double sb = b.source_sigma();
  const double sigma = (sa > 0.0 && sb > 0.0) ? 1.0 / std::sqrt(1.0 / (sa * sa) + 1.0 / (sb * sb)) : 0.0;
  return NormalizedGram(std::move(joint), sigma);
}

}  // namespace mipruner
