#pragma once

// Matrix-based Renyi alpha-order entropy, joint entropy and the pairwise
// mutual information built from them. All quantities are in bits.

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "mipruner/gram_kernel.hpp"
#include "mipruner/sigma_schedule.hpp"

namespace mipruner {

inline constexpr double kDefaultAlpha = 1.01;

using NeuronPair = std::pair<Index, Index>;

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha) || alpha == 1.0) {
    std::ostringstream os;
    os << "entropy order alpha must be positive and different from 1, got " << alpha;
    throw InvalidParameter(os.str());
  }
}

/// (1/(1-alpha)) * log2(sum lambda^alpha) of a clamped, unit-sum spectrum.
inline double renyi_entropy_of_spectrum(const Vector& spectrum, double alpha) {
  check_alpha(alpha);
  double power_sum = 0.0;
  for (Index i = 0; i < spectrum.size(); ++i) {
    const double lambda = spectrum(i);
    if (lambda > 0.0) power_sum += std::pow(lambda, alpha);
  }
  if (!(power_sum > 0.0)) throw NumericalError("spectrum has no positive eigenvalue");
  return std::log2(power_sum) / (1.0 - alpha);
}

inline double renyi_entropy(const NormalizedGram& gram, double alpha) {
  check_alpha(alpha);
  return renyi_entropy_of_spectrum(sym_eigenvalues(gram), alpha);
}

inline double joint_entropy(const NormalizedGram& a, const NormalizedGram& b, double alpha) {
  check_alpha(alpha);
  return renyi_entropy(hadamard_joint(a, b), alpha);
}

/// S(A) + S(B) - S(A, B) with A, B the RBF Grams of the two columns.
template <typename DerivedK, typename DerivedL>
double mutual_information(const Eigen::MatrixBase<DerivedK>& zk, const Eigen::MatrixBase<DerivedL>& zl,
                          double sigma_k, double sigma_l, double alpha) {
  check_alpha(alpha);
  if (zk.rows() != zl.rows()) throw InvalidParameter("mutual_information columns differ in length");
  const NormalizedGram a = rbf_gram(zk, sigma_k);
  const NormalizedGram b = rbf_gram(zl, sigma_l);
  const double sa = renyi_entropy(a, alpha);
  const double sb = renyi_entropy(b, alpha);
  return sa + sb - joint_entropy(a, b, alpha);
}

/// Symmetric K x K table of pairwise MI estimates; possibly partial.
class MIMatrix {
public:
  MIMatrix() = default;
  MIMatrix(Index neurons, double alpha)
      : values_(Matrix::Constant(neurons, neurons, std::nan(""))),
        known_(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(neurons, neurons, false)),
        alpha_(alpha) {
    values_.diagonal().setZero();
  }

  Index neurons() const { return values_.rows(); }
  double alpha() const { return alpha_; }
  const Matrix& values() const { return values_; }
  const std::vector<NeuronPair>& computed_pairs() const { return pairs_; }

  bool has(Index k, Index l) const { return k != l && known_(k, l); }

  double at(Index k, Index l) const {
    if (!has(k, l)) {
      std::ostringstream os;
      os << "mutual information for pair (" << k << ", " << l << ") was not computed";
      throw InvalidParameter(os.str());
    }
    return values_(k, l);
  }

  void set(Index k, Index l, double value) {
    if (k == l) throw InvalidParameter("MI matrix has no diagonal entries");
    if (!known_(k, l)) pairs_.emplace_back(std::min(k, l), std::max(k, l));
    values_(k, l) = value;
    values_(l, k) = value;
    known_(k, l) = known_(l, k) = true;
  }

  /// Every off-diagonal pair present.
  bool complete() const {
    const Index k = neurons();
    return static_cast<Index>(pairs_.size()) == k * (k - 1) / 2;
  }

private:
  Matrix values_;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> known_;
  double alpha_ = kDefaultAlpha;
  std::vector<NeuronPair> pairs_;
};

/// Lazily builds per-neuron Grams and memoizes pairwise MI for one layer.
class PairwiseMI {
public:
  PairwiseMI(const ActivationMatrix& x, std::vector<double> sigmas, double alpha)
      : x_(x), sigmas_(std::move(sigmas)), alpha_(alpha),
        grams_(static_cast<std::size_t>(x.neurons())), entropies_(static_cast<std::size_t>(x.neurons())) {
    check_alpha(alpha);
    x_.validate();
  }

  Index neurons() const { return x_.neurons(); }
  double alpha() const { return alpha_; }
  std::size_t evaluations() const { return memo_.size(); }

  double entropy(Index k) {
    marginal(k);
    return *entropies_[static_cast<std::size_t>(k)];
  }

  double operator()(Index k, Index l) {
    if (k == l) throw InvalidParameter("mutual information of a neuron with itself requested");
    const NeuronPair key{std::min(k, l), std::max(k, l)};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    // Evaluate in canonical order so the result does not depend on argument order.
    const NormalizedGram& a = marginal(key.first);
    const NormalizedGram& b = marginal(key.second);
    const double value = *entropies_[static_cast<std::size_t>(key.first)] +
                         *entropies_[static_cast<std::size_t>(key.second)] - joint_entropy(a, b, alpha_);
    memo_.emplace(key, value);
    return value;
  }

private:
  const NormalizedGram& marginal(Index k) {
    if (k < 0 || k >= x_.neurons()) throw InvalidParameter("neuron index out of range");
    if (static_cast<std::size_t>(k) >= sigmas_.size()) {
      std::ostringstream os;
      os << "no kernel width for neuron " << k << " (schedule covers " << sigmas_.size() << ")";
      throw InvalidParameter(os.str());
    }
    auto& slot = grams_[static_cast<std::size_t>(k)];
    if (!slot) {
      slot = rbf_gram(x_.values.col(k), sigmas_[static_cast<std::size_t>(k)]);
      entropies_[static_cast<std::size_t>(k)] = renyi_entropy(*slot, alpha_);
    }
    return *slot;
  }

  const ActivationMatrix& x_;
  std::vector<double> sigmas_;
  double alpha_;
  std::vector<std::optional<NormalizedGram>> grams_;
  std::vector<std::optional<double>> entropies_;
  std::map<NeuronPair, double> memo_;
};

/// MI for the requested pairs (all unordered pairs by default).
inline MIMatrix mi_matrix(const ActivationMatrix& x, const SigmaSchedule& sigmas, double alpha,
                          const std::optional<std::vector<NeuronPair>>& pairs = std::nullopt) {
  check_alpha(alpha);
  x.validate();
  MIMatrix out(x.neurons(), alpha);
  std::vector<NeuronPair> todo;
  if (pairs) {
    todo = *pairs;
  } else {
    for (Index k = 0; k < x.neurons(); ++k)
      for (Index l = k + 1; l < x.neurons(); ++l) todo.emplace_back(k, l);
  }
  if (todo.empty()) return out;
  for (const auto& [k, l] : todo) {
    if (k < 0 || l < 0 || k >= x.neurons() || l >= x.neurons() || k == l)
      throw InvalidParameter("requested pair is out of range or degenerate");
    if (static_cast<std::size_t>(std::max(k, l)) >= sigmas.neuron_sigmas.size())
      throw InvalidParameter("sigma schedule does not cover a requested neuron");
  }
  PairwiseMI estimator(x, sigmas.neuron_sigmas, alpha);
  for (const auto& [k, l] : todo) out.set(k, l, estimator(k, l));
  return out;
}

}  // namespace mipruner
