#include <cmath>

#include <gtest/gtest.h>

#include "mipruner/gram_kernel.hpp"
#include "support.hpp"

using namespace mipruner;

TEST(RbfGram, TwoPointsByHand) {
  Vector z(2);
  z << 0.0, 1.0;
  const auto g = rbf_gram(z, 1.0);
  const double off = std::exp(-0.5) / 2.0;
  EXPECT_DOUBLE_EQ(g.matrix()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g.matrix()(1, 1), 0.5);
  EXPECT_NEAR(g.matrix()(0, 1), off, 1e-15);
  EXPECT_NEAR(g.matrix()(1, 0), off, 1e-15);
  EXPECT_EQ(g.source_sigma(), 1.0);
}

TEST(RbfGram, TraceOneSymmetricBounded) {
  Rng rng(2);
  const Matrix x = fixtures::gaussian_matrix(rng, 60, 3);
  const auto g = rbf_gram(x, 0.7);
  EXPECT_NEAR(g.matrix().trace(), 1.0, 1e-12);
  EXPECT_EQ((g.matrix() - g.matrix().transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GE(g.matrix().minCoeff(), 0.0);
  EXPECT_LE(g.matrix().maxCoeff(), 1.0 / 60 + 1e-15);
}

TEST(RbfGram, ConstantColumnIsConstantGram) {
  const Vector z = Vector::Constant(5, 3.0);
  const auto g = rbf_gram(z, 1.0);
  EXPECT_TRUE(g.is_constant());
  EXPECT_NEAR((g.matrix().array() - 0.2).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(RbfGram, RejectsBadInput) {
  Vector z(3);
  z << 0.0, 1.0, 2.0;
  EXPECT_THROW(rbf_gram(z, 0.0), InvalidParameter);
  EXPECT_THROW(rbf_gram(z, -1.0), InvalidParameter);
  EXPECT_THROW(rbf_gram(z, std::nan("")), InvalidParameter);
  EXPECT_THROW(rbf_gram(Vector::Zero(1), 1.0), InvalidParameter);
  z(1) = std::nan("");
  EXPECT_THROW(rbf_gram(z, 1.0), InvalidData);
}

TEST(Eigenvalues, TwoPointSpectrum) {
  Vector z(2);
  z << 0.0, 1.0;
  const Vector ev = sym_eigenvalues(rbf_gram(z, 1.0));
  ASSERT_EQ(ev.size(), 2);
  EXPECT_NEAR(ev(0), (1.0 + std::exp(-0.5)) / 2.0, 1e-14);
  EXPECT_NEAR(ev(1), (1.0 - std::exp(-0.5)) / 2.0, 1e-14);
}

TEST(Eigenvalues, NonnegativeSumOneDescending) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = fixtures::gaussian_matrix(rng, 40, 2);
    const Vector ev = sym_eigenvalues(rbf_gram(x, 0.05 + rng.uniform() * 5.0));
    EXPECT_GE(ev.minCoeff(), 0.0);
    EXPECT_NEAR(ev.sum(), 1.0, 1e-12);
    for (Index i = 1; i < ev.size(); ++i) EXPECT_GE(ev(i - 1), ev(i));
  }
}

TEST(Eigenvalues, ConstantAndIdentityShortcuts) {
  const Vector c = sym_eigenvalues(rbf_gram(Vector::Constant(4, 1.0), 1.0));
  EXPECT_EQ(c(0), 1.0);
  EXPECT_EQ(c.tail(3).cwiseAbs().maxCoeff(), 0.0);
  // Far-apart points at a small width: off-diagonals underflow to zero.
  Vector z(4);
  z << 0.0, 100.0, 200.0, 300.0;
  const Vector d = sym_eigenvalues(rbf_gram(z, 0.1));
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(d(i), 0.25);
}

TEST(Hadamard, JointIsRenormalizedProduct) {
  Rng rng(6);
  const Vector a = fixtures::gaussian_matrix(rng, 30, 1).col(0);
  const Vector b = fixtures::gaussian_matrix(rng, 30, 1).col(0);
  const auto ga = rbf_gram(a, 0.8);
  const auto gb = rbf_gram(b, 1.3);
  const auto j = hadamard_joint(ga, gb);
  Matrix expect = ga.matrix().cwiseProduct(gb.matrix());
  expect /= expect.trace();
  EXPECT_LT((j.matrix() - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(j.matrix().trace(), 1.0, 1e-12);
}

TEST(Hadamard, ProductOfGramsEqualsJointKernel) {
  // Product of two RBF kernels equals the 2-d kernel with combined width
  // when both widths agree.
  Rng rng(8);
  const Matrix x = fixtures::gaussian_matrix(rng, 25, 2);
  const auto joint = hadamard_joint(rbf_gram(x.col(0), 0.9), rbf_gram(x.col(1), 0.9));
  const auto direct = rbf_gram(x, 0.9);
  EXPECT_LT((joint.matrix() - direct.matrix()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Hadamard, ConstantOperandReturnsOther) {
  Rng rng(10);
  const Vector a = fixtures::gaussian_matrix(rng, 12, 1).col(0);
  const auto ga = rbf_gram(a, 1.0);
  const auto j = hadamard_joint(ga, rbf_gram(Vector::Constant(12, 2.0), 1.0));
  EXPECT_EQ((j.matrix() - ga.matrix()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Hadamard, SizeMismatchThrows) {
  EXPECT_THROW(hadamard_joint(rbf_gram(Vector::LinSpaced(3, 0, 1), 1.0), rbf_gram(Vector::LinSpaced(4, 0, 1), 1.0)),
               InvalidParameter);
}

TEST(ActivationMatrix, Validation) {
  auto a = fixtures::as_activations(Matrix::Ones(3, 2));
  EXPECT_NO_THROW(a.validate());
  a.sample_fraction = 0.0;
  EXPECT_THROW(a.validate(), InvalidData);
  a.sample_fraction = 1.0;
  a.values(1, 1) = INFINITY;
  EXPECT_THROW(a.validate(), InvalidData);
  EXPECT_THROW(fixtures::as_activations(Matrix::Ones(1, 2)).validate(), InvalidData);
}
