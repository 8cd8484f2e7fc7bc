#include <gtest/gtest.h>

#include <cmath>

#include "bridge/numerics.hpp"
#include "test_util.hpp"

using namespace bridge;
using namespace bridge::numerics;

namespace {

struct Flat {
  Matrix theta;
  template <typename F>
  void for_each(F&& f) {
    f(std::string("theta"), theta);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(std::string("theta"), theta);
  }
};

// Abramowitz-Stegun 7.1.26 erf, accurate to ~1.5e-7 and independent of std::erf.
double erf_as(double x) {
  const double sign = x < 0 ? -1.0 : 1.0;
  x = std::abs(x);
  const double t = 1.0 / (1.0 + 0.3275911 * x);
  const double y = 1.0 - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t +
                          0.254829592) * t * std::exp(-x * x);
  return sign * y;
}

}  // namespace

TEST(Gelu, ZeroIsZero) { EXPECT_EQ(gelu(0.0), 0.0); }

TEST(Gelu, ApproachesIdentityForLargeInput) { EXPECT_NEAR(gelu(10.0), 10.0, 1e-6); }

TEST(Gelu, OneMatchesIndependentErf) {
  const double oracle = 1.0 * 0.5 * (1.0 + erf_as(1.0 / std::sqrt(2.0)));
  EXPECT_NEAR(oracle, 0.841345, 1e-5);
  EXPECT_NEAR(gelu(1.0), 0.841345, 1e-5);
  EXPECT_NEAR(gelu(1.0), oracle, 1e-6);
}

TEST(Gelu, MonotoneOnGrid) {
  double prev = gelu(-6.0);
  for (int i = 1; i <= 1200; ++i) {
    const double x = -6.0 + 12.0 * i / 1200.0;
    const double y = gelu(x);
    // GeLU dips slightly below zero for negative inputs; it is monotone from its minimum near -0.75.
    if (x > -0.75) EXPECT_GE(y, prev - 1e-15) << x;
    prev = y;
  }
}

TEST(Gelu, ElementwiseOnMatrices) {
  Matrix m(1, 3);
  m << -1.0, 0.0, 2.0;
  const Matrix g = gelu(m);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(g(0, j), gelu(m(0, j)));
}

TEST(Gelu, GradientMatchesCentralDifference) {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    const double eps = 1e-6;
    const double numeric = (gelu(x + eps) - gelu(x - eps)) / (2 * eps);
    EXPECT_LT(relative_error(gelu_grad(x), numeric), 1e-8);
  }
}

TEST(RowSoftmax, ConstantRowIsUniform) {
  for (double c : {-7.0, 0.0, 3.5, 1e3}) {
    Matrix m = Matrix::Constant(1, 3, c);
    const Matrix p = row_softmax(m, 1.0);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(p(0, j), 1.0 / 3.0, 1e-15);
  }
}

TEST(RowSoftmax, SingleColumnIsOne) {
  std::mt19937_64 rng(3);
  const Matrix p = row_softmax(testutil::random_matrix(5, 1, rng), 0.3);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(p(i, 0), 1.0);
}

TEST(RowSoftmax, LogTwoGivesThirds) {
  Matrix m(1, 2);
  m << 0.0, std::log(2.0);
  const Matrix p = row_softmax(m, 1.0);
  EXPECT_NEAR(p(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 2.0 / 3.0, 1e-15);
}

TEST(RowSoftmax, RejectsNonPositiveTemperature) {
  const Matrix m = Matrix::Zero(2, 2);
  EXPECT_THROW(row_softmax(m, 0.0), std::invalid_argument);
  EXPECT_THROW(row_softmax(m, -1.0), std::invalid_argument);
}

TEST(RowSoftmax, RowsSumToOneOnWideRange) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m(4, 7);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    for (double t : {0.1, 1.0, 3.0}) {
      const Matrix p = row_softmax(m, t);
      for (int r = 0; r < 4; ++r) {
        EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
        EXPECT_GE(p.row(r).minCoeff(), 0.0);
      }
    }
  }
}

TEST(RowSoftmax, ShiftInvariant) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m(3, 5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    Matrix shifted = m;
    for (int r = 0; r < 3; ++r) shifted.row(r).array() += u(rng);
    EXPECT_LT((row_softmax(m, 0.7) - row_softmax(shifted, 0.7)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RowSoftmax, BackwardMatchesCentralDifference) {
  std::mt19937_64 rng(5);
  const Matrix m = testutil::random_matrix(3, 4, rng);
  const Matrix up = testutil::random_matrix(3, 4, rng);
  const double t = 0.5;
  const Matrix analytic = row_softmax_backward(row_softmax(m, t), up, t);
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    Matrix plus = m;
    Matrix minus = m;
    plus.data()[i] += eps;
    minus.data()[i] -= eps;
    const double numeric =
        ((row_softmax(plus, t).array() * up.array()).sum() - (row_softmax(minus, t).array() * up.array()).sum()) /
        (2 * eps);
    EXPECT_LT(relative_error(analytic.data()[i], numeric), 1e-5);
  }
}

TEST(Sigmoid, HalfAtZero) { EXPECT_EQ(sigmoid(0.0), 0.5); }

TEST(Sigmoid, Symmetric) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng);
    EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
  }
}

TEST(Sigmoid, LogThree) { EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15); }

TEST(Sigmoid, StrictlyInsideUnitInterval) {
  for (double x : {-30.0, -5.0, 5.0, 30.0}) {
    EXPECT_GT(sigmoid(x), 0.0);
    EXPECT_LT(sigmoid(x), 1.0);
  }
}

TEST(L2Normalize, ThreeFourFive) {
  Vector v(2);
  v << 3.0, 4.0;
  const Vector u = l2_normalize(v);
  EXPECT_NEAR(u(0), 0.6, 1e-15);
  EXPECT_NEAR(u(1), 0.8, 1e-15);
}

TEST(L2Normalize, UnitVectorIsFixed) {
  std::mt19937_64 rng(4);
  const Vector u = l2_normalize(testutil::random_vector(9, rng));
  EXPECT_NEAR(u.norm(), 1.0, 1e-12);
  EXPECT_LT((l2_normalize(u) - u).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(L2Normalize, ZeroVectorIsDegenerate) {
  EXPECT_THROW(l2_normalize(Vector::Zero(2)), DegenerateEmbedding);
}

TEST(L2Normalize, BackwardMatchesCentralDifference) {
  std::mt19937_64 rng(6);
  const Vector v = testutil::random_vector(5, rng);
  const Vector up = testutil::random_vector(5, rng);
  const Vector analytic = l2_normalize_backward(l2_normalize(v), up, v.norm());
  const double eps = 1e-6;
  for (int i = 0; i < 5; ++i) {
    Vector plus = v;
    Vector minus = v;
    plus(i) += eps;
    minus(i) -= eps;
    const double numeric = (l2_normalize(plus).dot(up) - l2_normalize(minus).dot(up)) / (2 * eps);
    EXPECT_LT(relative_error(analytic(i), numeric), 1e-5);
  }
}

TEST(GradCheck, QuadraticLoss) {
  std::mt19937_64 rng(7);
  Flat p{testutil::random_matrix(3, 4, rng)};
  LossFn<Flat> loss = [](const Flat& q, Flat* g) {
    if (g != nullptr) g->theta = 2.0 * q.theta;
    return q.theta.squaredNorm();
  };
  const GradCheckReport r = grad_check(loss, p, 1e-5, 1e-8);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-8);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].coordinates_checked, 12u);
}

TEST(GradCheck, ConstantLossHasZeroGradient) {
  Flat p{Matrix::Ones(2, 2)};
  const double eps = 1e-4;
  LossFn<Flat> loss = [](const Flat& q, Flat* g) {
    if (g != nullptr) g->theta = Matrix::Zero(q.theta.rows(), q.theta.cols());
    return 4.2;
  };
  const GradCheckReport r = grad_check(loss, p, eps, eps * eps);
  EXPECT_LE(r.max_rel_error, eps * eps);
}

TEST(GradCheck, DetectsWrongGradient) {
  Flat p{Matrix::Ones(2, 2)};
  LossFn<Flat> loss = [](const Flat& q, Flat* g) {
    if (g != nullptr) g->theta = 3.0 * q.theta;
    return q.theta.squaredNorm();
  };
  EXPECT_FALSE(grad_check(loss, p, 1e-5, 1e-4).passed);
}

TEST(GradCheck, RejectsNondeterministicLoss) {
  Flat p{Matrix::Ones(1, 1)};
  int calls = 0;
  LossFn<Flat> loss = [&calls](const Flat& q, Flat*) { return q.theta(0, 0) + (calls++); };
  EXPECT_THROW(grad_check(loss, p, 1e-5, 1e-4), NondeterministicLoss);
}

TEST(GradCheck, RejectsStepOutsideRange) {
  Flat p{Matrix::Ones(1, 1)};
  LossFn<Flat> loss = [](const Flat& q, Flat*) { return q.theta(0, 0); };
  EXPECT_THROW(grad_check(loss, p, 1e-2, 1e-4), std::invalid_argument);
  EXPECT_THROW(grad_check(loss, p, 1e-9, 1e-4), std::invalid_argument);
}

TEST(GradCheck, SubsamplesLargeTensors) {
  std::mt19937_64 rng(8);
  Flat p{testutil::random_matrix(50, 30, rng)};
  LossFn<Flat> loss = [](const Flat& q, Flat* g) {
    if (g != nullptr) g->theta = 2.0 * q.theta;
    return q.theta.squaredNorm();
  };
  const GradCheckReport r = grad_check(loss, p, 1e-5, 1e-6, 1, 100);
  EXPECT_EQ(r.entries[0].coordinates_checked, 100u);
  EXPECT_EQ(r.entries[0].coordinates_total, 1500u);
  EXPECT_TRUE(r.passed);
}

TEST(RelativeError, UsesUnitFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1e-3, 2e-3), 1e-3);
  EXPECT_DOUBLE_EQ(relative_error(100.0, 101.0), 1.0 / 101.0);
}
