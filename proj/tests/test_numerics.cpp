#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace distlq;
using testing_support::random_matrix;

TEST(TimeGrid, NodesAndStep) {
  TimeGrid g(0.0, 2.0, 8);
  EXPECT_EQ(g.num_nodes(), 9);
  EXPECT_DOUBLE_EQ(g.step(), 0.25);
  EXPECT_DOUBLE_EQ(g.time(8), 2.0);
  EXPECT_THROW(TimeGrid(1.0, 1), Error);
}

TEST(Trajectory, LinearInterpolation) {
  TimeGrid g(1.0, 2);
  VectorTrajectory x(g, {Vector::Constant(1, 0.0), Vector::Constant(1, 1.0), Vector::Constant(1, 4.0)});
  EXPECT_NEAR(x.at(0.25)(0), 0.5, 1e-15);
  EXPECT_NEAR(x.at(0.75)(0), 2.5, 1e-15);
  EXPECT_NEAR(x.at(1.0)(0), 4.0, 1e-15);
}

TEST(Integrator, RK4MatchesExponentialBothDirections) {
  TimeGrid g(1.0, 100);
  auto fwd = integrate_ode<Vector>([](double, const Vector& x) -> Vector { return -2.0 * x; },
                                   Vector::Constant(1, 1.0), g, Direction::forward);
  EXPECT_NEAR(fwd.back()(0), std::exp(-2.0), 1e-9);
  auto bwd = integrate_ode<Vector>([](double, const Vector& x) -> Vector { return -2.0 * x; },
                                   Vector::Constant(1, 1.0), g, Direction::backward);
  EXPECT_NEAR(bwd.front()(0), std::exp(2.0), 1e-7);
}

TEST(Integrator, FourthOrderConvergence) {
  auto err = [](int steps) {
    TimeGrid g(1.0, steps);
    auto x = integrate_ode<Vector>([](double t, const Vector& v) -> Vector { return Vector::Constant(1, std::cos(t) * v(0)); },
                                   Vector::Constant(1, 1.0), g, Direction::forward);
    return std::abs(x.back()(0) - std::exp(std::sin(1.0)));
  };
  const double ratio = err(20) / err(40);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(Integrator, DivergenceNamesNode) {
  TimeGrid g(1.0, 10);
  EXPECT_THROW(integrate_ode<Vector>([](double, const Vector& x) -> Vector { return Vector::Constant(1, 1e300 * x(0) * x(0)); },
                                     Vector::Constant(1, 1e10), g, Direction::forward),
               IntegrationDivergence);
}

TEST(Quadrature, ExactForCubicsEvenAndOddSteps) {
  for (int steps : {6, 7}) {
    TimeGrid g(0.0, 2.0, steps);
    std::vector<double> f;
    for (int j = 0; j < g.num_nodes(); ++j) {
      const double t = g.time(j);
      f.push_back(t * t * t - 2.0 * t + 1.0);
    }
    EXPECT_NEAR(integrate_scalar(g, f), 4.0 - 4.0 + 2.0, 1e-12) << steps;
  }
}

TEST(MatrixExponential, AgreesWithRK4Oracle) {
  std::mt19937 rng(3);
  const Matrix M = random_matrix(rng, 3, 3);
  TimeGrid g(0.7, 2000);
  auto Phi = integrate_matrix_ode([&](double, const Matrix& F) -> Matrix { return M * F; }, Matrix::Identity(3, 3), g,
                                  Direction::forward);
  EXPECT_LT((matrix_exponential(M, 0.7) - Phi.back()).norm(), 1e-10);
  EXPECT_LT((matrix_exponential(M, 0.0) - Matrix::Identity(3, 3)).norm(), 1e-15);
}

TEST(PseudoInverse, PenroseConditions) {
  std::mt19937 rng(5);
  const Matrix M = random_matrix(rng, 4, 2) * random_matrix(rng, 2, 3);  // rank 2
  const Matrix X = pseudo_inverse(M);
  EXPECT_LT((M * X * M - M).norm(), 1e-10);
  EXPECT_LT((X * M * X - X).norm(), 1e-10);
  EXPECT_LT(((M * X).transpose() - M * X).norm(), 1e-10);
  EXPECT_LT(((X * M).transpose() - X * M).norm(), 1e-10);
}

TEST(PseudoInverse, ZeroMatrix) {
  EXPECT_EQ(pseudo_inverse(Matrix::Zero(2, 3)).norm(), 0.0);
}

TEST(Lyapunov, ResidualOnRandomStableSystems) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial % 4;
    Matrix Z = random_matrix(rng, n, n);
    Z -= (spectral_abscissa(Z) + 0.5) * Matrix::Identity(n, n);
    const Matrix C = random_matrix(rng, n, n);
    const Matrix V = C * C.transpose();
    const Matrix P = solve_lyapunov(Z, V);
    EXPECT_LT((Z.transpose() * P + P * Z + V).norm(), 1e-10 * (1 + V.norm()));
    EXPECT_GE(min_symmetric_eigenvalue(P), -1e-12);
  }
}

TEST(Lyapunov, ScalarClosedForm) {
  // 2 z p + v = 0
  const Matrix P = solve_lyapunov(Matrix::Constant(1, 1, -0.5), Matrix::Constant(1, 1, 3.0));
  EXPECT_NEAR(P(0, 0), 3.0, 1e-14);
}

TEST(Lyapunov, SingularPairThrows) {
  Matrix Z(2, 2);
  Z << 1, 0, 0, -1;
  EXPECT_THROW(solve_lyapunov(Z, Matrix::Identity(2, 2)), LyapunovError);
  EXPECT_NEAR(min_eigenvalue_pair_sum(Z), 0.0, 1e-15);
}

TEST(Spectral, AbscissaAndNorms) {
  Matrix Z(2, 2);
  Z << -1, 5, 0, -3;
  EXPECT_NEAR(spectral_abscissa(Z), -1.0, 1e-12);
  Matrix D = Matrix::Zero(2, 2);
  D.diagonal() << 3, -4;
  EXPECT_NEAR(spectral_norm(D), 4.0, 1e-12);
}

TEST(PsdOrder, Slack) {
  const Matrix A = Matrix::Identity(2, 2);
  const Matrix B = A + 1e-9 * Matrix::Identity(2, 2);
  EXPECT_TRUE(psd_order_holds(B, A));
  EXPECT_FALSE(psd_order_holds(A, B));
  EXPECT_TRUE(psd_order_holds(A, B, 1e-8));
}

TEST(InverseSqrt, SquaresToInverse) {
  Matrix R(2, 2);
  R << 2, 0.5, 0.5, 1;
  const Matrix W = inverse_sqrt_spd(R);
  EXPECT_LT((W * R * W - Matrix::Identity(2, 2)).norm(), 1e-12);
}
