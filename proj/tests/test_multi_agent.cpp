#include <cmath>
#include <complex>
#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/KroneckerProduct>

#include "support.hpp"

using namespace distlq;
using testing_support::random_matrix;

namespace {

MultiAgentSystem integrator_pair(double a, double b) {
  MultiAgentSystem s;
  s.topology = Topology(2, {{0, 1}}, 2.5);
  for (double x : {a, b}) {
    s.A.push_back(Matrix::Zero(1, 1));
    s.B.push_back(Matrix::Ones(1, 1));
    s.R.push_back(Matrix::Ones(1, 1));
    s.x0.push_back(Vector::Constant(1, x));
  }
  s.set_edge_weights_identity();
  return s;
}

// Stabilizing ARE solution from the stable eigenvectors of the Hamiltonian.
Matrix hamiltonian_are(const Matrix& A, const Matrix& S, const Matrix& Q) {
  const auto n = A.rows();
  Matrix H(2 * n, 2 * n);
  H << A, -S, -Q, -A.transpose();
  Eigen::ComplexEigenSolver<Matrix> es(H);
  Eigen::MatrixXcd X(2 * n, n);
  int k = 0;
  for (int i = 0; i < 2 * n; ++i)
    if (es.eigenvalues()(i).real() < 0) X.col(k++) = es.eigenvectors().col(i);
  EXPECT_EQ(k, n);
  const Eigen::MatrixXcd P = X.bottomRows(n) * X.topRows(n).inverse();
  return P.real();
}

}  // namespace

TEST(Qtilde, BlockRowSumsVanishExactly) {
  const auto sc = testing_support::load_fleet("ugv_example2.json");
  const Matrix Qt = build_Qtilde(sc.system);
  const Vector v = (Vector(4) << 1.25, -3, 0.5, 7).finished();
  Vector ones_v(20);
  for (int i = 0; i < 5; ++i) ones_v.segment(4 * i, 4) = v;
  EXPECT_EQ((Qt * ones_v).cwiseAbs().maxCoeff(), 0.0);
  const Matrix expected =
      Eigen::kroneckerProduct(Matrix(2.0 * sc.system.topology.laplacian()), Matrix::Identity(4, 4)).eval();
  EXPECT_EQ(Qt, expected);
}

TEST(Qtilde, OffGraphWeightIsRejected) {
  auto s = integrator_pair(1, -1);
  s.topology = Topology(3, {{0, 1}}, 2.5);
  s.A.push_back(Matrix::Zero(1, 1));
  s.B.push_back(Matrix::Ones(1, 1));
  s.R.push_back(Matrix::Ones(1, 1));
  s.x0.push_back(Vector::Zero(1));
  s.weights[{0, 2}] = Matrix::Ones(1, 1);
  EXPECT_THROW(build_Qtilde(s), StructuralError);
}

TEST(ARE, ScalarAndDoubleIntegratorClosedForms) {
  const auto one = Matrix::Ones(1, 1);
  EXPECT_NEAR(solve_are(Matrix::Zero(1, 1), one, one, one).P(0, 0), 1.0, 1e-10);
  Matrix A(2, 2), B(2, 1);
  A << 0, 1, 0, 0;
  B << 0, 1;
  const auto r = solve_are(A, B, Matrix::Identity(2, 2), one);
  Matrix P(2, 2);
  P << std::sqrt(3.0), 1, 1, std::sqrt(3.0);
  EXPECT_LT((r.P - P).norm(), 1e-9);
  EXPECT_LT(r.closed_loop_abscissa, 0.0);
}

TEST(ARE, MatchesHamiltonianOracleOnRandomSystems) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 2 + trial % 3, m = 1 + trial % 2;
    const Matrix A = random_matrix(rng, n, n), B = random_matrix(rng, n, m);
    const Matrix C = random_matrix(rng, n, n);
    const Matrix Q = C * C.transpose() + 0.1 * Matrix::Identity(n, n);
    const Matrix R = Matrix::Identity(m, m);
    const auto r = solve_are(A, B, Q, R);
    const Matrix oracle = hamiltonian_are(A, B * B.transpose(), Q);
    EXPECT_LT((r.P - oracle).norm(), 1e-7 * (1 + oracle.norm())) << trial;
  }
}

TEST(ARE, UGVResidualAndStability) {
  const auto sc = testing_support::load_fleet("ugv_example2.json");
  const auto r = solve_are_centralized(sc.system);
  const Matrix Qt = build_Qtilde(sc.system);
  EXPECT_LE(r.residual, 1e-8 * Qt.norm());
  EXPECT_GE(min_symmetric_eigenvalue(r.P), -1e-8 * r.P.norm());
  EXPECT_LT(r.closed_loop_abscissa, 1e-6);
}

TEST(ARE, UncontrollableFleetIsRejected) {
  std::vector<UGVParams> u(3);
  for (auto& p : u) p.C = 1.0, p.D = 1e15;
  const auto sys = build_ugv_scenario(u, Topology::ring(3, 2.5));
  EXPECT_FALSE(is_stabilizable(sys.A[0], sys.B[0]));
  EXPECT_THROW(solve_are_centralized(sys), StabilizabilityError);
}

TEST(UGV, BuilderMatchesVehicleModel) {
  const auto sc = testing_support::load_fleet("ugv_example2.json");
  const auto& s = sc.system;
  EXPECT_EQ(s.N() * s.n(), 20);
  EXPECT_EQ(s.N() * s.m(), 10);
  EXPECT_NEAR(s.A[0](2, 2), -0.12, 1e-15);
  EXPECT_NEAR(s.A[0](3, 3), -0.12, 1e-15);
  EXPECT_EQ(s.A[0](0, 2), 1.0);
  EXPECT_NEAR(s.B[0](2, 0), 0.2, 1e-15);
  EXPECT_EQ(s.B[0](0, 0), 0.0);
  EXPECT_EQ(s.x0[0], (Vector(4) << 2, 6, 1, 1).finished());
  std::vector<UGVParams> bad(5);
  bad[3].D = 0.0;
  EXPECT_THROW(build_ugv_scenario(bad, s.topology), ParameterError);
}

TEST(Lift, MeansReconstructGlobalData) {
  const auto sc = testing_support::load_fleet("ugv_example2.json");
  const auto& s = sc.system;
  const Matrix Qt = build_Qtilde(s);
  const auto Nn = s.N() * s.n();
  Matrix A = Matrix::Zero(Nn, Nn), S = A, Q = A;
  Vector x0 = Vector::Zero(Nn);
  for (int i = 0; i < s.N(); ++i) {
    const auto l = lift_agent_matrices(s, i, Qt);
    A += l.Atil / s.N();
    S += l.Stil / s.N();
    Q += l.Qtil / s.N();
    x0 += l.xbar0 / s.N();
  }
  const Matrix B = s.B_global();
  EXPECT_LT((A - s.A_global()).norm(), 1e-12);
  EXPECT_LT((S - B * s.R_global().inverse() * B.transpose()).norm(), 1e-12);
  EXPECT_LT((Q - Qt).norm(), 1e-12);
  EXPECT_LT((x0 - s.x0_global()).norm(), 1e-12);
}

TEST(DistributedARE, IdenticalPairAgreesWithCentralized) {
  const auto sys = integrator_pair(1.0, -1.0);
  IterationSchedule s;
  s.tol_inner = 1e-6;
  s.max_k = 200000;
  const auto c = solve_are_centralized(sys);
  const auto d = distributed_are_iteration(sys, s);
  EXPECT_TRUE(d.converged);
  // Limited by the O(1/k) consensus bias after max_k rounds and by Newton's linear rate along
  // the consensus direction, where the closed loop keeps a zero eigenvalue. Each agent only
  // feeds its own block row into the targets, so the two copies differ by the same residue.
  for (const auto& P : d.P) EXPECT_LT((P - c.P).norm(), 5e-5);
  EXPECT_LT((d.P[0] - d.P[1]).norm(), 5e-5);
}

TEST(DistributedARE, SingleAgentIsNewtonOnTheLocalSystem) {
  MultiAgentSystem sys;
  sys.topology = Topology(1, {}, 1.0);
  Matrix A(2, 2), B(2, 1);
  A << -1, 1, 0, -2;
  B << 0, 1;
  sys.A = {A};
  sys.B = {B};
  sys.R = {Matrix::Ones(1, 1)};
  sys.x0 = {Vector::Ones(2)};
  IterationSchedule s;
  s.tol_inner = 1e-12;
  // No neighbours means no pairwise weights, so Newton from the local start must reach P = 0.
  const auto d = distributed_are_iteration(sys, s);
  EXPECT_TRUE(d.converged);
  EXPECT_LT(d.P[0].norm(), 1e-10);
}

TEST(DistributedARE, ZeroStartSkipsUnsolvableRounds) {
  const auto sc = testing_support::load_fleet("ugv_example2.json");
  auto s = sc.schedule;
  s.max_k = 50;
  DistributedAREOptions o;
  o.init = AREInit::zero;
  try {
    const auto d = distributed_are_iteration(sc.system, s, o);
    EXPECT_GT(d.skipped, 0);
  } catch (const LyapunovError& e) {
    EXPECT_NE(std::string(e.what()).find("consecutive"), std::string::npos);
  }
}

TEST(ConsensusController, ZeroGainGivesZeroInput) {
  const auto sys = integrator_pair(1.0, -1.0);
  const TimeGrid g(1.0, 10);
  const auto x = VectorTrajectory::constant(g, Vector::Ones(2));
  const auto u = distributed_consensus_controller(Matrix::Zero(2, 2), x, sys, 1);
  EXPECT_EQ(u.max_node_norm(), 0.0);
}

TEST(ConsensusController, StackedInputsEqualCentralizedFeedback) {
  const auto sc = testing_support::load_fleet("ugv_example2.json");
  const auto& sys = sc.system;
  const auto P = solve_are_centralized(sys).P;
  const TimeGrid g(5.0, 50);
  const auto opt = simulate_optimal_consensus(sys, P, g);
  std::vector<VectorTrajectory> parts;
  for (int i = 0; i < sys.N(); ++i) parts.push_back(distributed_consensus_controller(P, opt.x, sys, i));
  EXPECT_LT(stack_controls(parts).max_node_distance(opt.u), 1e-12);
}

TEST(StateIteration, IdenticalAgentsTrackClosedLoop) {
  const auto sys = integrator_pair(1.0, -1.0);
  const auto P = solve_are_centralized(sys).P;
  const Matrix Acl = sys.A_global() - sys.B_global() * sys.B_global().transpose() * P;
  IterationSchedule s;
  s.tol_inner = 1e-9;
  s.max_w = 100000;
  const TimeGrid g(3.0, 30);
  const auto [x, stats] = distributed_state_iteration({Acl, Acl}, sys, s, g);
  for (int j = 0; j < g.num_nodes(); ++j) {
    const Vector oracle = matrix_exponential(Acl, g.time(j)) * sys.x0_global();
    for (const auto& xi : x) EXPECT_LT((xi[j] - oracle).norm(), 1e-4);
  }
}

TEST(StateIteration, ZeroInitialStateStaysZero) {
  auto sys = integrator_pair(0.0, 0.0);
  IterationSchedule s;
  const auto [x, stats] = distributed_state_iteration({Matrix::Identity(2, 2), -Matrix::Identity(2, 2)}, sys, s,
                                                      TimeGrid(1.0, 10));
  for (const auto& xi : x) EXPECT_EQ(xi.max_node_norm(), 0.0);
}

TEST(Baseline, TwoIntegratorsAverage) {
  const auto sys = integrator_pair(3.0, -1.0);
  const TimeGrid g(2.0, 200);
  const auto b = classical_protocol_baseline(sys, Matrix::Ones(1, 1), g);
  for (int j = 0; j < g.num_nodes(); ++j) {
    const double e = 2.0 * std::exp(-2.0 * g.time(j));
    EXPECT_NEAR(b.x[j](0), 1.0 + e, 1e-12);
    EXPECT_NEAR(b.x[j](1), 1.0 - e, 1e-12);
  }
  EXPECT_FALSE(b.divergent);
}

TEST(Baseline, ZeroGainLeavesAgentsApart) {
  const auto sys = integrator_pair(3.0, -1.0);
  const TimeGrid g(2.0, 20);
  const auto b = classical_protocol_baseline(sys, Matrix::Zero(1, 1), g);
  EXPECT_EQ(b.u.max_node_norm(), 0.0);
  const auto c = check_consensus(b.x, 2, 1e-2);
  EXPECT_FALSE(c.reached);
  EXPECT_EQ(c.residual.front(), c.residual.back());
  EXPECT_EQ(c.final_residual, 4.0);
}

TEST(Cost, ScalarLQRValue) {
  const TimeGrid g(10.0, 2000);
  std::vector<Vector> x, u;
  for (int j = 0; j < g.num_nodes(); ++j) {
    x.push_back(Vector::Constant(1, std::exp(-g.time(j))));
    u.push_back(-x.back());
  }
  const auto c = evaluate_consensus_cost(VectorTrajectory(g, x), VectorTrajectory(g, u), Matrix::Ones(1, 1),
                                         Matrix::Ones(1, 1));
  EXPECT_NEAR(c.total(), 1.0, 1e-3);
  EXPECT_TRUE(c.tail_bounded);
  EXPECT_NEAR(c.tail, std::exp(-20.0), 1e-10);
}

TEST(Cost, ZeroTrajectory) {
  const TimeGrid g(1.0, 10);
  const auto z = VectorTrajectory::constant(g, Vector::Zero(2));
  EXPECT_EQ(evaluate_consensus_cost(z, z, Matrix::Identity(2, 2), Matrix::Identity(2, 2)).total(), 0.0);
}

TEST(Cost, GrowingIntegrandHasUnboundedTail) {
  const TimeGrid g(1.0, 10);
  std::vector<Vector> x;
  for (int j = 0; j < g.num_nodes(); ++j) x.push_back(Vector::Constant(1, std::exp(g.time(j))));
  const VectorTrajectory xt(g, x);
  EXPECT_FALSE(evaluate_consensus_cost(xt, xt, Matrix::Ones(1, 1), Matrix::Ones(1, 1)).tail_bounded);
}

TEST(Cost, ValueIdentityOnToy) {
  const auto sc = testing_support::load_fleet("identical_pair.json");
  const auto P = solve_are_centralized(sc.system).P;
  const auto s = simulate_optimal_consensus(sc.system, P, sc.grid());
  const Vector x0 = sc.system.x0_global();
  EXPECT_NEAR(s.J, x0.dot(P * x0), 5e-3 * s.J);
}

TEST(Consensus, IdenticalStatesHaveZeroResidual) {
  const auto sys = integrator_pair(2.0, 2.0);
  const auto b = classical_protocol_baseline(sys, Matrix::Zero(1, 1), TimeGrid(1.0, 10));
  const auto c = check_consensus(b.x, 2, 1e-12);
  EXPECT_TRUE(c.reached);
  for (double r : c.residual) EXPECT_EQ(r, 0.0);
}
