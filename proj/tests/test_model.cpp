#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace distlq;

TEST(Topology, RingLaplacianAndNeighbors) {
  const auto t = Topology::ring(4, 2.5);
  EXPECT_EQ(t.neighbors(0), (std::vector<int>{1, 3}));
  Matrix L(4, 4);
  L << 2, -1, 0, -1, -1, 2, -1, 0, 0, -1, 2, -1, -1, 0, -1, 2;
  EXPECT_EQ(t.laplacian(), L);
  const Vector s = t.laplacian_spectrum();
  EXPECT_NEAR(s(0), 0.0, 1e-12);
  EXPECT_NEAR(s(3), 4.0, 1e-12);
}

TEST(Topology, RejectsMalformedEdges) {
  EXPECT_THROW(Topology(3, {{0, 0}}, 2.0), StructuralError);
  EXPECT_THROW(Topology(3, {{0, 1}, {1, 0}}, 2.0), StructuralError);
  EXPECT_THROW(Topology(3, {{0, 5}}, 2.0), StructuralError);
}

TEST(Topology, Connectivity) {
  EXPECT_TRUE(Topology::ring(5, 1.0).is_connected());
  const Topology split(4, {{0, 1}, {2, 3}}, 2.0);
  EXPECT_EQ(split.component_count(), 2);
  EXPECT_THROW(validate_gamma(split), TopologyError);
}

// Ring eigenvalues 0, 2, 2, 4: rho = max(|1 - 2/g|, |1 - 4/g|).
TEST(Gamma, RingSpectralRadius) {
  for (double g : {1.0, 1.9, 2.5, 4.0}) {
    const auto c = validate_gamma(Topology::ring(4, g));
    const double rho = std::max(std::abs(1 - 2 / g), std::abs(1 - 4 / g));
    EXPECT_NEAR(c.spectral_radius, rho, 1e-12) << g;
    EXPECT_EQ(c.valid, rho < 1.0);
  }
  EXPECT_NEAR(validate_gamma(Topology::ring(4, 1.9)).spectral_radius, 1.1052631578947, 1e-10);
  EXPECT_NEAR(validate_gamma(Topology::ring(4, 2.5)).spectral_radius, 0.6, 1e-12);
}

TEST(StepSize, ParseAndPrint) {
  const auto a = StepSize::parse("1/k");
  EXPECT_DOUBLE_EQ(a(4), 0.25);
  const auto b = StepSize::parse("2/k^0.75");
  EXPECT_NEAR(b(16), 2.0 / 8.0, 1e-15);
  EXPECT_EQ(StepSize::parse(b.to_string()).exponent, 0.75);
  EXPECT_THROW(StepSize::parse("1/k^0.4"), ParameterError);
  EXPECT_THROW(StepSize::parse("k"), ParameterError);
}

TEST(Schedule, Validation) {
  IterationSchedule s;
  EXPECT_NO_THROW(s.validate());
  s.tol_inner = 0.0;
  EXPECT_THROW(s.validate(), ParameterError);
}

TEST(Problem, ValidateRejectsIndefiniteR) {
  LQTerminalProblem p{Matrix::Identity(2, 2), Matrix::Ones(2, 1), Matrix::Identity(2, 2),
                      Matrix::Constant(1, 1, -1.0), 1.0, Vector::Ones(2), Vector::Zero(2)};
  EXPECT_THROW(p.validate(), ParameterError);
}

TEST(Decomposition, ExampleOnePasses) {
  const auto sc = testing_support::load_lq("example1.json");
  const auto rep = validate_decomposition(sc.agents, sc.system);
  EXPECT_TRUE(rep.all_passed());
  EXPECT_EQ(rep.checks.size(), 6u);
}

TEST(Decomposition, PerturbationIsReportedWithResidual) {
  auto sc = testing_support::load_lq("example1.json");
  sc.agents[2].A(0, 0) += 0.4;
  const auto rep = validate_decomposition(sc.agents, sc.system);
  EXPECT_FALSE(rep.all_passed());
  EXPECT_NEAR(rep.at("mean(A_i) = A").residual, 0.1, 1e-12);
  EXPECT_TRUE(rep.at("mean(B_i) = B").passed);
}

TEST(Decomposition, LiteralIdentityInputFactorsFail) {
  const auto sc = testing_support::load_lq("example1_identity_views.json");
  const auto rep = validate_decomposition(sc.agents, sc.system);
  EXPECT_FALSE(rep.at("mean(M_i M_i') = B R^-1 B'").passed);
  EXPECT_NEAR(rep.at("mean(M_i M_i') = B R^-1 B'").residual, 1.0, 1e-12);
}

TEST(Decomposition, SingleAgentIsTrivial) {
  const auto sc = testing_support::load_lq("single_agent.json");
  EXPECT_TRUE(validate_decomposition(sc.agents, sc.system).all_passed());
}

TEST(Summary, FiniteCheck) {
  ScenarioSummary s;
  s.costs["J"] = 1.0;
  EXPECT_TRUE(s.all_finite());
  s.errors["x"] = std::nan("");
  EXPECT_FALSE(s.all_finite());
}
