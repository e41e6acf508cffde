#pragma once

#include <cmath>
#include <limits>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "distlq/errors.hpp"
#include "distlq/model.hpp"
#include "distlq/numerics.hpp"

namespace distlq {

struct RiccatiResult {
  MatrixTrajectory P, Z, Phi, Psi;
  int iterations_used = 0;
  double last_delta = 0.0;
  /// P^0, P^1, ... when history recording is on.
  std::vector<MatrixTrajectory> history;
};

struct CentralizedSolution {
  MatrixTrajectory P, Z, Phi, Psi;
  Matrix gramian;
  Vector lambda_star;
  VectorTrajectory beta, x_star, u_star;
  double J = 0.0;
  double terminal_error = 0.0;
  double reachability_residual = 0.0;
  int iterations_used = 0;
  double last_delta = 0.0;
  std::vector<MatrixTrajectory> history;
};

/// Backward solve of Pdot = -Z'P - PZ - V with P(T) = 0.
inline MatrixTrajectory solve_lyapunov_ode(const MatrixTrajectory& Z, const MatrixTrajectory& V) {
  const auto n = Z.rows();
  return integrate_matrix_ode(
      [&](double t, const Matrix& P) -> Matrix {
        const Matrix Zt = Z.at(t);
        return -(Zt.transpose() * P + P * Zt + V.at(t));
      },
      Matrix::Zero(n, n), Z.grid(), Direction::backward);
}

/// Phi' = Z Phi and Psi' = -Z' Psi, both starting from I at t = 0.
inline std::pair<MatrixTrajectory, MatrixTrajectory> transition_matrices(const MatrixTrajectory& Z) {
  const auto n = Z.rows();
  const Matrix I = Matrix::Identity(n, n);
  auto Phi = integrate_matrix_ode([&](double t, const Matrix& F) -> Matrix { return Z.at(t) * F; }, I,
                                  Z.grid(), Direction::forward);
  auto Psi = integrate_matrix_ode(
      [&](double t, const Matrix& F) -> Matrix { return -(Z.at(t).transpose() * F); }, I, Z.grid(),
      Direction::forward);
  return {std::move(Phi), std::move(Psi)};
}

/// Z^n = A - S P^{n-1}, V^n = Q + P^{n-1} S P^{n-1}, P^n from the Lyapunov ODE; stops when the
/// max-node Frobenius change drops below tol_outer.
inline RiccatiResult riccati_iteration(const LQTerminalProblem& problem, const TimeGrid& grid,
                                       const IterationSchedule& schedule) {
  problem.validate();
  schedule.validate();
  const auto n = problem.n();
  const Matrix S = problem.S();

  RiccatiResult out;
  MatrixTrajectory P = MatrixTrajectory::constant(grid, Matrix::Zero(n, n));
  if (schedule.record_history) out.history.push_back(P);

  double delta = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= schedule.max_n; ++it) {
    auto Z = P.map([&](const Matrix& p) -> Matrix { return problem.A - S * p; });
    auto V = P.map([&](const Matrix& p) -> Matrix { return symmetrize(problem.Q + p * S * p); });
    MatrixTrajectory next = solve_lyapunov_ode(Z, V);
    for (int j = 0; j < next.size(); ++j) next[j] = symmetrize(next[j]);
    delta = next.max_node_distance(P);
    P = std::move(next);
    if (schedule.record_history) out.history.push_back(P);
    if (delta < schedule.tol_outer) {
      out.iterations_used = it;
      out.last_delta = delta;
      out.P = std::move(P);
      out.Z = std::move(Z);
      std::tie(out.Phi, out.Psi) = transition_matrices(out.Z);
      return out;
    }
  }
  throw ConvergenceFailure("Riccati iteration did not reach tolerance", schedule.max_n, delta);
}

/// G = int_0^T Phi(T,s) S Phi(T,s)' ds with Phi(T,s) = Phi(T) Phi(s)^{-1}.
inline Matrix compute_gramian(const MatrixTrajectory& Phi, const Matrix& S) {
  const Matrix& PhiT = Phi.back();
  std::vector<Matrix> integrand;
  integrand.reserve(Phi.size());
  for (int j = 0; j < Phi.size(); ++j) {
    Eigen::PartialPivLU<Matrix> lu(Phi[j].transpose());
    const double det = lu.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-300)
      throw DegeneracyError("transition matrix is singular at grid node " + std::to_string(j));
    const Matrix PhiTs = lu.solve(PhiT.transpose()).transpose();
    if (!PhiTs.allFinite())
      throw DegeneracyError("transition matrix is singular at grid node " + std::to_string(j));
    integrand.push_back(PhiTs * S * PhiTs.transpose());
  }
  return symmetrize(integrate_samples(MatrixTrajectory(Phi.grid(), std::move(integrand))));
}

inline Matrix compute_gramian(const MatrixTrajectory& Phi, const LQTerminalProblem& problem) {
  return compute_gramian(Phi, problem.S());
}

/// lambda* = G^+ (Phi(T,0) x0 - xT). Throws if the target is not reachable.
inline Vector solve_lambda(const Matrix& gramian, const MatrixTrajectory& Phi,
                           const LQTerminalProblem& problem, double rank_tol = 1e-10) {
  const auto check = check_reachability(problem, gramian, Phi.back(), rank_tol);
  if (!check.reachable)
    throw ReachabilityError("terminal state is not reachable from x0 (range residual " +
                                std::to_string(check.residual) + ")",
                            check.residual);
  return pseudo_inverse(gramian, rank_tol) * (Phi.back() * problem.x0 - problem.xT);
}

/// beta' = -Z' beta, beta(T) = lambda.
inline VectorTrajectory integrate_beta(const MatrixTrajectory& Z, const Vector& lambda) {
  return integrate_ode<Vector>(
      [&](double t, const Vector& b) -> Vector { return -(Z.at(t).transpose() * b); }, lambda, Z.grid(),
      Direction::backward);
}

/// x' = Z x - S beta, x(0) = x0. `S` is B R^-1 B' or an agent's estimate of it.
inline VectorTrajectory integrate_state(const MatrixTrajectory& Z, const VectorTrajectory& beta,
                                        const Matrix& S, const Vector& x0) {
  return integrate_ode<Vector>(
      [&](double t, const Vector& x) -> Vector { return Z.at(t) * x - S * beta.at(t); }, x0, Z.grid(),
      Direction::forward);
}

inline VectorTrajectory integrate_optimal_state(const MatrixTrajectory& Z, const VectorTrajectory& beta,
                                                const LQTerminalProblem& problem) {
  return integrate_state(Z, beta, problem.S(), problem.x0);
}

/// u = -K (P x + beta) at every node, with K = R^-1 B' (or an agent's estimate of it).
inline VectorTrajectory feedback_control(const MatrixTrajectory& P, const VectorTrajectory& beta,
                                         const VectorTrajectory& x, const Matrix& K) {
  std::vector<Vector> u;
  u.reserve(x.size());
  for (int j = 0; j < x.size(); ++j) u.push_back(-(K * (P[j] * x[j] + beta[j])));
  return VectorTrajectory(x.grid(), std::move(u));
}

inline VectorTrajectory optimal_control(const MatrixTrajectory& P, const VectorTrajectory& beta,
                                        const VectorTrajectory& x, const LQTerminalProblem& problem) {
  return feedback_control(P, beta, x, problem.gain_factor());
}

/// int x'Qx + u'Ru dt by composite Simpson.
inline double evaluate_cost(const VectorTrajectory& x, const VectorTrajectory& u, const Matrix& Q,
                            const Matrix& R) {
  if (x.size() != u.size()) throw StructuralError("state and input trajectories differ in length");
  std::vector<double> f(x.size());
  for (int j = 0; j < x.size(); ++j) f[j] = x[j].dot(Q * x[j]) + u[j].dot(R * u[j]);
  return integrate_scalar(x.grid(), f);
}

namespace detail {
/// Second-order finite-difference derivative of sampled data (one-sided at the ends).
template <class Sample>
std::vector<Sample> sample_derivative(const Trajectory<Sample>& f) {
  const int K = f.size() - 1;
  const double h = f.grid().step();
  std::vector<Sample> d(f.size());
  for (int j = 1; j < K; ++j) d[j] = (f[j + 1] - f[j - 1]) / (2.0 * h);
  if (K >= 2) {
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[K] = (3.0 * f[K] - 4.0 * f[K - 1] + f[K - 2]) / (2.0 * h);
  } else {
    d[0] = d[K] = (f[K] - f[0]) / h;
  }
  return d;
}
}  // namespace detail

struct StationarityReport {
  /// max ||pdot + A'p + Q x|| for p = P x + beta (finite-difference pdot).
  double adjoint_residual = 0.0;
  /// max ||u + R^-1 B' p||.
  double control_residual = 0.0;
  double total() const { return adjoint_residual + control_residual; }
};

inline StationarityReport check_stationarity(const MatrixTrajectory& P, const VectorTrajectory& beta,
                                             const VectorTrajectory& x, const VectorTrajectory& u,
                                             const LQTerminalProblem& problem) {
  std::vector<Vector> p(x.size());
  for (int j = 0; j < x.size(); ++j) p[j] = P[j] * x[j] + beta[j];
  const VectorTrajectory pt(x.grid(), p);
  const auto pdot = detail::sample_derivative(pt);
  const Matrix K = problem.gain_factor();
  StationarityReport r;
  for (int j = 0; j < x.size(); ++j) {
    r.adjoint_residual =
        std::max(r.adjoint_residual, (pdot[j] + problem.A.transpose() * p[j] + problem.Q * x[j]).norm());
    r.control_residual = std::max(r.control_residual, (u[j] + K * p[j]).norm());
  }
  return r;
}

inline StationarityReport check_stationarity(const CentralizedSolution& s, const LQTerminalProblem& problem) {
  return check_stationarity(s.P, s.beta, s.x_star, s.u_star, problem);
}

/// max-node ||Pdot + A'P + PA + Q - P S P|| with finite-difference Pdot.
inline double riccati_residual(const MatrixTrajectory& P, const LQTerminalProblem& problem) {
  const auto Pdot = detail::sample_derivative(P);
  const Matrix S = problem.S();
  double r = 0.0;
  for (int j = 0; j < P.size(); ++j) {
    const Matrix& p = P[j];
    r = std::max(r, (Pdot[j] + problem.A.transpose() * p + p * problem.A + problem.Q - p * S * p).norm());
  }
  return r;
}

/// Full-information solve: Riccati iteration, Gramian, lambda*, beta, x*, u*, cost.
inline CentralizedSolution solve_centralized(const LQTerminalProblem& problem, const TimeGrid& grid,
                                             const IterationSchedule& schedule) {
  if (std::abs(grid.t_start()) > 0.0 || std::abs(grid.t_end() - problem.T) > 1e-12 * problem.T)
    throw StructuralError("grid must span [0, T]");
  auto ric = riccati_iteration(problem, grid, schedule);
  CentralizedSolution s;
  s.P = std::move(ric.P);
  s.Z = std::move(ric.Z);
  s.Phi = std::move(ric.Phi);
  s.Psi = std::move(ric.Psi);
  s.iterations_used = ric.iterations_used;
  s.last_delta = ric.last_delta;
  s.history = std::move(ric.history);

  s.gramian = compute_gramian(s.Phi, problem);
  s.reachability_residual = check_reachability(problem, s.gramian, s.Phi.back(), schedule.rank_tol).residual;
  s.lambda_star = solve_lambda(s.gramian, s.Phi, problem, schedule.rank_tol);
  s.beta = integrate_beta(s.Z, s.lambda_star);
  s.x_star = integrate_optimal_state(s.Z, s.beta, problem);
  s.u_star = optimal_control(s.P, s.beta, s.x_star, problem);
  s.J = evaluate_cost(s.x_star, s.u_star, problem.Q, problem.R);
  s.terminal_error = (s.x_star.back() - problem.xT).norm();
  return s;
}

}  // namespace distlq
