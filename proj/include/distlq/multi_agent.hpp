#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "distlq/consensus.hpp"
#include "distlq/distributed.hpp"
#include "distlq/errors.hpp"
#include "distlq/model.hpp"
#include "distlq/numerics.hpp"

namespace distlq {

/// N agents xdot_i = A_i x_i + B_i u_i coupled only through the cost
///   int x'Qtilde x + u'Ru dt,  Qtilde built from pairwise weights Q_ij on graph edges.
struct MultiAgentSystem {
  std::vector<Matrix> A, B, R;
  std::vector<Vector> x0;
  Topology topology;
  /// Q_ij for ordered pairs (i, j); absent pairs are zero.
  std::map<std::pair<int, int>, Matrix> weights;

  int N() const { return static_cast<int>(A.size()); }
  Eigen::Index n() const { return A.empty() ? 0 : A.front().rows(); }
  Eigen::Index m() const { return B.empty() ? 0 : B.front().cols(); }

  void validate() const {
    const int N_ = N();
    if (N_ < 1) throw StructuralError("multi-agent system needs at least one agent");
    if (static_cast<int>(B.size()) != N_ || static_cast<int>(R.size()) != N_ || static_cast<int>(x0.size()) != N_)
      throw StructuralError("A, B, R and x0 must be given for every agent");
    if (topology.N() != N_) throw StructuralError("topology size does not match the agent count");
    const auto n_ = n(), m_ = m();
    for (int i = 0; i < N_; ++i) {
      const std::string who = "agent " + std::to_string(i + 1);
      if (A[i].rows() != n_ || A[i].cols() != n_) throw StructuralError(who + ": A has the wrong shape");
      if (B[i].rows() != n_ || B[i].cols() != m_) throw StructuralError(who + ": B has the wrong shape");
      if (R[i].rows() != m_ || R[i].cols() != m_) throw StructuralError(who + ": R has the wrong shape");
      if (x0[i].size() != n_) throw StructuralError(who + ": x0 has the wrong size");
      if (!A[i].allFinite() || !B[i].allFinite() || !R[i].allFinite() || !x0[i].allFinite())
        throw StructuralError(who + ": non-finite data");
      if ((R[i] - R[i].transpose()).cwiseAbs().maxCoeff() > 1e-12 || min_symmetric_eigenvalue(R[i]) <= 0.0)
        throw ParameterError(who + ": R must be symmetric positive definite");
    }
    for (const auto& [ij, Qij] : weights) {
      const auto [i, j] = ij;
      if (i < 0 || j < 0 || i >= N_ || j >= N_) throw StructuralError("weight index out of range");
      if (Qij.rows() != n_ || Qij.cols() != n_) throw StructuralError("weight Q_ij has the wrong shape");
      if (min_symmetric_eigenvalue(Qij) < -1e-10) throw ParameterError("weight Q_ij must be PSD");
    }
  }

  /// Q_ij = Q_ji = I on every edge of the topology.
  void set_edge_weights_identity() {
    weights.clear();
    for (auto [a, b] : topology.edges()) {
      weights[{a, b}] = Matrix::Identity(n(), n());
      weights[{b, a}] = Matrix::Identity(n(), n());
    }
  }

  Matrix A_global() const { return blockdiag(A); }
  Matrix B_global() const { return blockdiag(B); }
  Matrix R_global() const { return blockdiag(R); }
  Vector x0_global() const {
    Vector x(N() * n());
    for (int i = 0; i < N(); ++i) x.segment(i * n(), n()) = x0[i];
    return x;
  }

  static Matrix blockdiag(const std::vector<Matrix>& blocks) {
    Eigen::Index r = 0, c = 0;
    for (const auto& b : blocks) r += b.rows(), c += b.cols();
    Matrix M = Matrix::Zero(r, c);
    r = c = 0;
    for (const auto& b : blocks) {
      M.block(r, c, b.rows(), b.cols()) = b;
      r += b.rows();
      c += b.cols();
    }
    return M;
  }
};

/// Qtilde_ii = sum_j c_ij (Q_ij + Q_ji), Qtilde_ij = -c_ij (Q_ij + Q_ji).
inline Matrix build_Qtilde(const MultiAgentSystem& sys) {
  sys.validate();
  const int N = sys.N();
  const auto n = sys.n();
  for (const auto& [ij, Qij] : sys.weights) {
    const auto [i, j] = ij;
    const bool nonzero = Qij.cwiseAbs().maxCoeff() > 0.0;
    if (nonzero && (i == j || !sys.topology.adjacent(i, j)))
      throw StructuralError("weight Q_" + std::to_string(i + 1) + std::to_string(j + 1) +
                            " is nonzero but agents " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                            " are not neighbours");
  }
  auto weight = [&](int i, int j) -> Matrix {
    auto it = sys.weights.find({i, j});
    return it == sys.weights.end() ? Matrix::Zero(n, n) : it->second;
  };
  Matrix Qt = Matrix::Zero(N * n, N * n);
  for (int i = 0; i < N; ++i)
    for (int j : sys.topology.neighbors(i)) {
      const Matrix w = weight(i, j) + weight(j, i);
      Qt.block(i * n, i * n, n, n) += w;
      Qt.block(i * n, j * n, n, n) -= w;
    }
  for (int i = 0; i < N; ++i) {
    Matrix row = Matrix::Zero(n, n);
    for (int j = 0; j < N; ++j) row += Qt.block(i * n, j * n, n, n);
    if (row.cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Qt.cwiseAbs().maxCoeff()))
      throw StructuralError("Qtilde block row " + std::to_string(i + 1) + " does not sum to zero");
  }
  return Qt;
}

/// PBH test: rank [A - sI, B] = n for every eigenvalue s with Re s >= -tol.
inline bool is_stabilizable(const Matrix& A, const Matrix& B, double tol = 1e-9) {
  const auto n = A.rows();
  Eigen::EigenSolver<Matrix> es(A, false);
  const auto ev = es.eigenvalues();
  using CMatrix = Eigen::MatrixXcd;
  const double scale = std::max({1.0, A.norm(), B.norm()});
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k).real() < -tol) continue;
    CMatrix M(n, n + B.cols());
    M.leftCols(n) = A.cast<std::complex<double>>() - ev(k) * CMatrix::Identity(n, n);
    M.rightCols(B.cols()) = B.cast<std::complex<double>>();
    Eigen::JacobiSVD<CMatrix> svd(M);
    if (svd.singularValues().minCoeff() <= 1e-9 * scale) return false;
  }
  return true;
}

struct AREOptions {
  double regularization = 1e-6;
  double gain_tol = 1e-10;
  int max_newton = 100;
  double max_bootstrap_horizon = 1e4;
};

struct AREResult {
  Matrix P;
  Matrix K;
  /// ||A'P + PA + Q - P S P||_F.
  double residual = 0.0;
  int iterations = 0;
  double last_gain_delta = 0.0;
  /// Newton stopped because the gain delta stopped shrinking with an acceptable residual.
  bool stagnated = false;
  /// Largest real part of eig(A - S P).
  double closed_loop_abscissa = 0.0;
  double bootstrap_horizon = 0.0;
};

inline double are_residual(const Matrix& A, const Matrix& S, const Matrix& Q, const Matrix& P) {
  return (A.transpose() * P + P * A + Q - P * S * P).norm();
}

/// Maximal PSD solution of A'P + PA + Q - P B R^-1 B' P = 0 by Kleinman-Newton. The start gain
/// comes from the Riccati ODE with Q + delta I integrated backward until A - S P is Hurwitz.
inline AREResult solve_are(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                           const AREOptions& opt = {}) {
  const auto n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols())
    throw StructuralError("solve_are: dimension mismatch");
  const Matrix Rinv_Bt = R.ldlt().solve(B.transpose());
  const Matrix S = symmetrize(B * Rinv_Bt);
  const Matrix Qreg = symmetrize(Q) + opt.regularization * Matrix::Identity(n, n);

  AREResult res;
  Matrix P = Matrix::Zero(n, n);
  double elapsed = 0.0, chunk = 1.0;
  bool hurwitz = false;
  while (elapsed < opt.max_bootstrap_horizon) {
    const double h = 0.5 / (1.0 + spectral_norm(A) + spectral_norm(S) * std::max(1.0, spectral_norm(P)));
    const int steps = std::max(2, static_cast<int>(std::ceil(chunk / h)));
    const TimeGrid g(0.0, chunk, steps);
    auto traj = integrate_matrix_ode(
        [&](double, const Matrix& X) -> Matrix {
          return -(A.transpose() * X + X * A + Qreg - X * S * X);
        },
        P, g, Direction::backward);
    P = symmetrize(traj.front());
    elapsed += chunk;
    chunk = elapsed;
    if (spectral_abscissa(A - S * P) < 0.0) {
      hurwitz = true;
      break;
    }
  }
  res.bootstrap_horizon = elapsed;
  if (!hurwitz)
    throw StabilizabilityError("no stabilizing start gain found: the Riccati ODE did not produce a Hurwitz "
                               "closed loop within the bootstrap horizon");

  const double accept = 1e-8 * std::max(1.0, Q.norm());
  Matrix K = Rinv_Bt * P;
  Matrix best_P = P;
  double best_res = are_residual(A, S, Q, P);
  double prev_delta = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opt.max_newton; ++it) {
    const Matrix Z = A - B * K;
    Matrix Pn;
    try {
      Pn = solve_lyapunov(Z, Q + K.transpose() * R * K, 0.0);
    } catch (const LyapunovError&) {
      if (best_res <= accept) {
        res.stagnated = true;
        break;
      }
      throw;
    }
    const Matrix Kn = Rinv_Bt * Pn;
    const double delta = (Kn - K).norm();
    const double r = are_residual(A, S, Q, Pn);
    res.iterations = it;
    res.last_gain_delta = delta;
    if (r < best_res) best_res = r, best_P = Pn;
    P = Pn;
    K = Kn;
    if (delta < opt.gain_tol) break;
    if (best_res <= accept && delta >= 0.5 * prev_delta && it > 2) {
      res.stagnated = true;
      break;
    }
    prev_delta = delta;
  }
  res.P = symmetrize(best_P);
  res.K = Rinv_Bt * res.P;
  res.residual = are_residual(A, S, Q, res.P);
  res.closed_loop_abscissa = spectral_abscissa(A - S * res.P);
  if (!res.P.allFinite()) throw ConvergenceFailure("Kleinman iteration diverged", res.iterations, res.last_gain_delta);
  return res;
}

inline void require_stabilizable(const MultiAgentSystem& sys) {
  for (int i = 0; i < sys.N(); ++i)
    if (!is_stabilizable(sys.A[i], sys.B[i]))
      throw StabilizabilityError("agent " + std::to_string(i + 1) + ": (A_i, B_i) is not stabilizable");
}

inline AREResult solve_are_centralized(const MultiAgentSystem& sys, const AREOptions& opt = {}) {
  sys.validate();
  require_stabilizable(sys);
  return solve_are(sys.A_global(), sys.B_global(), build_Qtilde(sys), sys.R_global(), opt);
}

struct LiftedAgent {
  Matrix Atil, Btil, Rtil, Qtil;
  /// Btil Rtil Btil'.
  Matrix Stil;
  Vector xbar0;
};

/// Block-embedded local data of agent i scaled by N, so that agent means reproduce the
/// global block-diagonal matrices.
inline LiftedAgent lift_agent_matrices(const MultiAgentSystem& sys, int i, const Matrix& Qtilde) {
  const int N = sys.N();
  if (i < 0 || i >= N) throw StructuralError("agent index out of range");
  const auto n = sys.n(), m = sys.m();
  LiftedAgent l;
  l.Atil = Matrix::Zero(N * n, N * n);
  l.Atil.block(i * n, i * n, n, n) = N * sys.A[i];
  l.Btil = Matrix::Zero(N * n, N * m);
  l.Btil.block(i * n, i * m, n, m) = N * sys.B[i];
  l.Rtil = Matrix::Zero(N * m, N * m);
  l.Rtil.block(i * m, i * m, m, m) = sys.R[i].ldlt().solve(Matrix::Identity(m, m)) / N;
  Matrix Li = Matrix::Zero(N * n, N * n);
  Li.block(i * n, i * n, n, n) = N * Matrix::Identity(n, n);
  l.Qtil = Li * Qtilde;
  l.Stil = l.Btil * l.Rtil * l.Btil.transpose();
  l.xbar0 = Vector::Zero(N * n);
  l.xbar0.segment(i * n, n) = N * sys.x0[i];
  return l;
}

inline LiftedAgent lift_agent_matrices(const MultiAgentSystem& sys, int i) {
  return lift_agent_matrices(sys, i, build_Qtilde(sys));
}

enum class AREInit {
  /// P_i^0 = 0 (Lyapunov steps that fail are skipped).
  zero,
  /// P_i^0 = blockdiag(0, .., X_i, .., 0), X_i the local stabilizing ARE solution for (A_i, B_i, I, R_i).
  local_stabilizing,
};

inline std::string to_string(AREInit v) { return v == AREInit::zero ? "zero" : "local_stabilizing"; }

inline AREInit parse_are_init(const std::string& s) {
  if (s == "zero") return AREInit::zero;
  if (s == "local_stabilizing") return AREInit::local_stabilizing;
  throw ParameterError("unknown ARE initialisation \"" + s + "\"");
}

struct DistributedAREOptions {
  AREInit init = AREInit::local_stabilizing;
  /// Consecutive failed Lyapunov solves tolerated before giving up.
  int max_consecutive_skips = 3;
};

struct DistributedAREResult {
  std::vector<Matrix> P, Zbar, Vbar;
  int outer_iterations = 0;
  double last_delta = 0.0;
  bool converged = false;
  int skipped = 0;
  std::vector<LoopStats> inner;
  std::vector<std::string> log;
  ConsensusDiagnostics diagnostics;
};

/// Consensus tracking of Zbar_i, Vbar_i towards (Atil_i - Stil_i P_i, Qtil_i + P_i Stil_i P_i), then
/// 0 = Zbar_i' P_i + P_i Zbar_i + Vbar_i per agent. The outer loop stops once every agent's P_i
/// moves less than tol_inner, or after max_n rounds. Z/V rounds are capped by max_k.
inline DistributedAREResult distributed_are_iteration(const MultiAgentSystem& sys, const IterationSchedule& schedule,
                                                      const DistributedAREOptions& opt = {}) {
  sys.validate();
  schedule.validate();
  detail::require_valid_gamma(sys.topology);
  const int N = sys.N();
  const auto n = sys.n();
  const Eigen::Index Nn = N * n;
  const Eigen::Index block = Nn * Nn;
  const Matrix Qt = build_Qtilde(sys);
  std::vector<LiftedAgent> lifted;
  for (int i = 0; i < N; ++i) lifted.push_back(lift_agent_matrices(sys, i, Qt));

  DistributedAREResult out;
  std::vector<Matrix> P(N, Matrix::Zero(Nn, Nn));
  if (opt.init == AREInit::local_stabilizing) {
    for (int i = 0; i < N; ++i) {
      if (!is_stabilizable(sys.A[i], sys.B[i]))
        throw StabilizabilityError("agent " + std::to_string(i + 1) + ": (A_i, B_i) is not stabilizable");
      const auto local = solve_are(sys.A[i], sys.B[i], Matrix::Identity(n, n), sys.R[i]);
      P[i].block(i * n, i * n, n, n) = local.P;
    }
  }
  auto* diag = schedule.record_history ? &out.diagnostics : nullptr;

  int consecutive = 0;
  std::vector<Vector> resume;
  int next_round = 1;
  for (int it = 1; it <= schedule.max_n; ++it) {
    std::vector<Vector> targets(N);
    for (int i = 0; i < N; ++i) {
      const auto& l = lifted[i];
      targets[i].resize(2 * block);
      targets[i] << detail::flatten_matrix(l.Atil - l.Stil * P[i]),
          detail::flatten_matrix(l.Qtil + P[i] * l.Stil * P[i]);
    }
    const std::string tag = "@n" + std::to_string(it);
    auto o = detail::loop_options(schedule, schedule.max_k, block, "ZV", diag);
    o.segments = {{"Zbar" + tag, block}, {"Vbar" + tag, block}};
    if (consecutive > 0) {
      o.initial = &resume;
      o.first_round = next_round;
    }
    const auto run = run_consensus_tracking(targets, sys.topology, o);
    out.inner.push_back(detail::stats_of(run, "ZVbar" + tag));

    std::vector<Matrix> Z(N), V(N), Pn(N);
    bool failed = false;
    for (int i = 0; i < N && !failed; ++i) {
      Z[i] = detail::unflatten_matrix(run.values[i].head(block), Nn, Nn);
      V[i] = detail::unflatten_matrix(run.values[i].tail(block), Nn, Nn);
      try {
        Pn[i] = solve_lyapunov(Z[i], V[i]);
      } catch (const LyapunovError& e) {
        failed = true;
        out.log.push_back("outer round " + std::to_string(it) + ", agent " + std::to_string(i + 1) +
                          ": Lyapunov solve skipped (" + e.what() + ")");
      }
    }
    if (failed) {
      ++out.skipped;
      if (++consecutive > opt.max_consecutive_skips)
        throw LyapunovError("distributed ARE: Lyapunov equation unsolvable in " + std::to_string(consecutive) +
                            " consecutive outer rounds");
      resume = run.values;
      next_round = (consecutive == 1 ? 1 : next_round) + run.rounds;
      out.outer_iterations = it;
      continue;
    }
    consecutive = 0;
    double d = 0.0;
    for (int i = 0; i < N; ++i) d = std::max(d, (Pn[i] - P[i]).norm());
    P = std::move(Pn);
    out.Zbar = std::move(Z);
    out.Vbar = std::move(V);
    out.outer_iterations = it;
    out.last_delta = d;
    if (d < schedule.tol_inner) {
      out.converged = true;
      break;
    }
  }
  out.P = std::move(P);
  if (out.Zbar.empty()) throw LyapunovError("distributed ARE: no Lyapunov solve succeeded");
  return out;
}

/// Node-wise consensus tracking towards e^{Zbar_i t} xbar_i(0).
inline std::pair<std::vector<VectorTrajectory>, LoopStats> distributed_state_iteration(
    const std::vector<Matrix>& Zbar, const MultiAgentSystem& sys, const IterationSchedule& schedule,
    const TimeGrid& grid, ConsensusDiagnostics* diagnostics = nullptr) {
  const int N = sys.N();
  if (static_cast<int>(Zbar.size()) != N) throw StructuralError("one Zbar per agent expected");
  const Eigen::Index Nn = N * sys.n();
  std::vector<Vector> targets(N);
  for (int i = 0; i < N; ++i) {
    Vector xbar0 = Vector::Zero(Nn);
    xbar0.segment(i * sys.n(), sys.n()) = N * sys.x0[i];
    std::vector<Vector> s(grid.num_nodes());
    for (int j = 0; j < grid.num_nodes(); ++j) s[j] = matrix_exponential(Zbar[i], grid.time(j)) * xbar0;
    targets[i] = detail::flatten(VectorTrajectory(grid, std::move(s)));
  }
  const auto run = run_consensus_tracking(
      targets, sys.topology, detail::loop_options(schedule, schedule.max_w, Nn, "x_diamond", diagnostics));
  std::vector<VectorTrajectory> x;
  for (const auto& v : run.values) x.push_back(detail::unflatten_vectors(v, grid, Nn));
  return {std::move(x), detail::stats_of(run, "x_diamond")};
}

/// Row block i of -R^-1 B' P_i, i.e. agent i's gain taken from its own copy of P.
inline Matrix agent_consensus_gain(const Matrix& P_i, const MultiAgentSystem& sys, int i) {
  const auto n = sys.n();
  const Matrix RiBi = sys.R[i].ldlt().solve(sys.B[i].transpose());
  return -RiBi * P_i.middleRows(i * n, n);
}

/// u_i(t) = -[0 .. R_i^-1 B_i' .. 0] P_i x_i(t).
inline VectorTrajectory distributed_consensus_controller(const Matrix& P_i, const VectorTrajectory& x_i,
                                                         const MultiAgentSystem& sys, int i) {
  const Matrix K = agent_consensus_gain(P_i, sys, i);
  return x_i.map([&](const Vector& x) -> Vector { return K * x; });
}

inline VectorTrajectory stack_controls(const std::vector<VectorTrajectory>& parts) {
  if (parts.empty()) throw StructuralError("no control parts to stack");
  const auto& grid = parts.front().grid();
  Eigen::Index m = 0;
  for (const auto& p : parts) m += p.rows();
  std::vector<Vector> u(grid.num_nodes(), Vector(m));
  for (int j = 0; j < grid.num_nodes(); ++j) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      u[j].segment(off, p.rows()) = p[j];
      off += p.rows();
    }
  }
  return VectorTrajectory(grid, std::move(u));
}

struct CostEstimate {
  double integral = 0.0;
  double tail = 0.0;
  bool tail_bounded = true;
  double total() const { return integral + tail; }
};

/// Simpson quadrature of x'Qx + u'Ru over the grid plus an exponential tail fitted on the last
/// tenth of the horizon.
inline CostEstimate evaluate_consensus_cost(const VectorTrajectory& x, const VectorTrajectory& u, const Matrix& Qtilde,
                                            const Matrix& R) {
  if (x.size() != u.size()) throw StructuralError("state and input trajectories differ in length");
  std::vector<double> f(x.size());
  for (int j = 0; j < x.size(); ++j) f[j] = x[j].dot(Qtilde * x[j]) + u[j].dot(R * u[j]);
  CostEstimate c;
  c.integral = integrate_scalar(x.grid(), f);
  if (!std::isfinite(c.integral)) {
    c.tail_bounded = false;
    c.tail = std::numeric_limits<double>::infinity();
    return c;
  }
  const int K = x.size() - 1;
  const int a = std::max(0, K - std::max(1, K / 10));
  const double fa = f[a], fT = f[K];
  if (fT <= 1e-14 * std::max(1e-300, c.integral)) return c;
  const double span = x.grid().time(K) - x.grid().time(a);
  if (fa > fT && fT > 0.0 && span > 0.0) {
    const double rate = std::log(fa / fT) / span;
    c.tail = fT / rate;
  } else {
    c.tail_bounded = false;
  }
  return c;
}

/// x(t_j) = e^{Acl t_j} x0 on the grid, propagated with the one-step exponential.
inline VectorTrajectory simulate_lti(const Matrix& Acl, const Vector& x0, const TimeGrid& grid) {
  const Matrix E = matrix_exponential(Acl, grid.step());
  std::vector<Vector> x(grid.num_nodes());
  x[0] = x0;
  for (int j = 1; j < grid.num_nodes(); ++j) x[j] = E * x[j - 1];
  return VectorTrajectory(grid, std::move(x));
}

/// Plant driven by a precomputed input trajectory (RK4, input interpolated between nodes).
inline VectorTrajectory simulate_open_loop(const Matrix& A, const Matrix& B, const VectorTrajectory& u,
                                           const Vector& x0) {
  return integrate_ode<Vector>([&](double t, const Vector& x) -> Vector { return A * x + B * u.at(t); }, x0,
                               u.grid(), Direction::forward);
}

struct ConsensusSimulation {
  VectorTrajectory x, u;
  CostEstimate cost;
  double J = 0.0;
  bool divergent = false;
};

/// Centralized optimal closed loop u = -R^-1 B' P x.
inline ConsensusSimulation simulate_optimal_consensus(const MultiAgentSystem& sys, const Matrix& P,
                                                      const TimeGrid& grid) {
  const Matrix A = sys.A_global(), B = sys.B_global(), R = sys.R_global();
  const Matrix K = R.ldlt().solve(B.transpose()) * P;
  ConsensusSimulation s;
  s.x = simulate_lti(A - B * K, sys.x0_global(), grid);
  s.u = s.x.map([&](const Vector& x) -> Vector { return -(K * x); });
  s.cost = evaluate_consensus_cost(s.x, s.u, build_Qtilde(sys), R);
  s.J = s.cost.total();
  return s;
}

/// u_i = K sum_{j in N_i} (x_j - x_i) with one gain K shared by all agents.
inline ConsensusSimulation classical_protocol_baseline(const MultiAgentSystem& sys, const Matrix& K,
                                                       const TimeGrid& grid) {
  sys.validate();
  if (K.rows() != sys.m() || K.cols() != sys.n()) throw StructuralError("baseline gain K must be m x n");
  const int N = sys.N();
  const Matrix L = Eigen::kroneckerProduct(sys.topology.laplacian(), Matrix::Identity(sys.n(), sys.n()));
  const Matrix Kb = Eigen::kroneckerProduct(Matrix::Identity(N, N), K);
  const Matrix F = -Kb * L;
  const Matrix A = sys.A_global(), B = sys.B_global();
  const Matrix Acl = A + B * F;
  ConsensusSimulation s;
  s.x = simulate_lti(Acl, sys.x0_global(), grid);
  s.u = s.x.map([&](const Vector& x) -> Vector { return F * x; });
  s.divergent = spectral_abscissa(Acl) > 1e-9;
  s.cost = evaluate_consensus_cost(s.x, s.u, build_Qtilde(sys), sys.R_global());
  s.J = s.divergent || !s.cost.tail_bounded ? std::numeric_limits<double>::infinity() : s.cost.total();
  return s;
}

struct ConsensusCheck {
  bool reached = false;
  double final_residual = 0.0;
  std::vector<double> residual;
};

/// r(t) = max_{i,j} ||x_i(t) - x_j(t)|| over the selected components of each agent's state
/// (all components when `components` is empty).
inline ConsensusCheck check_consensus(const VectorTrajectory& x, int N, double tol,
                                      const std::vector<int>& components = {}) {
  if (N < 1 || x.rows() % N != 0) throw StructuralError("state dimension is not a multiple of N");
  const auto n = x.rows() / N;
  std::vector<int> comp = components;
  if (comp.empty())
    for (int c = 0; c < n; ++c) comp.push_back(c);
  ConsensusCheck out;
  for (int j = 0; j < x.size(); ++j) {
    double r = 0.0;
    for (int a = 0; a < N; ++a)
      for (int b = a + 1; b < N; ++b) {
        double s = 0.0;
        for (int c : comp) {
          const double d = x[j](a * n + c) - x[j](b * n + c);
          s += d * d;
        }
        r = std::max(r, std::sqrt(s));
      }
    out.residual.push_back(r);
  }
  out.final_residual = out.residual.back();
  out.reached = out.final_residual <= tol;
  return out;
}

/// max_i ||selected components of x_i(T)||.
inline double max_component_norm(const Vector& x, int N, const std::vector<int>& components) {
  const auto n = x.size() / N;
  double m = 0.0;
  for (int a = 0; a < N; ++a) {
    double s = 0.0;
    for (int c : components) s += x(a * n + c) * x(a * n + c);
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

struct UGVParams {
  double C = 1.0;  // translational friction
  double D = 1.0;  // mass
  Eigen::Vector2d q0 = Eigen::Vector2d::Zero();
  Eigen::Vector2d v0 = Eigen::Vector2d::Zero();
};

/// Planar vehicles q' = v, v' = -(C/D) v + F/D; state (q, v), input F, Q_ij = I on graph edges, R_i = I.
inline MultiAgentSystem build_ugv_scenario(const std::vector<UGVParams>& ugvs, const Topology& topology) {
  if (static_cast<int>(ugvs.size()) != topology.N()) throw StructuralError("one UGV per topology node expected");
  MultiAgentSystem sys;
  sys.topology = topology;
  const Matrix I2 = Matrix::Identity(2, 2);
  for (std::size_t i = 0; i < ugvs.size(); ++i) {
    const auto& p = ugvs[i];
    if (!(p.C > 0.0) || !(p.D > 0.0) || !std::isfinite(p.C) || !std::isfinite(p.D))
      throw ParameterError("UGV " + std::to_string(i + 1) + ": friction C and mass D must be positive");
    Matrix A = Matrix::Zero(4, 4);
    A.block(0, 2, 2, 2) = I2;
    A.block(2, 2, 2, 2) = -(p.C / p.D) * I2;
    Matrix B = Matrix::Zero(4, 2);
    B.block(2, 0, 2, 2) = I2 / p.D;
    Vector x0(4);
    x0 << p.q0, p.v0;
    sys.A.push_back(A);
    sys.B.push_back(B);
    sys.R.push_back(I2);
    sys.x0.push_back(x0);
  }
  sys.set_edge_weights_identity();
  return sys;
}

}  // namespace distlq
