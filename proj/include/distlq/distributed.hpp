#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "distlq/centralized.hpp"
#include "distlq/consensus.hpp"
#include "distlq/errors.hpp"
#include "distlq/model.hpp"
#include "distlq/numerics.hpp"

namespace distlq {

struct AgentIterate {
  int index = 0;
  MatrixTrajectory Z, V, P, Phi, Psi;
  Matrix W;
  Vector lambda;
  VectorTrajectory beta, x, u;
};

struct LoopStats {
  std::string quantity;
  int rounds = 0;
  double step_delta = 0.0;
  double disagreement = 0.0;
  bool converged = false;
};

struct ZVPResult {
  std::vector<AgentIterate> agents;
  int outer_iterations = 0;
  double last_delta = 0.0;
  std::vector<LoopStats> inner;
  /// history[n][i] = P_i^n when history recording is on (n = 0 is the zero start).
  std::vector<std::vector<MatrixTrajectory>> history;
};

struct DistributedSolution {
  std::vector<AgentIterate> agents;
  GammaCheck gamma;
  int outer_iterations = 0;
  double last_delta = 0.0;
  std::vector<LoopStats> loops;
  ConsensusDiagnostics diagnostics;
  std::vector<std::vector<MatrixTrajectory>> history;
  /// max_i ||x_i(T) - mean_i x_iT||.
  double terminal_residual = 0.0;
  bool reachability_warning = false;
};

namespace detail {

inline Vector flatten(const MatrixTrajectory& X) {
  const Eigen::Index b = X.rows() * X.cols();
  Vector v(b * X.size());
  for (int j = 0; j < X.size(); ++j) v.segment(j * b, b) = Eigen::Map<const Vector>(X[j].data(), b);
  return v;
}

inline Vector flatten(const VectorTrajectory& X) {
  const Eigen::Index b = X.rows();
  Vector v(b * X.size());
  for (int j = 0; j < X.size(); ++j) v.segment(j * b, b) = X[j];
  return v;
}

inline MatrixTrajectory unflatten_matrices(const Vector& v, const TimeGrid& grid, Eigen::Index rows,
                                           Eigen::Index cols) {
  const Eigen::Index b = rows * cols;
  std::vector<Matrix> s(grid.num_nodes());
  for (int j = 0; j < grid.num_nodes(); ++j) s[j] = Eigen::Map<const Matrix>(v.data() + j * b, rows, cols);
  return MatrixTrajectory(grid, std::move(s));
}

inline VectorTrajectory unflatten_vectors(const Vector& v, const TimeGrid& grid, Eigen::Index n) {
  std::vector<Vector> s(grid.num_nodes());
  for (int j = 0; j < grid.num_nodes(); ++j) s[j] = v.segment(j * n, n);
  return VectorTrajectory(grid, std::move(s));
}

inline Vector flatten_matrix(const Matrix& M) { return Eigen::Map<const Vector>(M.data(), M.size()); }

inline Matrix unflatten_matrix(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline void check_views(const std::vector<AgentView>& views, const Topology& topology) {
  if (views.empty()) throw StructuralError("at least one agent view is required");
  if (static_cast<int>(views.size()) != topology.N())
    throw StructuralError("number of agent views does not match the topology");
  const auto n = views.front().A.rows();
  const auto m = views.front().B.cols();
  for (const auto& v : views) {
    if (v.A.rows() != n || v.A.cols() != n || v.B.rows() != n || v.B.cols() != m || v.Q.rows() != n ||
        v.Q.cols() != n || v.M.rows() != n || v.x0.size() != n || v.xT.size() != n)
      throw StructuralError("agent " + std::to_string(v.index + 1) + " has inconsistent dimensions");
  }
}

inline ConsensusOptions loop_options(const IterationSchedule& s, int max_rounds, Eigen::Index block,
                                     std::string quantity, ConsensusDiagnostics* diag) {
  ConsensusOptions o;
  o.alpha = s.alpha;
  o.tol = s.tol_inner;
  o.max_rounds = max_rounds;
  o.stop_rule = s.stop_rule;
  o.block_size = block;
  o.quantity = std::move(quantity);
  o.diagnostics = s.record_history ? diag : nullptr;
  return o;
}

inline LoopStats stats_of(const ConsensusRun& r, std::string quantity) {
  return {std::move(quantity), r.rounds, r.step_delta, r.disagreement, r.converged};
}

inline GammaCheck require_valid_gamma(const Topology& topology) {
  const auto g = validate_gamma(topology);
  if (!g.valid)
    throw TopologyError("coupling gain gamma = " + std::to_string(topology.gamma()) +
                            " is not admissible: spectral radius of I - L/gamma - 11'/N is " +
                            std::to_string(g.spectral_radius) + " (needs < 1)",
                        g.spectral_radius);
  return g;
}

}  // namespace detail

/// Outer Riccati loop where every agent only knows (A_i, Q_i, M_i): in round n the agents
/// agree on Z = mean(A_i - M_i M_i' P_i) and V = mean(Q_i + P_i M_i M_i' P_i) by consensus
/// tracking, then each solves its own Lyapunov ODE for P_i.
/// `reference` (global data) only feeds the mean-error diagnostics.
inline ZVPResult run_ZV_P_loops(const std::vector<AgentView>& views, const Topology& topology,
                                const IterationSchedule& schedule, const TimeGrid& grid,
                                ConsensusDiagnostics* diagnostics = nullptr,
                                const LQTerminalProblem* reference = nullptr) {
  detail::check_views(views, topology);
  detail::require_valid_gamma(topology);
  schedule.validate();
  const int N = topology.N();
  const auto n = views.front().A.rows();
  const Eigen::Index block = n * n;

  std::vector<Matrix> MM(N);
  for (int i = 0; i < N; ++i) MM[i] = views[i].M * views[i].M.transpose();

  ZVPResult out;
  std::vector<MatrixTrajectory> P(N, MatrixTrajectory::constant(grid, Matrix::Zero(n, n)));
  std::vector<MatrixTrajectory> Z(N), V(N);
  if (schedule.record_history) out.history.push_back(P);

  double delta = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= schedule.max_n; ++it) {
    std::vector<Vector> targets(N);
    for (int i = 0; i < N; ++i) {
      const auto& v = views[i];
      auto gz = P[i].map([&](const Matrix& p) -> Matrix { return v.A - MM[i] * p; });
      auto gv = P[i].map([&](const Matrix& p) -> Matrix { return symmetrize(v.Q + p * MM[i] * p); });
      targets[i].resize(2 * block * grid.num_nodes());
      targets[i] << detail::flatten(gz), detail::flatten(gv);
    }

    Vector ref;
    auto opt = detail::loop_options(schedule, schedule.max_k, block, "ZV", diagnostics);
    const std::string tag = "@n" + std::to_string(it);
    opt.segments = {{"Z" + tag, block * grid.num_nodes()}, {"V" + tag, block * grid.num_nodes()}};
    if (reference && opt.diagnostics) {
      const Matrix S = reference->S();
      std::vector<Matrix> Pbar(grid.num_nodes(), Matrix::Zero(n, n));
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < grid.num_nodes(); ++j) Pbar[j] += P[i][j] / N;
      const MatrixTrajectory Pm(grid, Pbar);
      ref.resize(2 * block * grid.num_nodes());
      ref << detail::flatten(Pm.map([&](const Matrix& p) -> Matrix { return reference->A - S * p; })),
          detail::flatten(Pm.map([&](const Matrix& p) -> Matrix { return symmetrize(reference->Q + p * S * p); }));
      opt.reference_target = &ref;
    }
    const auto run = run_consensus_tracking(targets, topology, opt);
    out.inner.push_back(detail::stats_of(run, "ZV" + tag));

    double d = 0.0;
    std::vector<MatrixTrajectory> Pn(N);
    for (int i = 0; i < N; ++i) {
      const Eigen::Index half = block * grid.num_nodes();
      Z[i] = detail::unflatten_matrices(run.values[i].head(half), grid, n, n);
      V[i] = detail::unflatten_matrices(run.values[i].tail(half), grid, n, n);
      Pn[i] = solve_lyapunov_ode(Z[i], V[i]);
      for (int j = 0; j < Pn[i].size(); ++j) Pn[i][j] = symmetrize(Pn[i][j]);
      d = std::max(d, Pn[i].max_node_distance(P[i]));
    }
    P = std::move(Pn);
    delta = d;
    if (schedule.record_history) out.history.push_back(P);
    if (delta < schedule.tol_inner) {
      out.outer_iterations = it;
      out.last_delta = delta;
      out.agents.resize(N);
      for (int i = 0; i < N; ++i) {
        auto& a = out.agents[i];
        a.index = views[i].index;
        a.Z = std::move(Z[i]);
        a.V = std::move(V[i]);
        a.P = std::move(P[i]);
        std::tie(a.Phi, a.Psi) = transition_matrices(a.Z);
      }
      return out;
    }
  }
  throw ConvergenceFailure("distributed Riccati iteration did not reach tolerance", schedule.max_n, delta);
}

/// Agents agree on W = R^{-1/2} B' starting from their local R^{-1/2} B_i'.
inline std::pair<std::vector<Matrix>, LoopStats> run_W_loop(const std::vector<AgentView>& views, const Matrix& R,
                                                            const Topology& topology,
                                                            const IterationSchedule& schedule,
                                                            ConsensusDiagnostics* diagnostics = nullptr) {
  detail::check_views(views, topology);
  const Matrix Rmh = inverse_sqrt_spd(R);
  if (R.rows() != views.front().B.cols()) throw StructuralError("R does not match the input dimension");
  const auto rows = Rmh.rows(), cols = views.front().B.rows();
  std::vector<Vector> targets;
  for (const auto& v : views) targets.push_back(detail::flatten_matrix(Rmh * v.B.transpose()));
  const auto run = run_consensus_tracking(
      targets, topology, detail::loop_options(schedule, schedule.max_varpi, rows * cols, "W", diagnostics));
  std::vector<Matrix> W;
  for (const auto& x : run.values) W.push_back(detail::unflatten_matrix(x, rows, cols));
  return {std::move(W), detail::stats_of(run, "W")};
}

/// Local Gramian int Phi_i(T,s) W_i'W_i Phi_i(T,s)' ds.
inline Matrix local_gramian(const AgentIterate& a) { return compute_gramian(a.Phi, a.W.transpose() * a.W); }

/// Agents agree on lambda* from local targets rho_i^+ (Phi_i(T,0) x_i0 - x_iT).
inline std::pair<std::vector<Vector>, LoopStats> run_lambda_loop(const std::vector<AgentIterate>& agents,
                                                                 const std::vector<AgentView>& views,
                                                                 const Topology& topology,
                                                                 const IterationSchedule& schedule,
                                                                 ConsensusDiagnostics* diagnostics = nullptr) {
  detail::check_views(views, topology);
  std::vector<Vector> targets;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const Matrix rho = local_gramian(agents[i]);
    targets.push_back(pseudo_inverse(rho, schedule.local_rank_tol) *
                      (agents[i].Phi.back() * views[i].x0 - views[i].xT));
  }
  const auto n = targets.front().size();
  const auto run = run_consensus_tracking(
      targets, topology, detail::loop_options(schedule, schedule.max_q, n, "lambda", diagnostics));
  return {run.values, detail::stats_of(run, "lambda")};
}

inline VectorTrajectory integrate_beta_agent(const MatrixTrajectory& Z, const Vector& lambda) {
  return integrate_beta(Z, lambda);
}

/// Agents agree on x*(t) node-wise; the local target is the state of xdot = Z_i x - W_i'W_i beta_i
/// from x_i0.
inline std::pair<std::vector<VectorTrajectory>, LoopStats> run_x_loop(const std::vector<AgentIterate>& agents,
                                                                      const std::vector<AgentView>& views,
                                                                      const Topology& topology,
                                                                      const IterationSchedule& schedule,
                                                                      ConsensusDiagnostics* diagnostics = nullptr) {
  detail::check_views(views, topology);
  std::vector<Vector> targets;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    targets.push_back(detail::flatten(integrate_state(a.Z, a.beta, a.W.transpose() * a.W, views[i].x0)));
  }
  const auto n = views.front().A.rows();
  const auto run =
      run_consensus_tracking(targets, topology, detail::loop_options(schedule, schedule.max_w, n, "x", diagnostics));
  std::vector<VectorTrajectory> x;
  const auto& grid = agents.front().Z.grid();
  for (const auto& v : run.values) x.push_back(detail::unflatten_vectors(v, grid, n));
  return {std::move(x), detail::stats_of(run, "x")};
}

/// u_i = -R^{-1/2} W_i (P_i x_i + beta_i).
inline VectorTrajectory agent_controller(const Matrix& W, const MatrixTrajectory& P, const VectorTrajectory& x,
                                         const VectorTrajectory& beta, const Matrix& R) {
  return feedback_control(P, beta, x, inverse_sqrt_spd(R) * W);
}

/// All stages of the partial-information algorithm.
inline DistributedSolution solve_distributed(const std::vector<AgentView>& views, const Matrix& R,
                                             const Topology& topology, const IterationSchedule& schedule,
                                             const TimeGrid& grid, const LQTerminalProblem* reference = nullptr) {
  detail::check_views(views, topology);
  DistributedSolution sol;
  sol.gamma = detail::require_valid_gamma(topology);
  auto* diag = schedule.record_history ? &sol.diagnostics : nullptr;

  auto zvp = run_ZV_P_loops(views, topology, schedule, grid, diag, reference);
  sol.outer_iterations = zvp.outer_iterations;
  sol.last_delta = zvp.last_delta;
  sol.loops = zvp.inner;
  sol.history = std::move(zvp.history);
  sol.agents = std::move(zvp.agents);

  auto [W, wstats] = run_W_loop(views, R, topology, schedule, diag);
  sol.loops.push_back(wstats);
  for (std::size_t i = 0; i < W.size(); ++i) sol.agents[i].W = std::move(W[i]);

  auto [lambda, lstats] = run_lambda_loop(sol.agents, views, topology, schedule, diag);
  sol.loops.push_back(lstats);
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    sol.agents[i].lambda = std::move(lambda[i]);
    sol.agents[i].beta = integrate_beta_agent(sol.agents[i].Z, sol.agents[i].lambda);
  }

  auto [x, xstats] = run_x_loop(sol.agents, views, topology, schedule, diag);
  sol.loops.push_back(xstats);

  Vector xT = Vector::Zero(views.front().xT.size());
  Vector x0 = Vector::Zero(xT.size());
  for (const auto& v : views) {
    xT += v.xT / static_cast<double>(views.size());
    x0 += v.x0 / static_cast<double>(views.size());
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto& a = sol.agents[i];
    a.x = std::move(x[i]);
    a.u = agent_controller(a.W, a.P, a.x, a.beta, R);
    sol.terminal_residual = std::max(sol.terminal_residual, (a.x.back() - xT).norm());
  }
  sol.reachability_warning = sol.terminal_residual > 1e-2 * std::max(1.0, (x0 - xT).norm());
  return sol;
}

}  // namespace distlq
