#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "distlq/errors.hpp"
#include "distlq/numerics.hpp"

namespace distlq {

/// min over x(.), u(.) of int_0^T x'Qx + u'Ru dt  s.t.  xdot = Ax + Bu, x(0) = x0, x(T) = xT.
struct LQTerminalProblem {
  Matrix A, B, Q, R;
  double T = 1.0;
  Vector x0, xT;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }

  void validate() const {
    const auto n = A.rows();
    if (n == 0 || A.cols() != n) throw StructuralError("A must be square and non-empty");
    if (B.rows() != n || B.cols() == 0) throw StructuralError("B must have as many rows as A");
    if (Q.rows() != n || Q.cols() != n) throw StructuralError("Q must match the state dimension");
    if (R.rows() != B.cols() || R.cols() != B.cols())
      throw StructuralError("R must match the input dimension");
    if (x0.size() != n || xT.size() != n) throw StructuralError("x0 and xT must have the state dimension");
    if (!A.allFinite() || !B.allFinite() || !Q.allFinite() || !R.allFinite() || !x0.allFinite() ||
        !xT.allFinite())
      throw StructuralError("problem data must be finite");
    if (!(T > 0.0) || !std::isfinite(T)) throw ParameterError("horizon T must be positive");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
      throw StructuralError("Q must be symmetric");
    if (min_symmetric_eigenvalue(Q) < -1e-10) throw ParameterError("Q must be positive semidefinite");
    if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, R.cwiseAbs().maxCoeff()))
      throw StructuralError("R must be symmetric");
    if (min_symmetric_eigenvalue(R) <= 0.0) throw ParameterError("R must be positive definite");
  }

  Matrix R_inverse() const { return R.ldlt().solve(Matrix::Identity(R.rows(), R.cols())); }
  /// R^{-1} B'.
  Matrix gain_factor() const { return R.ldlt().solve(B.transpose()); }
  /// B R^{-1} B'.
  Matrix S() const { return symmetrize(B * gain_factor()); }
};

/// Local data held by agent `index`.
struct AgentView {
  int index = 0;
  Matrix A, B, Q, M;
  Vector x0, xT;
};

/// Undirected graph with 0-based nodes and a coupling gain gamma.
class Topology {
 public:
  Topology() = default;
  Topology(int N, std::vector<std::pair<int, int>> edges, double gamma)
      : N_(N), gamma_(gamma) {
    if (N < 1) throw StructuralError("topology needs at least one agent");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ParameterError("gamma must be positive");
    std::set<std::pair<int, int>> seen;
    for (auto [a, b] : edges) {
      if (a < 0 || b < 0 || a >= N || b >= N) throw StructuralError("edge endpoint out of range");
      if (a == b) throw StructuralError("self loops are not allowed");
      if (a > b) std::swap(a, b);
      if (!seen.insert({a, b}).second) throw StructuralError("duplicate edge");
      edges_.emplace_back(a, b);
    }
    neighbors_.assign(N, {});
    laplacian_ = Matrix::Zero(N, N);
    for (auto [a, b] : edges_) {
      neighbors_[a].push_back(b);
      neighbors_[b].push_back(a);
      laplacian_(a, a) += 1.0;
      laplacian_(b, b) += 1.0;
      laplacian_(a, b) -= 1.0;
      laplacian_(b, a) -= 1.0;
    }
    for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  }

  static Topology ring(int N, double gamma) {
    std::vector<std::pair<int, int>> e;
    if (N == 2) e.emplace_back(0, 1);
    if (N > 2)
      for (int i = 0; i < N; ++i) e.emplace_back(i, (i + 1) % N);
    return Topology(N, e, gamma);
  }

  static Topology complete(int N, double gamma) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) e.emplace_back(i, j);
    return Topology(N, e, gamma);
  }

  int N() const noexcept { return N_; }
  double gamma() const noexcept { return gamma_; }
  Topology with_gamma(double g) const { return Topology(N_, edges_, g); }
  const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_.at(i); }
  const Matrix& laplacian() const noexcept { return laplacian_; }

  bool adjacent(int i, int j) const {
    const auto& nb = neighbors_.at(i);
    return std::binary_search(nb.begin(), nb.end(), j);
  }

  int component_count() const {
    std::vector<int> seen(N_, 0);
    int count = 0;
    for (int s = 0; s < N_; ++s) {
      if (seen[s]) continue;
      ++count;
      std::queue<int> q;
      q.push(s);
      seen[s] = 1;
      while (!q.empty()) {
        const int v = q.front();
        q.pop();
        for (int w : neighbors_[v])
          if (!seen[w]) seen[w] = 1, q.push(w);
      }
    }
    return count;
  }

  bool is_connected() const { return component_count() == 1; }

  /// Eigenvalues of L in ascending order.
  Vector laplacian_spectrum() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(laplacian_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

 private:
  int N_ = 1;
  double gamma_ = 1.0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> neighbors_{{}};
  Matrix laplacian_ = Matrix::Zero(1, 1);
};

/// alpha_k = scale / k^exponent with exponent in (1/2, 1].
struct StepSize {
  double scale = 1.0;
  double exponent = 1.0;

  StepSize() = default;
  StepSize(double s, double e) : scale(s), exponent(e) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("step size scale must be positive");
    if (!(e > 0.5 && e <= 1.0))
      throw ParameterError("step size exponent must lie in (0.5, 1] so that the sum diverges and the "
                           "sum of squares converges");
  }

  double operator()(int k) const { return scale / std::pow(static_cast<double>(k), exponent); }

  /// Accepts "1/k", "c/k", "1/k^p" and "c/k^p".
  static StepSize parse(const std::string& text) {
    std::string s;
    for (char c : text)
      if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    const auto slash = s.find('/');
    if (slash == std::string::npos || slash + 1 >= s.size() || s[slash + 1] != 'k')
      throw ParameterError("step size rule must look like \"c/k\" or \"c/k^p\", got \"" + text + "\"");
    double scale = 0.0, exponent = 1.0;
    try {
      std::size_t used = 0;
      scale = std::stod(s.substr(0, slash), &used);
      if (used != slash) throw std::invalid_argument("scale");
      const std::string tail = s.substr(slash + 2);
      if (!tail.empty()) {
        if (tail[0] != '^') throw std::invalid_argument("exponent");
        exponent = std::stod(tail.substr(1), &used);
        if (used != tail.size() - 1) throw std::invalid_argument("exponent");
      }
    } catch (const std::invalid_argument&) {
      throw ParameterError("cannot parse step size rule \"" + text + "\"");
    } catch (const std::out_of_range&) {
      throw ParameterError("cannot parse step size rule \"" + text + "\"");
    }
    return StepSize(scale, exponent);
  }

  std::string to_string() const {
    auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    std::string out = num(scale) + "/k";
    if (exponent != 1.0) out += "^" + num(exponent);
    return out;
  }

  friend bool operator==(const StepSize&, const StepSize&) = default;
};

/// How a consensus-tracking loop decides it has converged.
enum class StopRule {
  /// max_i ||X_{i,k} - X_{i,k-1}|| < tol only.
  step,
  /// step delta < tol and max_i max_{j in N_i} ||X_j - X_i|| < tol.
  step_and_disagreement,
};

inline std::string to_string(StopRule r) {
  return r == StopRule::step ? "step" : "step_and_disagreement";
}

inline StopRule parse_stop_rule(const std::string& s) {
  if (s == "step") return StopRule::step;
  if (s == "step_and_disagreement") return StopRule::step_and_disagreement;
  throw ParameterError("unknown stop rule \"" + s + "\"");
}

struct IterationSchedule {
  StepSize alpha;
  double tol_inner = 1e-3;  // consensus loops and the distributed outer loop
  double tol_outer = 1e-3;  // centralized Riccati outer loop
  int max_n = 20;           // outer Riccati iterations
  int max_k = 200;          // Z/V consensus rounds
  int max_varpi = 200;      // W rounds
  int max_q = 200;          // lambda rounds
  int max_w = 200;          // x rounds
  double rank_tol = 1e-10;
  double local_rank_tol = 1e-2;
  StopRule stop_rule = StopRule::step_and_disagreement;
  bool record_history = false;

  void validate() const {
    if (!(tol_inner > 0.0) || !(tol_outer > 0.0)) throw ParameterError("tolerances must be positive");
    if (max_n < 1 || max_k < 1 || max_varpi < 1 || max_q < 1 || max_w < 1)
      throw ParameterError("iteration caps must be at least 1");
    if (!(rank_tol > 0.0) || !(local_rank_tol > 0.0)) throw ParameterError("rank tolerances must be positive");
  }
};

/// Flat key/value record of a solver run, written out as the summary document.
struct ScenarioSummary {
  std::map<std::string, double> norms;
  std::map<std::string, double> costs;
  std::map<std::string, double> errors;
  std::map<std::string, int> iterations;
  std::map<std::string, double> consensus_residuals;

  bool all_finite() const {
    for (const auto* m : {&norms, &costs, &errors, &consensus_residuals})
      for (const auto& [k, v] : *m)
        if (!std::isfinite(v)) return false;
    return true;
  }
};

struct AssumptionCheck {
  std::string name;
  double residual = 0.0;
  bool passed = false;
};

struct DecompositionReport {
  std::vector<AssumptionCheck> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const AssumptionCheck& at(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw StructuralError("no check named " + name);
  }
};

namespace detail {
inline double max_abs(const Matrix& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }
}  // namespace detail

/// Checks that the agent means reconstruct the global data. Residuals are max-abs entries of
/// the difference between the agent mean and the global quantity.
inline DecompositionReport validate_decomposition(const std::vector<AgentView>& views,
                                                  const LQTerminalProblem& problem, double tol = 1e-9) {
  if (views.empty()) throw StructuralError("at least one agent view is required");
  problem.validate();
  const auto n = problem.n(), m = problem.m();
  for (const auto& v : views) {
    const bool ok = v.A.rows() == n && v.A.cols() == n && v.B.rows() == n && v.B.cols() == m &&
                    v.Q.rows() == n && v.Q.cols() == n && v.M.rows() == n && v.x0.size() == n &&
                    v.xT.size() == n && v.M.cols() == views.front().M.cols();
    if (!ok) throw StructuralError("agent " + std::to_string(v.index + 1) + " has inconsistent dimensions");
  }
  const double N = static_cast<double>(views.size());
  Matrix A = Matrix::Zero(n, n), B = Matrix::Zero(n, m), Q = Matrix::Zero(n, n), MM = Matrix::Zero(n, n);
  Vector x0 = Vector::Zero(n), xT = Vector::Zero(n);
  for (const auto& v : views) {
    A += v.A / N;
    B += v.B / N;
    Q += v.Q / N;
    MM += v.M * v.M.transpose() / N;
    x0 += v.x0 / N;
    xT += v.xT / N;
  }
  DecompositionReport r;
  auto add = [&](std::string name, double res) { r.checks.push_back({std::move(name), res, res <= tol}); };
  add("mean(A_i) = A", detail::max_abs(A - problem.A));
  add("mean(B_i) = B", detail::max_abs(B - problem.B));
  add("mean(Q_i) = Q", detail::max_abs(Q - problem.Q));
  add("mean(x_i0) = x0", detail::max_abs(x0 - problem.x0));
  add("mean(x_iT) = xT", detail::max_abs(xT - problem.xT));
  add("mean(M_i M_i') = B R^-1 B'", detail::max_abs(MM - problem.S()));
  return r;
}

struct GammaCheck {
  bool valid = false;
  double spectral_radius = 0.0;
};

/// rho = spectral radius of I - L/gamma - 11'/N; the coupling is usable when rho < 1.
inline GammaCheck validate_gamma(const Topology& topology) {
  if (!topology.is_connected())
    throw TopologyError("communication graph is disconnected (" +
                        std::to_string(topology.component_count()) + " components)");
  const int N = topology.N();
  const Matrix M = Matrix::Identity(N, N) - topology.laplacian() / topology.gamma() -
                   Matrix::Constant(N, N, 1.0 / N);
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
  return {rho < 1.0, rho};
}

struct ReachabilityCheck {
  bool reachable = false;
  /// ||G G^+ r - r|| for r = Phi(T,0) x0 - xT.
  double residual = 0.0;
};

/// Whether Phi(T,0) x0 - xT lies in the range of the Gramian.
inline ReachabilityCheck check_reachability(const LQTerminalProblem& problem, const Matrix& gramian,
                                            const Matrix& phi_T0, double rank_tol = 1e-10) {
  const Vector r = phi_T0 * problem.x0 - problem.xT;
  const Matrix Gp = pseudo_inverse(gramian, rank_tol);
  const double residual = (gramian * (Gp * r) - r).norm();
  const double threshold = std::sqrt(rank_tol) * std::max(1.0, r.norm());
  return {residual <= threshold, residual};
}

}  // namespace distlq
