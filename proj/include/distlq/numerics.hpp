#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "distlq/errors.hpp"

namespace distlq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Uniform grid on [t_start, t_end] with num_steps intervals (num_steps + 1 nodes).
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double t_end, int num_steps) : TimeGrid(0.0, t_end, num_steps) {}
  TimeGrid(double t_start, double t_end, int num_steps)
      : t_start_(t_start), t_end_(t_end), num_steps_(num_steps) {
    if (!(t_end > t_start) || !std::isfinite(t_start) || !std::isfinite(t_end))
      throw StructuralError("time grid requires t_end > t_start");
    if (num_steps < 2) throw StructuralError("time grid requires at least 2 steps");
  }

  double t_start() const noexcept { return t_start_; }
  double t_end() const noexcept { return t_end_; }
  int num_steps() const noexcept { return num_steps_; }
  int num_nodes() const noexcept { return num_steps_ + 1; }
  double step() const noexcept { return (t_end_ - t_start_) / num_steps_; }

  double time(int node) const noexcept {
    return node == num_steps_ ? t_end_ : t_start_ + node * step();
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.t_start_ == b.t_start_ && a.t_end_ == b.t_end_ && a.num_steps_ == b.num_steps_;
  }

 private:
  double t_start_ = 0.0;
  double t_end_ = 1.0;
  int num_steps_ = 2;
};

/// Samples of a matrix- or vector-valued function on a TimeGrid. Between nodes the
/// function is the linear interpolant of the two neighbouring samples.
template <class Sample>
class Trajectory {
 public:
  Trajectory() = default;

  Trajectory(TimeGrid grid, std::vector<Sample> samples)
      : grid_(grid), samples_(std::move(samples)) {
    if (static_cast<int>(samples_.size()) != grid_.num_nodes())
      throw StructuralError("trajectory needs one sample per grid node");
    for (const auto& s : samples_)
      if (s.rows() != samples_.front().rows() || s.cols() != samples_.front().cols())
        throw StructuralError("trajectory samples must share one dimension");
  }

  static Trajectory constant(const TimeGrid& grid, const Sample& value) {
    return Trajectory(grid, std::vector<Sample>(grid.num_nodes(), value));
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  int size() const noexcept { return static_cast<int>(samples_.size()); }
  const Sample& operator[](int node) const { return samples_[node]; }
  Sample& operator[](int node) { return samples_[node]; }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Sample& front() const { return samples_.front(); }
  const Sample& back() const { return samples_.back(); }
  Eigen::Index rows() const { return samples_.empty() ? 0 : samples_.front().rows(); }
  Eigen::Index cols() const { return samples_.empty() ? 0 : samples_.front().cols(); }

  Sample at(double t) const {
    const double s = (t - grid_.t_start()) / grid_.step();
    if (s <= 0.0) return samples_.front();
    if (s >= grid_.num_steps()) return samples_.back();
    const int j = static_cast<int>(std::floor(s));
    const double w = s - j;
    constexpr double snap = 1e-9;
    if (w < snap) return samples_[j];
    if (w > 1.0 - snap) return samples_[j + 1];
    return (1.0 - w) * samples_[j] + w * samples_[j + 1];
  }

  /// Max over nodes of the Frobenius norm of the sample difference.
  double max_node_distance(const Trajectory& other) const {
    if (other.size() != size()) throw StructuralError("trajectories live on different grids");
    double d = 0.0;
    for (int j = 0; j < size(); ++j) d = std::max(d, (samples_[j] - other.samples_[j]).norm());
    return d;
  }

  double max_node_norm() const {
    double d = 0.0;
    for (const auto& s : samples_) d = std::max(d, s.norm());
    return d;
  }

  template <class F>
  auto map(F&& f) const {
    using Out = std::decay_t<decltype(f(samples_.front()))>;
    std::vector<Out> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(f(s));
    return Trajectory<Out>(grid_, std::move(out));
  }

 private:
  TimeGrid grid_;
  std::vector<Sample> samples_;
};

using MatrixTrajectory = Trajectory<Matrix>;
using VectorTrajectory = Trajectory<Vector>;

enum class Direction { forward, backward };

/// Classical RK4 on the grid. `rhs(t, x)` returns dx/dt. A forward run fixes the value at
/// t_start, a backward run fixes it at t_end; either way every node is returned.
template <class Sample, class Rhs>
Trajectory<Sample> integrate_ode(Rhs&& rhs, const Sample& boundary_value, const TimeGrid& grid,
                                 Direction direction) {
  const int K = grid.num_steps();
  std::vector<Sample> out(grid.num_nodes());
  if (!boundary_value.allFinite())
    throw IntegrationDivergence(direction == Direction::forward ? 0 : K);
  const bool fwd = direction == Direction::forward;
  const double h = fwd ? grid.step() : -grid.step();
  int j = fwd ? 0 : K;
  out[j] = boundary_value;
  for (int s = 0; s < K; ++s) {
    const int next = fwd ? j + 1 : j - 1;
    const double t = grid.time(j);
    const double t_half = 0.5 * (grid.time(j) + grid.time(next));
    const double t_next = grid.time(next);
    const Sample& x = out[j];
    const Sample k1 = rhs(t, x);
    const Sample k2 = rhs(t_half, Sample(x + (0.5 * h) * k1));
    const Sample k3 = rhs(t_half, Sample(x + (0.5 * h) * k2));
    const Sample k4 = rhs(t_next, Sample(x + h * k3));
    out[next] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out[next].allFinite()) throw IntegrationDivergence(next);
    j = next;
  }
  return Trajectory<Sample>(grid, std::move(out));
}

template <class Rhs>
MatrixTrajectory integrate_matrix_ode(Rhs&& rhs, const Matrix& boundary_value, const TimeGrid& grid,
                                      Direction direction) {
  return integrate_ode<Matrix>(std::forward<Rhs>(rhs), boundary_value, grid, direction);
}

/// Composite Simpson weights on the grid nodes. Odd step counts close with the 3/8 rule
/// on the last three intervals.
inline std::vector<double> quadrature_weights(const TimeGrid& grid) {
  const int K = grid.num_steps();
  const double h = grid.step();
  std::vector<double> w(grid.num_nodes(), 0.0);
  const int simpson_end = (K % 2 == 0) ? K : K - 3;
  for (int j = 0; j < simpson_end; j += 2) {
    w[j] += h / 3.0;
    w[j + 1] += 4.0 * h / 3.0;
    w[j + 2] += h / 3.0;
  }
  if (simpson_end != K) {
    const int j = simpson_end;
    w[j] += 3.0 * h / 8.0;
    w[j + 1] += 9.0 * h / 8.0;
    w[j + 2] += 9.0 * h / 8.0;
    w[j + 3] += 3.0 * h / 8.0;
  }
  return w;
}

/// Integral over the whole grid of a sampled function.
template <class Sample>
Sample integrate_samples(const Trajectory<Sample>& f) {
  const auto w = quadrature_weights(f.grid());
  Sample acc = Sample::Zero(f.rows(), f.cols());
  for (int j = 0; j < f.size(); ++j) acc += w[j] * f[j];
  return acc;
}

inline double integrate_scalar(const TimeGrid& grid, const std::vector<double>& values) {
  if (static_cast<int>(values.size()) != grid.num_nodes())
    throw StructuralError("integrand needs one value per grid node");
  const auto w = quadrature_weights(grid);
  double acc = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) acc += w[j] * values[j];
  return acc;
}

inline Matrix symmetrize(const Matrix& P) { return 0.5 * (P + P.transpose()); }

/// e^{Mt}.
inline Matrix matrix_exponential(const Matrix& M, double t) {
  if (M.rows() != M.cols()) throw StructuralError("matrix_exponential needs a square matrix");
  if (!M.allFinite() || !std::isfinite(t)) throw StructuralError("matrix_exponential: non-finite input");
  const Matrix Mt = M * t;
  return Mt.exp();
}

/// Moore-Penrose pseudoinverse; singular values at or below rank_tol * sigma_max are dropped.
inline Matrix pseudo_inverse(const Matrix& M, double rank_tol = 1e-10) {
  if (!M.allFinite()) throw StructuralError("pseudo_inverse: non-finite input");
  if (M.size() == 0) return Matrix(M.cols(), M.rows());
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double cutoff = rank_tol * (sigma.size() ? sigma(0) : 0.0);
  Vector inv = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma(i) > cutoff && sigma(i) > 0.0) inv(i) = 1.0 / sigma(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Smallest |l_i + l_j| over eigenvalue pairs of Z (i == j included).
inline double min_eigenvalue_pair_sum(const Matrix& Z) {
  Eigen::EigenSolver<Matrix> es(Z, false);
  const auto ev = es.eigenvalues();
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    for (Eigen::Index j = i; j < ev.size(); ++j) m = std::min(m, std::abs(ev(i) + ev(j)));
  return m;
}

inline double spectral_abscissa(const Matrix& Z) {
  Eigen::EigenSolver<Matrix> es(Z, false);
  return es.eigenvalues().real().maxCoeff();
}

/// Solves Z'P + PZ + V = 0 through the vectorised Kronecker system.
/// Throws LyapunovError when some eigenvalue pair of Z has |l_i + l_j| < pair_tol * max(1, |l|max).
inline Matrix solve_lyapunov(const Matrix& Z, const Matrix& V, double pair_tol = 1e-12) {
  const Eigen::Index n = Z.rows();
  if (Z.cols() != n || V.rows() != n || V.cols() != n)
    throw StructuralError("solve_lyapunov: dimension mismatch");
  if (!Z.allFinite() || !V.allFinite()) throw LyapunovError("solve_lyapunov: non-finite input");

  Eigen::EigenSolver<Matrix> es(Z, false);
  const auto ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      if (std::abs(ev(i) + ev(j)) < pair_tol * scale)
        throw LyapunovError("Lyapunov operator singular: eigenvalue pair sums to ~0 (|l_i+l_j| = " +
                            std::to_string(std::abs(ev(i) + ev(j))) + ")");

  // vec(Z'P + PZ) = (I (x) Z' + Z' (x) I) vec(P), column-major vec.
  const Matrix Zt = Z.transpose();
  Matrix K = Matrix::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K.block(j * n, j * n, n, n) += Zt;
    for (Eigen::Index i = 0; i < n; ++i)
      K.block(i * n, j * n, n, n).diagonal().array() += Zt(i, j);
  }
  const Vector rhs = -Eigen::Map<const Vector>(V.data(), n * n);
  Vector p = K.partialPivLu().solve(rhs);
  Matrix P = Eigen::Map<Matrix>(p.data(), n, n);
  P = symmetrize(P);
  if (!P.allFinite()) throw LyapunovError("Lyapunov solve produced non-finite values");
  return P;
}

/// True iff min eig(P1 - P2) >= -slack.
inline bool psd_order_holds(const Matrix& P1, const Matrix& P2, double slack = 0.0) {
  if (P1.rows() != P2.rows() || P1.cols() != P2.cols())
    throw StructuralError("psd_order_holds: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(P1 - P2), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -slack;
}

inline double min_symmetric_eigenvalue(const Matrix& P) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(P), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

/// Symmetric inverse square root of a positive definite matrix.
inline Matrix inverse_sqrt_spd(const Matrix& R) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(R));
  if (es.eigenvalues().minCoeff() <= 0.0) throw StructuralError("matrix is not positive definite");
  return es.operatorInverseSqrt();
}

}  // namespace distlq
