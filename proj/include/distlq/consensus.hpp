#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "distlq/errors.hpp"
#include "distlq/model.hpp"
#include "distlq/numerics.hpp"

namespace distlq {

/// One synchronous round of
///   X_i <- X_i + alpha_k (g_i - X_i) + (1/gamma) sum_{j in N_i} (X_j - X_i).
/// Every update reads the previous round only.
template <class Value>
std::vector<Value> consensus_tracking_step(const std::vector<Value>& current, const std::vector<Value>& targets,
                                           int k, const StepSize& alpha, const Topology& topology) {
  const int N = topology.N();
  if (static_cast<int>(current.size()) != N || static_cast<int>(targets.size()) != N)
    throw StructuralError("consensus step needs one value and one target per agent");
  if (k < 1) throw ParameterError("consensus rounds are numbered from 1");
  const double a = alpha(k);
  const double c = 1.0 / topology.gamma();
  std::vector<Value> next(N);
  for (int i = 0; i < N; ++i) {
    Value v = current[i] + a * (targets[i] - current[i]);
    for (int j : topology.neighbors(i)) v += c * (current[j] - current[i]);
    next[i] = std::move(v);
  }
  return next;
}

struct ConsensusRecord {
  int round = 0;
  std::string quantity;
  /// Max pairwise deviation between agents.
  double delta_consensus = 0.0;
  /// Distance of the agent mean from the single-agent reference recursion.
  double delta_mean = 0.0;
};

class ConsensusDiagnostics {
 public:
  void add(ConsensusRecord r) { records_.push_back(std::move(r)); }
  void append(const ConsensusDiagnostics& other) {
    records_.insert(records_.end(), other.records_.begin(), other.records_.end());
  }
  const std::vector<ConsensusRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }

  std::vector<ConsensusRecord> series(const std::string& quantity) const {
    std::vector<ConsensusRecord> out;
    for (const auto& r : records_)
      if (r.quantity == quantity) out.push_back(r);
    return out;
  }

  /// Least-squares fit of delta_consensus ~ c rho^k over the recorded rounds of `quantity`.
  /// Returns NaN when fewer than two positive samples exist.
  double geometric_factor(const std::string& quantity) const {
    double sk = 0, sy = 0, skk = 0, sky = 0;
    int cnt = 0;
    for (const auto& r : records_) {
      if (r.quantity != quantity || !(r.delta_consensus > 0.0) || !std::isfinite(r.delta_consensus)) continue;
      const double y = std::log(r.delta_consensus);
      sk += r.round;
      sy += y;
      skk += double(r.round) * r.round;
      sky += r.round * y;
      ++cnt;
    }
    if (cnt < 2) return std::numeric_limits<double>::quiet_NaN();
    const double den = cnt * skk - sk * sk;
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::exp((cnt * sky - sk * sy) / den);
  }

 private:
  std::vector<ConsensusRecord> records_;
};

/// Values are flat vectors made of equally sized blocks (one block per grid node, or a single
/// block for constant quantities). Distances are the max over blocks of the block's 2-norm,
/// i.e. the max-node Frobenius norm for flattened matrix trajectories.
inline double block_max_norm(const Vector& v, Eigen::Index block_size) {
  if (block_size <= 0 || v.size() % block_size != 0) throw StructuralError("bad block size");
  double m = 0.0;
  for (Eigen::Index s = 0; s < v.size(); s += block_size) m = std::max(m, v.segment(s, block_size).norm());
  return m;
}

struct ConsensusOptions {
  StepSize alpha;
  double tol = 1e-3;
  int max_rounds = 200;
  StopRule stop_rule = StopRule::step_and_disagreement;
  Eigen::Index block_size = 1;
  std::string quantity = "X";
  ConsensusDiagnostics* diagnostics = nullptr;
  /// Target of the reference recursion used for delta_mean; defaults to the agents' mean target.
  const Vector* reference_target = nullptr;
  /// Optional split of the flat value into named parts, each reported as its own quantity.
  std::vector<std::pair<std::string, Eigen::Index>> segments;
  /// Resume from these values instead of zero, numbering rounds from first_round.
  const std::vector<Vector>* initial = nullptr;
  int first_round = 1;
};

struct ConsensusRun {
  std::vector<Vector> values;
  int rounds = 0;
  double step_delta = 0.0;
  double disagreement = 0.0;
  bool converged = false;
};

inline double max_neighbor_disagreement(const std::vector<Vector>& X, const Topology& topology,
                                        Eigen::Index block_size) {
  double d = 0.0;
  for (int i = 0; i < topology.N(); ++i)
    for (int j : topology.neighbors(i)) d = std::max(d, block_max_norm(X[j] - X[i], block_size));
  return d;
}

inline double max_pairwise_deviation(const std::vector<Vector>& X, Eigen::Index block_size) {
  double d = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j = i + 1; j < X.size(); ++j) d = std::max(d, block_max_norm(X[i] - X[j], block_size));
  return d;
}

/// Runs consensus tracking from X_{i,0} = 0 towards fixed local targets. The loop ends on the
/// first round at which the stop rule holds for every agent, or after max_rounds.
inline ConsensusRun run_consensus_tracking(const std::vector<Vector>& targets, const Topology& topology,
                                           const ConsensusOptions& opt) {
  const int N = topology.N();
  if (static_cast<int>(targets.size()) != N) throw StructuralError("one target per agent expected");
  const Eigen::Index len = targets.front().size();
  for (const auto& g : targets)
    if (g.size() != len) throw StructuralError("targets differ in size");
  if (opt.max_rounds < 1) throw ParameterError("max_rounds must be at least 1");

  Vector mean_target = Vector::Zero(len);
  for (const auto& g : targets) mean_target += g / N;
  const Vector& ref_target = opt.reference_target ? *opt.reference_target : mean_target;
  if (ref_target.size() != len) throw StructuralError("reference target has the wrong size");

  ConsensusRun run;
  run.values.assign(N, Vector::Zero(len));
  if (opt.initial) {
    if (static_cast<int>(opt.initial->size()) != N) throw StructuralError("one initial value per agent expected");
    for (int i = 0; i < N; ++i) {
      if ((*opt.initial)[i].size() != len) throw StructuralError("initial value has the wrong size");
      run.values[i] = (*opt.initial)[i];
    }
  }
  if (opt.first_round < 1) throw ParameterError("consensus rounds are numbered from 1");
  Vector reference = Vector::Zero(len);
  for (const auto& x : run.values) reference += x / N;
  for (int k = opt.first_round; k < opt.first_round + opt.max_rounds; ++k) {
    auto next = consensus_tracking_step(run.values, targets, k, opt.alpha, topology);
    double step = 0.0;
    for (int i = 0; i < N; ++i) step = std::max(step, block_max_norm(next[i] - run.values[i], opt.block_size));
    run.values = std::move(next);
    run.rounds = k - opt.first_round + 1;
    run.step_delta = step;
    run.disagreement = max_neighbor_disagreement(run.values, topology, opt.block_size);

    if (opt.diagnostics) {
      reference += opt.alpha(k) * (ref_target - reference);
      Vector mean = Vector::Zero(len);
      for (const auto& x : run.values) mean += x / N;
      if (opt.segments.empty()) {
        opt.diagnostics->add({k, opt.quantity, max_pairwise_deviation(run.values, opt.block_size),
                              block_max_norm(mean - reference, opt.block_size)});
      } else {
        Eigen::Index off = 0;
        for (const auto& [name, seg_len] : opt.segments) {
          std::vector<Vector> part(N);
          for (int i = 0; i < N; ++i) part[i] = run.values[i].segment(off, seg_len);
          opt.diagnostics->add({k, name, max_pairwise_deviation(part, opt.block_size),
                                block_max_norm(mean.segment(off, seg_len) - reference.segment(off, seg_len),
                                               opt.block_size)});
          off += seg_len;
        }
      }
    }

    bool done = step < opt.tol;
    if (opt.stop_rule == StopRule::step_and_disagreement) done = done && run.disagreement < opt.tol;
    if (done) {
      run.converged = true;
      break;
    }
  }
  return run;
}

}  // namespace distlq
