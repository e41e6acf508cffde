#pragma once

#include <stdexcept>
#include <string>

namespace distlq {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatches and malformed inputs.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Parameter outside its admissible range (mass, friction, step sizes, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class IntegrationDivergence : public Error {
 public:
  explicit IntegrationDivergence(int node)
      : Error("integration diverged: non-finite value at grid node " + std::to_string(node)),
        node_(node) {}
  int node() const noexcept { return node_; }

 private:
  int node_;
};

class LyapunovError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class TopologyError : public Error {
 public:
  explicit TopologyError(const std::string& what, double spectral_radius = -1.0)
      : Error(what), spectral_radius_(spectral_radius) {}
  /// Negative when the failure is not a coupling (gamma) failure.
  double spectral_radius() const noexcept { return spectral_radius_; }

 private:
  double spectral_radius_;
};

class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, int iterations, double last_delta)
      : Error(what + " (iterations=" + std::to_string(iterations) +
              ", last delta=" + std::to_string(last_delta) + ")"),
        iterations_(iterations),
        last_delta_(last_delta) {}
  int iterations() const noexcept { return iterations_; }
  double last_delta() const noexcept { return last_delta_; }

 private:
  int iterations_;
  double last_delta_;
};

class ReachabilityError : public Error {
 public:
  ReachabilityError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class StabilizabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace distlq
