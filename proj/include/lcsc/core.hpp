#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace lcsc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller violated a documented precondition (dimension mismatch, bad range, ...).
struct ContractViolation : Error {
  using Error::Error;
};

/// Adaptive step size underflowed while resolving a near-tangential boundary contact.
struct GrazingError : Error {
  using Error::Error;
};

/// The state left the closed domain by more than the configured tolerance.
struct DriftError : Error {
  using Error::Error;
};

/// Limit-cycle search did not converge within the cycle budget.
struct NoCycleError : Error {
  using Error::Error;
};

/// The requested anchor event never occurred along the trajectory.
struct AnchorError : Error {
  using Error::Error;
};

/// Perturbed and unperturbed cycles do not share the same event sequence.
struct TopologyChangeError : Error {
  using Error::Error;
};

/// Saltation requested at a crossing with vanishing normal velocity.
struct NonTransversalError : Error {
  using Error::Error;
};

/// Backward fundamental matrix lacks a usable unit eigenvalue.
struct MonodromyError : Error {
  using Error::Error;
};

/// A timing region is not entered and exited exactly once per period.
struct RegionTopologyError : Error {
  using Error::Error;
};

/// An oscillator in a coupled run stopped producing its cycle events.
struct DesynchronizationError : Error {
  using Error::Error;
};

/// Evaluation outside the physically meaningful range (e.g. friction-law pole).
struct DomainError : Error {
  using Error::Error;
};

/// Generic integration failure (step-size underflow away from any boundary).
struct IntegrationError : Error {
  using Error::Error;
};

/// Signed difference between two phases on the circle [0, T), mapped into
/// [-T/2, T/2]. The exact half-period tie resolves to +T/2; the lower branch
/// applies only for a strict inequality.
inline double periodic_difference(double theta, double psi, double period) {
  if (!(period > 0.0)) {
    throw ContractViolation("periodic_difference: period must be positive");
  }
  double d = theta - psi;
  d = std::fmod(d, period);
  if (d < -period / 2.0) {
    d += period;
  } else if (d > period / 2.0) {
    d -= period;
  }
  return d;
}

/// Wrap a time value into [0, T).
inline double wrap_phase(double t, double period) {
  double w = std::fmod(t, period);
  if (w < 0.0) w += period;
  return w;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace lcsc
