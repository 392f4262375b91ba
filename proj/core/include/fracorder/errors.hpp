#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fracorder {

// Every failure the library can signal, one code per contract-level error.
// The CLI maps these onto process exit codes, so the set is closed on purpose.
enum class errc {
  precondition,      // caller violated a documented pre; also config parse failures
  domain_error,      // argument outside the series domain (use the ODE path)
  non_convergence,   // series hit max degree before tolerance
  step_size,         // ODE grid too coarse for requested tolerance
  resolution,        // eigenvalue discretization error above threshold
  normalization,     // Neumann eigenfunction vanishes at x=0, cannot normalize
  unsupported_case,  // closed-form eigensolver asked for variable coefficients
  tail,              // no mode count meets the truncation tolerance
  sign_violation,    // (-1)^k p_k <= 0 beyond tail tolerance
  radius,            // power-series expansion requested outside w(eta) < lambda_min
  window,            // Laplace window eta*T too short, tail bias unusable
  noise_floor,       // peeling exponent fit has no usable signal
  max_iter,          // Gauss-Newton failed to converge
  degenerate_order,  // two fitted orders collapsed (model order too high)
  all_fits_failed,   // every candidate n errored out
};

std::string_view to_string(errc c) noexcept;

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(to_string(code)) + ": " + msg), code_(code) {}
  errc code() const noexcept { return code_; }

private:
  errc code_;
};

namespace detail {
template <errc C>
struct TypedError : Error {
  explicit TypedError(const std::string& msg) : Error(C, msg) {}
};
}  // namespace detail

using PreconditionError   = detail::TypedError<errc::precondition>;
using DomainError         = detail::TypedError<errc::domain_error>;
using NonConvergence      = detail::TypedError<errc::non_convergence>;
using StepSizeError       = detail::TypedError<errc::step_size>;
using ResolutionError     = detail::TypedError<errc::resolution>;
using NormalizationError  = detail::TypedError<errc::normalization>;
using UnsupportedCase     = detail::TypedError<errc::unsupported_case>;
using TailError           = detail::TypedError<errc::tail>;
using SignViolation       = detail::TypedError<errc::sign_violation>;
using RadiusError         = detail::TypedError<errc::radius>;
using WindowError         = detail::TypedError<errc::window>;
using NoiseFloorError     = detail::TypedError<errc::noise_floor>;
using MaxIterError        = detail::TypedError<errc::max_iter>;
using DegenerateOrderError = detail::TypedError<errc::degenerate_order>;
using AllFitsFailed       = detail::TypedError<errc::all_fits_failed>;

inline std::string_view to_string(errc c) noexcept {
  switch (c) {
    case errc::precondition:     return "precondition";
    case errc::domain_error:     return "domain";
    case errc::non_convergence:  return "non-convergence";
    case errc::step_size:        return "step-size";
    case errc::resolution:       return "resolution";
    case errc::normalization:    return "normalization";
    case errc::unsupported_case: return "unsupported-case";
    case errc::tail:             return "tail";
    case errc::sign_violation:   return "sign-violation";
    case errc::radius:           return "radius";
    case errc::window:           return "window";
    case errc::noise_floor:      return "noise-floor";
    case errc::max_iter:         return "max-iter";
    case errc::degenerate_order: return "degenerate-order";
    case errc::all_fits_failed:  return "all-fits-failed";
  }
  return "unknown";
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw PreconditionError(msg);
}

}  // namespace fracorder
