#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fracorder/forward.hpp"
#include "fracorder/laplace.hpp"
#include "fracorder/model.hpp"
#include "fracorder/spectral.hpp"

namespace fracorder {

struct LsqConfig {
  int max_iter = 80;
  double step_tol = 1e-9;       // sup-norm of the accepted parameter step
  double residual_tol = 1e-13;  // RMS misfit below which iteration stops
  double damping_init = 1e-3;
};

struct OrderSelectConfig {
  double residual_drop_threshold = 0.3;  // accept n+1 only below this fraction of n's residual
};

struct IdentificationConfig {
  int n_max = 3;
  std::vector<double> eta_grid;  // decreasing positive; empty = derived from the trace window
  LsqConfig lsq;
  OrderSelectConfig order_select;
  std::uint64_t seed = 0;
  int pk_terms = 24;  // expansion length used for symbol recovery
  TailModel tail;     // quadrature extensions for the transform stage

  void validate() const;
};

// One sequential-peeling step: the leading-exponent read taken after
// subtracting the already-identified terms.  raw_slope is the plain weighted
// log-log slope over the usable window; exponent extrapolates the local slope
// to eta -> 0 and is the value the step actually uses.
struct PeelStep {
  int index = 0;  // 1-based
  double exponent = 0.0;
  double raw_slope = 0.0;
  double r2 = 0.0;          // of the plain log-log line
  double coefficient = 0.0; // amplitude at the pinned exponent
  double q = 0.0;           // implied modal weight
  bool accepted = false;
};

// Initial (orders, weights) pairs from sequential small-eta expansion reads,
// with per-step fit diagnostics and a human-readable log including the stop
// reason.
struct PeelResult {
  std::vector<double> orders;
  std::vector<double> weights;
  std::vector<PeelStep> steps;
  std::vector<std::string> log;
};

struct IdentificationResult {
  int n = 0;
  std::vector<double> orders;
  std::vector<double> weights;
  double residual = 0.0;                          // RMS trace misfit
  std::vector<double> per_parameter_sensitivity;  // diag(J^T J) at the solution, (alpha..., log q...)
  std::vector<std::string> diagnostics;           // peeling log and fit notes
  std::string warning;                            // nonempty when the fit is noise-dominated
};

// Sequential expansion peeling: F(eta) = -eta L[trace](eta) = sum_k p_k w(eta)^k;
// step j fits the leading exponent/coefficient of F minus the composite
// expansion of the already-identified terms, q_j = c_j / p_1.  The first step
// prefers the inverted symbol samples w(eta) when enough are usable: the
// inversion strips the expansion nonlinearity exactly, so the local slope is
// contaminated only by the next genuine order.  Stops at the noise floor or
// after n_max pairs; a final joint power fit on the recovered symbol samples
// tightens the returned values.  NoiseFloorError when the first exponent fit
// has R^2 < 0.99.
PeelResult peel_orders(const TraceSeries& trace, const ModalWeights& weights,
                       const PowerCoeffs& pcoeffs, const IdentificationConfig& cfg);

// Damped Gauss-Newton on theta = (alpha, log q): central finite-difference
// Jacobian (relative step 1e-5), alpha projected into [0.01, 0.99], pairs
// re-sorted ascending each accepted step.  MaxIterError on exhaustion;
// DegenerateOrderError when two orders collapse within 1e-4.
IdentificationResult refine_lsq(const TraceSeries& trace, const ModalWeights& weights,
                                const FractionalModel& init, const EigenSystem& eigs,
                                const IdentificationConfig& cfg);

// Fits n = 1..n_max (peeling-initialized where possible, else coarse grids),
// selects the smallest n whose residual the next order fails to improve by
// order_select.residual_drop_threshold.  AllFitsFailed when no candidate fits.
IdentificationResult select_order(const TraceSeries& trace, const ModalWeights& weights,
                                  const EigenSystem& eigs, const IdentificationConfig& cfg);

// Forward trace plus seeded Gaussian noise of level noise_level * max|trace|.
TraceSeries synthesize(const FractionalModel& model, const EigenSystem& eigs,
                       const ModalWeights& weights, const ForwardConfig& fcfg,
                       double noise_level, std::uint64_t seed);

}  // namespace fracorder
