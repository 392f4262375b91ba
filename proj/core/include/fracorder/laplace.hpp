#pragma once

#include <vector>

#include "fracorder/forward.hpp"
#include "fracorder/model.hpp"
#include "fracorder/spectral.hpp"

namespace fracorder {

// Laplace symbol of the time operator, w(s) = sum q_i s^{alpha_i}.
struct SymbolW {
  FractionalModel model;
};

double eval_symbol(const SymbolW& w, double s);

// Laplace transform of the observation trace for modal weights rho_j:
// sum_j rho_j (w(eta)/eta) / (w(eta) + lambda_j).
double observation_transform(const ModalWeights& weights, const FractionalModel& model,
                             double eta);

// Signed moment sums p_k = (-1)^k sum_j rho_j / lambda_j^k, truncated at the
// available modes with the tail estimated by (sum_{j>J}|rho_j|)/lambda_J^k
// (fitted power-law extension of |rho_j| beyond the computed range).
struct PowerCoeffs {
  std::vector<int> ks;              // 1..k_max
  std::vector<double> pks;
  std::vector<double> tail_estimates;  // per-k bound on the discarded modes
  double lambda_min = 0.0;          // expansion radius of sum p_k w^k
  double rho_sum = 0.0;             // sum rho_j (value of the trace at t=0+)
};

// SignViolation when (-1)^k p_k <= -tail_estimate_k (nonnegativity of the
// initial data or mode coverage has failed).
PowerCoeffs compute_pk(const ModalWeights& weights, int k_max);

// sum_{k=1}^{K} p_k w(eta)^k with a geometric tail bound; RadiusError when
// w(eta) >= lambda_min.
double expansion_eval(const PowerCoeffs& pcoeffs, const FractionalModel& model, double eta);

// Inverse of the strictly monotone map w -> sum_k p_k w^k on [0, lambda_min):
// recovers the symbol sample w from a transform sample F = -eta L[g](eta).
// Returns NaN when F lies outside the attainable range.  sensitivity, when
// given, receives 1/|dF/dw| for propagating data error to the symbol.
double invert_expansion(const PowerCoeffs& pcoeffs, double f_value,
                        double* sensitivity = nullptr);

// Long-time behaviour model for the quadrature extensions: the trace decays
// to a constant along an algebraic power, g(t) ~ c0 + c1 t^{-a}.
struct TailModel {
  bool extend_early = true;  // fit c0 + c1 t^{a} on the first sampled decade
  bool extend_tail = true;   // fit c0 + c1 t^{-a} on the last sampled decade
  double min_eta_t = 2.0;    // WindowError below this eta*T
};

struct LaplaceSamples {
  std::vector<double> etas;
  std::vector<double> values;       // approximations of L[g](eta)
  std::vector<double> bias_bounds;  // quadrature + extension error budget
};

// integral_0^infty e^{-eta t} g(t) dt from the sampled trace: composite
// trapezoid over the window, power-law extensions over [0, t0] and [T, inf),
// bias bound from half-sample Richardson plus extension sensitivity.
LaplaceSamples numerical_laplace(const TraceSeries& trace, const std::vector<double>& etas,
                                 const TailModel& tail = {});

// Strict ordering transfer from symbols to weighted Laplace series at s0:
// w1(s0) > w2(s0) implies sum sigma_k w1/(w1+lambda_k) > same for w2.
struct SeparationReport {
  double w1_value = 0.0;
  double w2_value = 0.0;
  int symbol_sign = 0;       // sign of w1(s0) - w2(s0)
  double series_gap = 0.0;   // series(w1) - series(w2)
  bool ordering_consistent = false;
  bool termwise_strict = false;  // every lambda_k > 0 term strictly ordered
  bool indistinguishable = false;
};

SeparationReport separation_diagnostic(const SymbolW& w1, const SymbolW& w2,
                                       const EigenSystem& eigs, double s0);

}  // namespace fracorder
