#pragma once

#include <string>
#include <vector>

#include "fracorder/mlf.hpp"
#include "fracorder/model.hpp"
#include "fracorder/spectral.hpp"

namespace fracorder {

// Sampled observation u(x0, t_i) on (t0, T).  Dirac data is never summed at
// t = 0, so t0 > 0 always.
struct TraceSeries {
  std::vector<double> times;   // strictly increasing, positive
  std::vector<double> values;  // u(x0, t_i)
  double x0 = 0.0;
  double window_t0 = 0.0;
  double window_t1 = 0.0;
  std::vector<std::string> warnings;  // advisory flags raised during assembly

  void validate() const {
    require(!times.empty(), "trace must contain samples");
    require(times.size() == values.size(), "times/values length mismatch");
    require(times.front() > 0.0, "trace must start at a positive time");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
      require(times[i] < times[i + 1], "times must be strictly increasing");
  }
};

// Geometric spacing by default: early times carry the t^{alpha_1} signature
// that identification feeds on.
struct TimeGrid {
  double t0 = 1e-2;
  double t_max = 10.0;
  int points = 200;
  bool geometric = true;

  std::vector<double> make() const;
};

struct ForwardConfig {
  int mode_count = 200;        // hard cap on retained modes
  double mode_tail_tol = 1e-8;
  TimeGrid time_grid;
  TruncationPolicy mode_policy;  // per-mode evaluation tolerances

  void validate() const {
    require(mode_count >= 1, "mode_count must be at least 1");
    require(mode_tail_tol > 0.0, "mode_tail_tol must be positive");
    require(time_grid.t0 > 0.0 && time_grid.t_max > time_grid.t0, "bad time window");
    require(time_grid.points >= 2, "need at least two time samples");
  }
};

// Trace for Dirac initial data at x = 0 observed at x = 0 on a Neumann
// system: u(0,t) = sum sigma_j y_j(t).  The retained mode count J <=
// cfg.mode_count is grown until truncation_bound(J, t0) <= mode_tail_tol;
// TailError when no admissible J reaches the tolerance.
TraceSeries solve_trace_delta(const EigenSystem& eigs, const FractionalModel& model,
                              const ForwardConfig& cfg);

// Trace for projected L2 initial data: u(x0,t) = sum rho_j y_j(t) on a
// Dirichlet system.  Same adaptive truncation; appends an AssumptionWarning
// when the projected data had negative samples.
TraceSeries solve_trace_l2(const EigenSystem& eigs, const ModalWeights& weights,
                           const FractionalModel& model, const ForwardConfig& cfg);

// Upper bound on the discarded modal tail sum_{j>J} |w_j| y_j(t0) using the
// computed spectrum for the retained range and a fitted Weyl law
// lambda_j >= C0 j^{2/dim} beyond it.  Weights default to sigma_j (Dirac
// data); the overload takes explicit observation weights.
double truncation_bound(const EigenSystem& eigs, const FractionalModel& model, int J, double t0);
double truncation_bound(const EigenSystem& eigs, const FractionalModel& model, int J, double t0,
                        const std::vector<double>& weights);

// Shared assembly engine behind both trace solvers: adaptive J against the
// weighted truncation bound, then sum w_j y_j(t) with compensated summation.
TraceSeries solve_trace(const EigenSystem& eigs, const std::vector<double>& weights, double x0,
                        const FractionalModel& model, const ForwardConfig& cfg);

// Plain modal sum over a fixed weight set on given times (no truncation
// logic) — the forward model of the least-squares refinement.
std::vector<double> modal_trace_values(const std::vector<double>& weights,
                                       const std::vector<double>& lambdas,
                                       const FractionalModel& model,
                                       const std::vector<double>& times,
                                       const TruncationPolicy& policy = {});

}  // namespace fracorder
