#include "fracorder/forward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace fracorder {
namespace {

// Tauberian envelope for a single mode: y(t) <= (1+S)/(1 + lambda t^an /
// (qn Gamma(1+an))) with S the lower-order symbol part, clamped by y <= 1.
double mode_envelope(double lambda, const FractionalModel& model, double t0) {
  const double an = model.alpha_max();
  const double qn = model.q_max_order();
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < model.n(); ++i)
    s += model.weights[i] / qn * std::pow(t0, an - model.orders[i]);
  const double denom = 1.0 + lambda * std::pow(t0, an) / (qn * std::tgamma(1.0 + an));
  return std::min(1.0, (1.0 + s) / denom);
}

double tail_bound(const EigenSystem& eigs, const FractionalModel& model, int J, double t0,
                  const std::vector<double>& w) {
  require(J >= 1, "J must be at least 1");
  require(t0 > 0.0, "t0 must be positive");
  require(w.size() == eigs.count(), "weights/eigenvalue count mismatch");
  const std::size_t m = eigs.count();

  double bound = 0.0;
  for (std::size_t j = static_cast<std::size_t>(J); j < m; ++j)
    bound += std::abs(w[j]) * mode_envelope(eigs.lambdas[j], model, t0);

  // beyond the computed spectrum: lambda_j >= c0 j^{2/dim} fitted on the
  // upper half, weights bounded by a fitted power law |w_j| <= W j^{-s}
  const std::size_t lo = m / 2;
  double c0 = std::numeric_limits<double>::infinity();
  for (std::size_t j = lo; j < m; ++j) {
    if (eigs.lambdas[j] <= 0.0) continue;
    c0 = std::min(c0, eigs.lambdas[j] / std::pow(static_cast<double>(j + 1), 2.0 / eigs.dim));
  }
  if (!std::isfinite(c0) || c0 <= 0.0) return std::numeric_limits<double>::infinity();

  double decay = 0.0;  // fitted exponent s of |w_j| ~ j^{-s} (0 = flat)
  double wcap = 0.0;
  {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t cnt = 0;
    for (std::size_t j = lo; j < m; ++j) {
      wcap = std::max(wcap, std::abs(w[j]));
      if (std::abs(w[j]) <= 0.0) continue;
      const double x = std::log(static_cast<double>(j + 1));
      const double y = std::log(std::abs(w[j]));
      sx += x; sy += y; sxx += x * x; sxy += x * y;
      ++cnt;
    }
    if (cnt >= 4) {
      const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
      decay = std::max(0.0, -slope);
    }
  }
  if (wcap == 0.0) return bound;

  const double an = model.alpha_max();
  const double qn = model.q_max_order();
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < model.n(); ++i)
    s += model.weights[i] / qn * std::pow(t0, an - model.orders[i]);
  const double beta = c0 * std::pow(t0, an) / (qn * std::tgamma(1.0 + an));
  // sum_{j>m} wcap (m/j)^decay (1+S)/(beta j^{2/dim}) <= integral from m
  const double p = decay + 2.0 / eigs.dim;
  if (p <= 1.0) return std::numeric_limits<double>::infinity();
  const double mm = static_cast<double>(m);
  bound += wcap * (1.0 + s) / beta * std::pow(mm, decay) * std::pow(mm, 1.0 - p) / (p - 1.0);
  return bound;
}

// Uses exactly the configured number of modes (capped by the eigensystem);
// the tail bound acts as a correctness gate only.  Trimming to the smallest
// adequate J would make the truncated operator depend on the model, and any
// consumer comparing traces across models (identification above all) needs
// one fixed operator, not a per-model one.
int pick_mode_count(const EigenSystem& eigs, const FractionalModel& model, const ForwardConfig& cfg,
                    const std::vector<double>& w) {
  const int j = std::min<int>(cfg.mode_count, static_cast<int>(eigs.count()));
  const double b = tail_bound(eigs, model, j, cfg.time_grid.t0, w);
  if (b > cfg.mode_tail_tol) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "modal tail bound %.3e at J=%d exceeds mode_tail_tol %.3e "
                  "(need more modes or a larger t0)",
                  b, j, cfg.mode_tail_tol);
    throw TailError(msg);
  }
  return j;
}

}  // namespace

std::vector<double> TimeGrid::make() const {
  std::vector<double> ts(static_cast<std::size_t>(points));
  if (geometric) {
    const double r = std::pow(t_max / t0, 1.0 / (points - 1));
    double t = t0;
    for (int i = 0; i < points; ++i, t *= r) ts[static_cast<std::size_t>(i)] = t;
    ts.back() = t_max;
  } else {
    const double h = (t_max - t0) / (points - 1);
    for (int i = 0; i < points; ++i) ts[static_cast<std::size_t>(i)] = t0 + i * h;
    ts.back() = t_max;
  }
  return ts;
}

std::vector<double> modal_trace_values(const std::vector<double>& weights,
                                       const std::vector<double>& lambdas,
                                       const FractionalModel& model,
                                       const std::vector<double>& times,
                                       const TruncationPolicy& policy) {
  require(weights.size() == lambdas.size(), "weights/eigenvalue count mismatch");
  std::vector<double> values(times.size(), 0.0);
  std::vector<double> comp(times.size(), 0.0);  // Kahan carry
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] == 0.0) continue;
    const auto ys = eval_mode_grid(lambdas[j], model, times, policy);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double term = weights[j] * ys[i] - comp[i];
      const double next = values[i] + term;
      comp[i] = (next - values[i]) - term;
      values[i] = next;
    }
  }
  return values;
}

TraceSeries solve_trace(const EigenSystem& eigs, const std::vector<double>& weights, double x0,
                        const FractionalModel& model, const ForwardConfig& cfg) {
  model.validate();
  cfg.validate();
  require(weights.size() == eigs.count(), "weights do not match the eigensystem");
  const int J = pick_mode_count(eigs, model, cfg, weights);

  TraceSeries out;
  out.x0 = x0;
  out.window_t0 = cfg.time_grid.t0;
  out.window_t1 = cfg.time_grid.t_max;
  out.times = cfg.time_grid.make();
  const std::vector<double> head(weights.begin(), weights.begin() + J);
  const std::vector<double> lam(eigs.lambdas.begin(), eigs.lambdas.begin() + J);
  out.values = modal_trace_values(head, lam, model, out.times, cfg.mode_policy);
  return out;
}

TraceSeries solve_trace_delta(const EigenSystem& eigs, const FractionalModel& model,
                              const ForwardConfig& cfg) {
  require(eigs.bc == BoundaryCondition::Neumann, "Dirac trace needs a Neumann eigensystem");
  require(eigs.count() >= 1, "empty eigensystem");
  for (std::size_t k = 0; k < eigs.count(); ++k)
    require(std::abs(eigs.phis[k].front() - 1.0) < 1e-9, "eigensystem must be phi(0)=1 normalized");

  return solve_trace(eigs, eigs.sigmas, 0.0, model, cfg);
}

TraceSeries solve_trace_l2(const EigenSystem& eigs, const ModalWeights& weights,
                           const FractionalModel& model, const ForwardConfig& cfg) {
  require(eigs.bc == BoundaryCondition::Dirichlet, "projected-data trace needs a Dirichlet eigensystem");

  TraceSeries out = solve_trace(eigs, weights.rhos, weights.x0, model, cfg);
  if (weights.data_min < 0.0)
    out.warnings.push_back("AssumptionWarning: initial data has negative samples; "
                           "identification guarantees may fail");
  for (int k : weights.quadrature_flags)
    out.warnings.push_back("QuadratureWarning: projection of mode " + std::to_string(k + 1) +
                           " is under-resolved on this mesh");
  return out;
}

double truncation_bound(const EigenSystem& eigs, const FractionalModel& model, int J, double t0) {
  return tail_bound(eigs, model, J, t0, eigs.sigmas);
}

double truncation_bound(const EigenSystem& eigs, const FractionalModel& model, int J, double t0,
                        const std::vector<double>& weights) {
  return tail_bound(eigs, model, J, t0, weights);
}

}  // namespace fracorder
