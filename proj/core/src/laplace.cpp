#include "fracorder/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fracorder {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// least-squares fit g(t) ~ c0 + c1 t^a for fixed a; returns SSE
double power_fit_sse(const std::vector<double>& ts, const std::vector<double>& gs, double a,
                     double& c0, double& c1) {
  double s11 = static_cast<double>(ts.size()), s1p = 0.0, spp = 0.0, sy = 0.0, spy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double p = std::pow(ts[i], a);
    s1p += p;
    spp += p * p;
    sy += gs[i];
    spy += p * gs[i];
  }
  const double det = s11 * spp - s1p * s1p;
  if (std::abs(det) < 1e-300) {
    c0 = sy / s11;
    c1 = 0.0;
  } else {
    c0 = (spp * sy - s1p * spy) / det;
    c1 = (s11 * spy - s1p * sy) / det;
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double r = gs[i] - c0 - c1 * std::pow(ts[i], a);
    sse += r * r;
  }
  return sse;
}

struct PowerLaw {
  double c0 = 0.0, c1 = 0.0, a = 0.0;
  double residual_rms = 0.0;
};

// scan + golden-section refine the exponent of c0 + c1 t^a on the samples
PowerLaw fit_power_law(const std::vector<double>& ts, const std::vector<double>& gs, double a_lo,
                       double a_hi) {
  PowerLaw best;
  double best_sse = kInf;
  const int scans = 60;
  for (int i = 0; i <= scans; ++i) {
    const double a = a_lo + (a_hi - a_lo) * i / scans;
    if (std::abs(a) < 1e-3) continue;  // degenerate with the constant term
    double c0, c1;
    const double sse = power_fit_sse(ts, gs, a, c0, c1);
    if (sse < best_sse) {
      best_sse = sse;
      best = {c0, c1, a, 0.0};
    }
  }
  const double step = (a_hi - a_lo) / scans;
  double lo = best.a - step, hi = best.a + step;
  const double gr = 0.6180339887498949;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double c0, c1;
  double f1 = power_fit_sse(ts, gs, x1, c0, c1), f2 = power_fit_sse(ts, gs, x2, c0, c1);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = power_fit_sse(ts, gs, x1, c0, c1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = power_fit_sse(ts, gs, x2, c0, c1);
    }
  }
  best.a = 0.5 * (lo + hi);
  best_sse = power_fit_sse(ts, gs, best.a, best.c0, best.c1);
  best.residual_rms = std::sqrt(best_sse / static_cast<double>(ts.size()));
  return best;
}

double trapezoid_transform(const std::vector<double>& ts, const std::vector<double>& gs,
                           double eta, std::size_t stride) {
  double sum = 0.0;
  std::size_t prev = 0;
  double fprev = std::exp(-eta * ts[0]) * gs[0];
  for (std::size_t i = stride; i < ts.size(); i += stride) {
    const double f = std::exp(-eta * ts[i]) * gs[i];
    sum += 0.5 * (ts[i] - ts[prev]) * (f + fprev);
    prev = i;
    fprev = f;
  }
  if (prev + 1 < ts.size()) {
    const std::size_t last = ts.size() - 1;
    const double f = std::exp(-eta * ts[last]) * gs[last];
    sum += 0.5 * (ts[last] - ts[prev]) * (f + fprev);
  }
  return sum;
}

// integral of e^{-eta t} (c0 + c1 t^a) over [0, t0] on a geometric subgrid,
// with the analytic a > -1 piece near zero
double early_integral(const PowerLaw& m, double eta, double t0) {
  const double t_min = t0 * 1e-8;
  double sum = m.c0 * t_min + m.c1 * std::pow(t_min, 1.0 + m.a) / (1.0 + m.a);
  const int n = 160;
  const double r = std::pow(t0 / t_min, 1.0 / n);
  double tp = t_min;
  double fp = std::exp(-eta * tp) * (m.c0 + m.c1 * std::pow(tp, m.a));
  for (int i = 1; i <= n; ++i) {
    const double t = (i == n) ? t0 : tp * r;
    const double f = std::exp(-eta * t) * (m.c0 + m.c1 * std::pow(t, m.a));
    sum += 0.5 * (t - tp) * (f + fp);
    tp = t;
    fp = f;
  }
  return sum;
}

// integral of e^{-eta t} (c0 + c1 t^{-b}) over [T, infinity)
double tail_integral(double c0, double c1, double b, double eta, double T) {
  double sum = c0 * std::exp(-eta * T) / eta;
  const double t_end = T + 60.0 / eta;
  const int n = 400;
  const double r = std::pow(t_end / T, 1.0 / n);
  double tp = T;
  double fp = std::exp(-eta * tp) * c1 * std::pow(tp, -b);
  for (int i = 1; i <= n; ++i) {
    const double t = tp * r;
    const double f = std::exp(-eta * t) * c1 * std::pow(t, -b);
    sum += 0.5 * (t - tp) * (f + fp);
    tp = t;
    fp = f;
  }
  return sum;
}

}  // namespace

double eval_symbol(const SymbolW& w, double s) {
  w.model.validate();
  require(s > 0.0, "symbol argument must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < w.model.n(); ++i)
    sum += w.model.weights[i] * std::pow(s, w.model.orders[i]);
  return sum;
}

double observation_transform(const ModalWeights& weights, const FractionalModel& model,
                             double eta) {
  require(eta > 0.0, "eta must be positive");
  require(weights.rhos.size() == weights.lambdas.size(), "weights/lambdas mismatch");
  const double w = eval_symbol({model}, eta);
  double sum = 0.0;
  for (std::size_t j = 0; j < weights.rhos.size(); ++j)
    sum += weights.rhos[j] * (w / eta) / (w + weights.lambdas[j]);
  return sum;
}

PowerCoeffs compute_pk(const ModalWeights& weights, int k_max) {
  require(k_max >= 1, "k_max must be at least 1");
  require(!weights.rhos.empty(), "no modes");
  const std::size_t m = weights.rhos.size();
  for (double l : weights.lambdas) require(l > 0.0, "p_k sums need a strictly positive spectrum");

  PowerCoeffs pc;
  pc.lambda_min = weights.lambdas.front();
  for (double l : weights.lambdas) pc.lambda_min = std::min(pc.lambda_min, l);
  for (double r : weights.rhos) pc.rho_sum += r;

  // fitted |rho_j| ~ W j^{-s} on the upper half gives the discarded-mode mass
  double tail_mass = kInf;
  {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t cnt = 0;
    for (std::size_t j = m / 2; j < m; ++j) {
      if (weights.rhos[j] == 0.0) continue;
      const double x = std::log(static_cast<double>(j + 1));
      const double y = std::log(std::abs(weights.rhos[j]));
      sx += x; sy += y; sxx += x * x; sxy += x * y;
      ++cnt;
    }
    if (cnt >= 4) {
      const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
      const double s = -slope;
      if (s > 1.05) {
        const double logW = (sy + s * sx) / cnt;
        tail_mass = std::exp(logW) * std::pow(static_cast<double>(m), 1.0 - s) / (s - 1.0);
      }
    }
  }
  const double lam_top = weights.lambdas.back();

  pc.ks.resize(static_cast<std::size_t>(k_max));
  pc.pks.resize(static_cast<std::size_t>(k_max));
  pc.tail_estimates.resize(static_cast<std::size_t>(k_max));
  for (int k = 1; k <= k_max; ++k) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      sum += weights.rhos[j] / std::pow(weights.lambdas[j], static_cast<double>(k));
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    const double pk = sign * sum;
    const double tail = tail_mass / std::pow(lam_top, static_cast<double>(k));
    pc.ks[static_cast<std::size_t>(k - 1)] = k;
    pc.pks[static_cast<std::size_t>(k - 1)] = pk;
    pc.tail_estimates[static_cast<std::size_t>(k - 1)] = tail;
    if (sign * pk <= -tail)
      throw SignViolation("(-1)^k p_k <= 0 at k=" + std::to_string(k) +
                          " beyond the mode-tail tolerance; initial data is not "
                          "nonnegative or too few modes were projected");
  }
  return pc;
}

double expansion_eval(const PowerCoeffs& pcoeffs, const FractionalModel& model, double eta) {
  const double w = eval_symbol({model}, eta);
  if (w >= pcoeffs.lambda_min)
    throw RadiusError("w(eta)=" + std::to_string(w) + " is outside the expansion radius " +
                      std::to_string(pcoeffs.lambda_min));
  double sum = 0.0;
  double wk = 1.0;
  for (std::size_t i = 0; i < pcoeffs.pks.size(); ++i) {
    wk *= w;
    sum += pcoeffs.pks[i] * wk;
  }
  return sum;
}

double invert_expansion(const PowerCoeffs& pcoeffs, double f_value, double* sensitivity) {
  const auto& p = pcoeffs.pks;
  require(!p.empty(), "empty coefficient set");
  const double wcap = 0.8 * pcoeffs.lambda_min;

  auto f_of = [&](double w) {
    double sum = 0.0, wk = 1.0;
    for (double pk : p) {
      wk *= w;
      sum += pk * wk;
    }
    return sum;
  };
  auto df_of = [&](double w) {
    double sum = 0.0, wk = 1.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      sum += static_cast<double>(k + 1) * p[k] * wk;
      wk *= w;
    }
    return sum;
  };

  double w = std::clamp(f_value / p[0], 0.0, wcap);
  for (int it = 0; it < 80; ++it) {
    const double d = df_of(w);
    if (d == 0.0) break;
    const double step = (f_of(w) - f_value) / d;
    w = std::clamp(w - step, 0.0, wcap);
    if (std::abs(step) < 1e-15 * pcoeffs.lambda_min) break;
  }
  const double scale = std::max(std::abs(f_value), 1e-300);
  if (std::abs(f_of(w) - f_value) > 1e-8 * scale) return kNan;
  if (sensitivity) {
    const double d = df_of(w);
    *sensitivity = (d == 0.0) ? kInf : 1.0 / std::abs(d);
  }
  return w;
}

LaplaceSamples numerical_laplace(const TraceSeries& trace, const std::vector<double>& etas,
                                 const TailModel& tail) {
  trace.validate();
  require(!etas.empty(), "no transform points requested");
  for (double e : etas) require(e > 0.0, "eta must be positive");
  const double T = trace.times.back();
  const double t0 = trace.times.front();
  const double eta_min = *std::min_element(etas.begin(), etas.end());
  if (eta_min * T < tail.min_eta_t)
    throw WindowError("eta*T=" + std::to_string(eta_min * T) + " below " +
                      std::to_string(tail.min_eta_t) +
                      "; the unsampled tail dominates the transform");

  // eta-independent extension fits
  PowerLaw early;
  if (tail.extend_early) {
    std::vector<double> ts, gs;
    for (std::size_t i = 0; i < trace.times.size() && trace.times[i] <= 10.0 * t0; ++i) {
      ts.push_back(trace.times[i]);
      gs.push_back(trace.values[i]);
    }
    if (ts.size() < 4) {
      for (std::size_t i = ts.size(); i < std::min<std::size_t>(trace.times.size(), 8); ++i) {
        ts.push_back(trace.times[i]);
        gs.push_back(trace.values[i]);
      }
    }
    early = fit_power_law(ts, gs, -0.95, 1.75);
  }
  PowerLaw late;
  if (tail.extend_tail) {
    std::vector<double> ts, gs;
    for (std::size_t i = 0; i < trace.times.size(); ++i)
      if (trace.times[i] >= T / 10.0) {
        ts.push_back(trace.times[i]);
        gs.push_back(trace.values[i]);
      }
    if (ts.size() < 4) {
      const std::size_t lo = trace.times.size() >= 8 ? trace.times.size() - 8 : 0;
      ts.assign(trace.times.begin() + static_cast<std::ptrdiff_t>(lo), trace.times.end());
      gs.assign(trace.values.begin() + static_cast<std::ptrdiff_t>(lo), trace.values.end());
    }
    late = fit_power_law(ts, gs, -1.9, -0.02);  // c0 + c1 t^{-b}
  }

  LaplaceSamples out;
  out.etas = etas;
  out.values.resize(etas.size());
  out.bias_bounds.resize(etas.size());
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const double eta = etas[i];
    const double quad = trapezoid_transform(trace.times, trace.values, eta, 1);
    const double quad2 = trapezoid_transform(trace.times, trace.values, eta, 2);
    double value = quad;
    double bias = (2.0 / 3.0) * std::abs(quad - quad2);

    if (tail.extend_early) {
      const double ext = early_integral(early, eta, t0);
      // flat alternative: freeze g at the first sample
      const double flat = trace.values.front() * (1.0 - std::exp(-eta * t0)) / eta;
      value += ext;
      bias += std::abs(ext - flat) + early.residual_rms * t0;
    }
    if (tail.extend_tail) {
      const double ext = tail_integral(late.c0, late.c1, -late.a, eta, T);
      const double flat = trace.values.back() * std::exp(-eta * T) / eta;
      value += ext;
      bias += std::abs(ext - flat) + late.residual_rms * std::exp(-eta * T) / eta;
    }
    out.values[i] = value;
    out.bias_bounds[i] = bias + 1e-14 * std::abs(value);
  }
  return out;
}

SeparationReport separation_diagnostic(const SymbolW& w1, const SymbolW& w2,
                                       const EigenSystem& eigs, double s0) {
  require(s0 > 0.0, "s0 must be positive");
  require(eigs.count() >= 1, "empty eigensystem");
  SeparationReport rep;
  rep.w1_value = eval_symbol(w1, s0);
  rep.w2_value = eval_symbol(w2, s0);
  const double scale = std::max({1.0, rep.w1_value, rep.w2_value});
  const double diff = rep.w1_value - rep.w2_value;
  if (std::abs(diff) <= 1e-12 * scale) {
    rep.indistinguishable = true;
    rep.symbol_sign = 0;
  } else {
    rep.symbol_sign = diff > 0.0 ? 1 : -1;
  }

  double series1 = 0.0, series2 = 0.0;
  bool strict = true;
  for (std::size_t k = 0; k < eigs.count(); ++k) {
    const double lam = eigs.lambdas[k];
    const double sig = eigs.sigmas[k];
    const double t1 = rep.w1_value / (rep.w1_value + lam);
    const double t2 = rep.w2_value / (rep.w2_value + lam);
    series1 += sig * t1;
    series2 += sig * t2;
    if (lam > 0.0 && rep.symbol_sign != 0) {
      if ((t1 - t2) * rep.symbol_sign <= 0.0) strict = false;
    }
  }
  rep.series_gap = series1 - series2;
  rep.termwise_strict = rep.symbol_sign != 0 && strict;
  if (rep.symbol_sign == 0) {
    rep.ordering_consistent = std::abs(rep.series_gap) <= 1e-10 * std::max(1.0, std::abs(series1));
  } else {
    rep.ordering_consistent = rep.series_gap * rep.symbol_sign > 0.0;
  }
  return rep;
}

}  // namespace fracorder
