#include "fracorder/mlf.hpp"

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace fracorder {
namespace {

constexpr long double kPi = 3.141592653589793238462643383279502884L;
constexpr double kGammaArgMin = 1.4616321449683623;  // argmin of Gamma on (0,inf)
constexpr double kGammaValMin = 0.8856031944108887;
constexpr int kMaxComponents = 8;

// sin(pi*x) with exact integer zeros; plain sinl(pi*x) misses them and the
// reflection formula below depends on them to null integer-order terms.
long double sinpi(long double x) {
  long double k = floorl(x);
  long double r = x - k;
  long double s = sinl(kPi * r);
  return (static_cast<long long>(k) % 2 == 0) ? s : -s;
}

// log of min Gamma over [a, b], 0 < a <= b (Gamma dips to ~0.8856 at ~1.4616)
double log_gamma_interval_min(double a, double b) {
  if (b <= kGammaArgMin) return std::lgamma(b);
  if (a >= kGammaArgMin) return std::lgamma(a);
  return std::log(kGammaValMin);
}

// compositions (k_1..k_n) of k, odometer order, mass draining left to right
template <class F>
void for_each_composition(int k, int n, std::vector<int>& comp, F&& f) {
  comp.assign(static_cast<std::size_t>(n), 0);
  comp[0] = k;
  for (;;) {
    f(static_cast<const std::vector<int>&>(comp));
    int i = n - 2;
    while (i >= 0 && comp[i] == 0) --i;
    if (i < 0) break;
    --comp[i];
    int rest = 0;
    for (int j = i + 1; j < n; ++j) {
      rest += comp[j];
      comp[j] = 0;
    }
    comp[i + 1] = rest + 1;
  }
}

std::vector<long double> log_factorials(int up_to) {
  std::vector<long double> lf(static_cast<std::size_t>(up_to) + 1);
  for (int m = 0; m <= up_to; ++m) lf[static_cast<std::size_t>(m)] = lgammal(static_cast<long double>(m) + 1.0L);
  return lf;
}

template <class Z>
struct Kahan {
  Z sum{};
  Z carry{};
  void add(Z v) {
    Z y = v - carry;
    Z t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

struct SeriesDiag {
  double tail = std::numeric_limits<double>::infinity();
  double cancellation = 0.0;
  int degree = 0;
  bool converged = false;
};

// Layer-wise (total degree k) summation.  The tail is controlled through the
// layer majorant M_k = (sum |z_i|)^k / min Gamma over the layer's argument
// range; once the ratio M_{k+1}/M_k is provably below 1 (geometric regime is
// guaranteed past the Gamma minimum) the remainder is summed geometrically.
template <class Z>
Z series_sum(double theta0, std::span<const double> thetas, std::span<const Z> zs,
             const TruncationPolicy& pol, SeriesDiag& diag) {
  const int n = static_cast<int>(thetas.size());
  long double big_s = 0.0L;
  for (const Z& z : zs) big_s += static_cast<long double>(std::abs(z));
  const double theta_min = *std::min_element(thetas.begin(), thetas.end());
  const double theta_max = *std::max_element(thetas.begin(), thetas.end());

  const auto lf = log_factorials(pol.max_total_degree + 1);

  // power tables z_j^m, extended one row per layer
  std::vector<std::vector<Z>> zp(static_cast<std::size_t>(n), std::vector<Z>{Z(1)});

  Kahan<Z> total;
  long double peak_abs_layer = 0.0L;
  std::vector<int> comp;

  const auto log_majorant = [&](int m) -> long double {
    return m * logl(big_s) -
           static_cast<long double>(log_gamma_interval_min(theta0 + m * theta_min, theta0 + m * theta_max));
  };

  for (int k = 0; k <= pol.max_total_degree; ++k) {
    for (int j = 0; j < n; ++j) zp[static_cast<std::size_t>(j)].push_back(zp[static_cast<std::size_t>(j)].back() * zs[static_cast<std::size_t>(j)]);

    Kahan<Z> layer;
    long double layer_abs = 0.0L;
    for_each_composition(k, n, comp, [&](const std::vector<int>& c) {
      long double lmult = lf[static_cast<std::size_t>(k)];
      double garg = theta0;
      for (int j = 0; j < n; ++j) {
        lmult -= lf[static_cast<std::size_t>(c[static_cast<std::size_t>(j)])];
        garg += thetas[static_cast<std::size_t>(j)] * c[static_cast<std::size_t>(j)];
      }
      const long double w = expl(lmult - lgammal(static_cast<long double>(garg)));
      Z zprod = Z(1);
      for (int j = 0; j < n; ++j) {
        const int cj = c[static_cast<std::size_t>(j)];
        if (cj) zprod *= zp[static_cast<std::size_t>(j)][static_cast<std::size_t>(cj)];
      }
      const Z term = zprod * w;
      layer.add(term);
      layer_abs += static_cast<long double>(std::abs(term));
    });
    total.add(layer.sum);
    peak_abs_layer = std::max(peak_abs_layer, layer_abs);
    diag.degree = k;

    if (big_s == 0.0L) {  // only the k=0 term exists
      diag.tail = 0.0;
      diag.converged = true;
      break;
    }
    const long double m1 = log_majorant(k + 1);
    const long double m2 = log_majorant(k + 2);
    const long double ratio = expl(m2 - m1);
    // before the Gamma minimum is passed the majorant ratio can sit at S
    // exactly, so S itself must also be < 1 to conclude anything there
    const bool past_min = theta0 + (k + 1) * theta_min >= kGammaArgMin;
    const long double rbar = past_min ? ratio : std::max(ratio, big_s);
    if (rbar < 0.95L) {
      const long double tail = expl(m1) / (1.0L - rbar);
      if (tail <= static_cast<long double>(pol.abs_tol)) {
        diag.tail = static_cast<double>(tail);
        diag.converged = true;
        break;
      }
    }
  }
  diag.cancellation = static_cast<double>(peak_abs_layer) * static_cast<double>(LDBL_EPSILON) * 16.0;
  if (!diag.converged)
    throw NonConvergence("multinomial ML series did not reach tolerance by total degree " +
                         std::to_string(pol.max_total_degree));
  return total.sum;
}

void check_series_domain(std::size_t nz, std::size_t nth, double max_abs_z, const TruncationPolicy& pol) {
  require(nz == nth, "argument count must match theta count");
  if (max_abs_z > pol.series_domain_radius)
    throw DomainError("|z| = " + std::to_string(max_abs_z) + " exceeds series domain radius " +
                      std::to_string(pol.series_domain_radius) + "; use the ODE path");
}

// ---------------------------------------------------------------------------
// mode response machinery

// Series table for y(t) = 1 + zc_0 t^{a_n} * sum_entries coef * prod t^{th_j k_j}:
// every t-independent factor (multinomial weight, 1/Gamma, z-constant powers)
// is folded into coef, so evaluating at a new t is mostly table lookups.
struct ModeSeriesTable {
  double theta0 = 0.0;
  std::vector<double> thetas;        // thetas[0] = a_n, thetas[i] = a_n - a_i
  std::vector<long double> zconst;   // -(lambda/q_n), -(q_i/q_n)
  struct Entry {
    long double coef;
    std::array<std::uint8_t, kMaxComponents> c;
  };
  std::vector<Entry> entries;  // layer-major
  int degree = 0;
  bool converged = false;      // majorant tail small at t_build
  double t_build = 0.0;        // largest t the build certifies

  long double sum_abs_z(double t) const {
    long double s = 0.0L;
    for (std::size_t j = 0; j < thetas.size(); ++j)
      s += fabsl(zconst[j]) * powl(static_cast<long double>(t), static_cast<long double>(thetas[j]));
    return s;
  }

  long double log_majorant(int m, double t) const {
    const long double s = sum_abs_z(t);
    const double tmin = *std::min_element(thetas.begin(), thetas.end());
    const double tmax = *std::max_element(thetas.begin(), thetas.end());
    return m * logl(s) -
           static_cast<long double>(log_gamma_interval_min(theta0 + m * tmin, theta0 + m * tmax));
  }

  // geometric bound on layers beyond `degree` at this t; inf if not provable
  double tail_at(double t) const {
    const long double s = sum_abs_z(t);
    if (s == 0.0L) return 0.0;
    const double tmin = *std::min_element(thetas.begin(), thetas.end());
    const long double m1 = log_majorant(degree + 1, t);
    const long double m2 = log_majorant(degree + 2, t);
    const long double ratio = expl(m2 - m1);
    const bool past_min = theta0 + (degree + 1) * tmin >= kGammaArgMin;
    const long double rbar = past_min ? ratio : std::max(ratio, s);
    if (rbar >= 0.95L) return std::numeric_limits<double>::infinity();
    return static_cast<double>(expl(m1) / (1.0L - rbar));
  }

  // upper bound on the largest layer magnitude at t (cancellation scale)
  double log_peak_abs(double t) const {
    long double peak = 0.0L;  // layer 0 has log-majorant -lgamma(theta0) <= ~0.12
    for (int m = 0; m <= degree; ++m) peak = std::max(peak, log_majorant(m, t));
    return static_cast<double>(peak);
  }
};

ModeSeriesTable build_mode_table(double lambda, const FractionalModel& model, double t_build,
                                 double t_floor, const TruncationPolicy& pol) {
  const std::size_t n = model.n();
  const double an = model.alpha_max();
  const double qn = model.q_max_order();

  ModeSeriesTable tab;
  tab.theta0 = 1.0 + an;
  tab.thetas.resize(n);
  tab.zconst.resize(n);
  tab.thetas[0] = an;
  tab.zconst[0] = -static_cast<long double>(lambda / qn);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    tab.thetas[i + 1] = an - model.orders[i];
    tab.zconst[i + 1] = -static_cast<long double>(model.weights[i] / qn);
  }
  tab.t_build = t_build;

  // Near-degenerate orders make some theta_j tiny and the layer count explode;
  // rather than build an enormous table, shrink the certified time and let the
  // asymptotic/ODE routes cover the rest.
  const int budget = std::min(pol.max_total_degree, 90);

  const auto lf = log_factorials(budget + 1);
  std::vector<std::vector<long double>> zcp(n, std::vector<long double>{1.0L});
  std::vector<int> comp;

  for (int k = 0; k <= budget; ++k) {
    for (std::size_t j = 0; j < n; ++j) zcp[j].push_back(zcp[j].back() * tab.zconst[j]);
    for_each_composition(k, static_cast<int>(n), comp, [&](const std::vector<int>& c) {
      long double lmult = lf[static_cast<std::size_t>(k)];
      double garg = tab.theta0;
      for (std::size_t j = 0; j < n; ++j) {
        lmult -= lf[static_cast<std::size_t>(c[j])];
        garg += tab.thetas[j] * c[j];
      }
      ModeSeriesTable::Entry e;
      e.coef = expl(lmult - lgammal(static_cast<long double>(garg)));
      e.c.fill(0);
      for (std::size_t j = 0; j < n; ++j) {
        e.coef *= zcp[j][static_cast<std::size_t>(c[j])];
        e.c[j] = static_cast<std::uint8_t>(c[j]);
      }
      tab.entries.push_back(e);
    });
    tab.degree = k;
    if (k >= 2 && tab.tail_at(tab.t_build) <= 1e-15) {
      tab.converged = true;
      break;
    }
  }
  while (!tab.converged && tab.t_build > t_floor) {
    tab.t_build *= 0.7;
    if (tab.tail_at(tab.t_build) <= 1e-15) tab.converged = true;
  }
  return tab;
}

struct ModeSeriesEval {
  long double value;
  long double abs_sum;
  long double peak_abs_layer;
};

ModeSeriesEval eval_mode_table(const ModeSeriesTable& tab, double t) {
  const std::size_t n = tab.thetas.size();
  // per-component power tables t^{theta_j * m}
  std::vector<std::vector<long double>> up(n);
  for (std::size_t j = 0; j < n; ++j) {
    up[j].resize(static_cast<std::size_t>(tab.degree) + 1);
    const long double u = powl(static_cast<long double>(t), static_cast<long double>(tab.thetas[j]));
    up[j][0] = 1.0L;
    for (int m = 1; m <= tab.degree; ++m) up[j][static_cast<std::size_t>(m)] = up[j][static_cast<std::size_t>(m - 1)] * u;
  }
  Kahan<long double> acc;
  long double abs_sum = 0.0L, layer_abs = 0.0L, peak = 0.0L;
  int cur_layer = 0;
  for (const auto& e : tab.entries) {
    long double prod = e.coef;
    int deg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      deg += e.c[j];
      if (e.c[j]) prod *= up[j][e.c[j]];
    }
    if (deg != cur_layer) {  // entries are layer-major, so this is a layer boundary
      peak = std::max(peak, layer_abs);
      layer_abs = 0.0L;
      cur_layer = deg;
    }
    acc.add(prod);
    abs_sum += fabsl(prod);
    layer_abs += fabsl(prod);
  }
  peak = std::max(peak, layer_abs);
  return {acc.sum, abs_sum, peak};
}

// Large-lambda expansion: y(t) ~ sum_{m>=1} (-1)^{m+1} lambda^{-m} W_m(t),
// W_m(t) = sum_{|c|=m} (m;c) prod q_i^{c_i} t^{-g} / Gamma(1-g), g = sum c_i a_i.
// 1/Gamma(1-g) for g >= 1/2 goes through the reflection Gamma(g) sin(pi g)/pi.
// Truncated at the smallest layer (standard optimal truncation); the first
// omitted layer's magnitude is the error estimate.
struct AsymTable {
  struct Entry {
    long double lmag;  // log |(m;c) prod q^c / Gamma(1-g)|
    long double lenv;  // same without the sin(pi g) factor: majorant envelope
    int sign;
    double g;
  };
  std::vector<std::vector<Entry>> layers;

  void ensure(int m, const FractionalModel& model) {
    const int n = static_cast<int>(model.n());
    const auto lf = log_factorials(std::max(m, 8));
    std::vector<int> comp;
    while (static_cast<int>(layers.size()) < m) {
      const int mm = static_cast<int>(layers.size()) + 1;
      std::vector<Entry> layer;
      for_each_composition(mm, n, comp, [&](const std::vector<int>& c) {
        long double lmag = lf[static_cast<std::size_t>(mm)];
        double g = 0.0;
        for (int j = 0; j < n; ++j) {
          lmag -= lf[static_cast<std::size_t>(c[static_cast<std::size_t>(j)])];
          lmag += c[static_cast<std::size_t>(j)] * logl(static_cast<long double>(model.weights[static_cast<std::size_t>(j)]));
          g += c[static_cast<std::size_t>(j)] * model.orders[static_cast<std::size_t>(j)];
        }
        int sign = 1;
        long double lenv;
        if (g < 0.5) {
          lmag -= lgammal(static_cast<long double>(1.0 - g));
          lenv = lmag;
        } else {
          // 1/Gamma(1-g) = Gamma(g) sin(pi g) / pi.  Integer (or near-integer)
          // g suppresses the term through the sin factor, but the suppression
          // is local to this layer: stopping decisions must use the sin-free
          // envelope or a vanishing layer reads as a converged tail.
          lenv = lmag + lgammal(static_cast<long double>(g)) - logl(kPi);
          const long double sp = sinpi(static_cast<long double>(g));
          if (sp == 0.0L) {
            sign = 0;  // integer g: 1/Gamma(1-g) vanishes exactly
            lmag = 0.0L;
          } else {
            lmag = lenv + logl(fabsl(sp));
            if (sp < 0.0L) sign = -1;
          }
        }
        layer.push_back({lmag, lenv, sign, g});
      });
      layers.push_back(std::move(layer));
    }
  }
};

struct AsymResult {
  double value = 0.0;
  double error = std::numeric_limits<double>::infinity();
  bool ok = false;
};

AsymResult eval_asymptotic(AsymTable& tab, double lambda, const FractionalModel& model, double t,
                           double accept_tol, int max_layers = 60) {
  AsymResult out;
  if (lambda <= 0.0 || t <= 0.0) return out;
  // divergent from the start unless w(1/t) is safely below lambda
  double w_inv_t = 0.0;
  for (std::size_t i = 0; i < model.n(); ++i)
    w_inv_t += model.weights[i] * std::pow(t, -model.orders[i]);
  if (w_inv_t >= 0.9 * lambda) return out;

  const long double lnt = logl(static_cast<long double>(t));
  const long double llam = logl(static_cast<long double>(lambda));
  const auto layer_parts = [&](int m, long double& layer, long double& env) {
    tab.ensure(m, model);
    layer = 0.0L;
    env = 0.0L;
    for (const auto& e : tab.layers[static_cast<std::size_t>(m - 1)]) {
      env += expl(e.lenv - e.g * lnt - m * llam);
      if (e.sign == 0) continue;
      layer += e.sign * expl(e.lmag - e.g * lnt - m * llam);
    }
  };

  Kahan<long double> acc;
  long double prev_env = std::numeric_limits<long double>::infinity();
  double err = std::numeric_limits<double>::infinity();
  int m_stop = max_layers + 1;  // first omitted layer when the loop exhausts
  for (int m = 1; m <= max_layers; ++m) {
    long double layer = 0.0L, env = 0.0L;
    layer_parts(m, layer, env);
    // the sin-free envelope picks the truncation point: a pole-suppressed
    // layer is individually small but says nothing about where the series
    // stops shrinking
    if (env > prev_env) {  // past the optimal truncation point
      m_stop = m;
      break;
    }
    acc.add(((m % 2) ? 1.0L : -1.0L) * layer);
    prev_env = env;
    if (env < static_cast<long double>(accept_tol) * 0.1L) {
      m_stop = 0;
      err = static_cast<double>(env);
      break;
    }
  }
  if (m_stop > 0) {
    // Remainder from the true size of the next two omitted layers.  A
    // sin-suppressed layer is genuinely small — the function's algebraic tail
    // carries the same factor — so the envelope would overstate the remainder
    // by 1/|sin(pi g)| and starve this path near rational orders.  Two layers
    // because the suppression never hits consecutive ones (that would force
    // an integer order, handled before this path).
    long double rem = 0.0L;
    for (int m = m_stop; m < m_stop + 2; ++m) {
      long double layer = 0.0L, env = 0.0L;
      layer_parts(m, layer, env);
      rem = std::max(rem, fabsl(layer));
    }
    err = static_cast<double>(rem);
  }
  out.value = static_cast<double>(acc.sum);
  out.error = err;
  out.ok = err <= accept_tol;
  return out;
}

std::vector<double> solve_mode_ode(double lambda, const FractionalModel& model,
                                   const std::vector<double>& g);

// Contour inversion of the mode transform w(s)/(s(w(s)+lambda)) for the band
// between the series and asymptotic regimes.  With q_i > 0 and alpha_i <= 1,
// arg w(s) stays strictly inside (-pi, pi) on the principal sheet, so
// w(s)+lambda never vanishes off the negative real axis and the cot-shaped
// contour (trapezoid in the parameter, conjugate symmetry folded) is valid.
long double mode_contour_once(double lambda, const FractionalModel& model, double t, int N) {
  using C = std::complex<long double>;
  const long double pi = 3.141592653589793238462643383279503L;
  const long double tl = static_cast<long double>(t);
  const long double r = 0.4L * N / tl;
  long double sum = 0.0L;
  for (int k = 0; k < N; ++k) {
    const long double theta = pi * (k + 0.5L) / N;
    const long double cot = cosl(theta) / sinl(theta);
    const C s(r * theta * cot, r * theta);
    const C ds(r * (cot - theta * (1.0L + cot * cot)), r);
    C w(0.0L, 0.0L);
    for (std::size_t i = 0; i < model.n(); ++i)
      w += static_cast<long double>(model.weights[i]) *
           std::pow(s, static_cast<long double>(model.orders[i]));
    const C g = std::exp(s * tl) * (w / (s * (w + static_cast<long double>(lambda)))) * ds;
    sum += g.imag();
  }
  return sum / N;
}

// Returns NaN when the two node counts disagree beyond budget (send it to the
// ODE).  The disagreement floor is absolute: round-off along the contour grows
// like exp(0.4 N) * eps, which also rules out rescuing a failure with more
// nodes — past N ~ 56 the quadrature gain is eaten by round-off.
double mode_via_contour(double lambda, const FractionalModel& model, double t) {
  long double v1 = mode_contour_once(lambda, model, t, 40);
  long double v2 = mode_contour_once(lambda, model, t, 56);
  long double est = fabsl(v2 - v1);
  if (est <= 2e-10L + 1e-9L * fabsl(v2)) return static_cast<double>(v2);
  return std::numeric_limits<double>::quiet_NaN();
}

// One L1 solve covering every requested time (ascending, positive), instead
// of a quadratic-cost solve per point.
std::vector<double> mode_via_ode_batch(double lambda, const FractionalModel& model,
                                       const std::vector<double>& need) {
  const double t_hi = need.back();
  auto attempt = [&](int points, double tol) {
    auto grid = make_ode_grid(t_hi, points, model);
    grid.insert(grid.end(), need.begin(), need.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [](double a, double b) { return b - a <= 1e-12 * b; }),
               grid.end());
    double est = 0.0;
    auto y = frac_ode_oracle(lambda, model, grid, tol, &est);
    std::vector<double> out(need.size());
    for (std::size_t i = 0; i < need.size(); ++i) {
      auto it = std::lower_bound(grid.begin(), grid.end(), need[i] * (1.0 - 1e-12));
      out[i] = y[static_cast<std::size_t>(it - grid.begin())];
    }
    return out;
  };
  for (int points : {1200, 3000}) {
    try {
      return attempt(points, 1e-5);
    } catch (const StepSizeError&) {
    }
  }
  // last resort: report the finest answer regardless of its own estimate
  return attempt(6000, std::numeric_limits<double>::infinity());
}

}  // namespace

MLValue eval_multinomial_ml(const MLParams& params, std::span<const double> zs,
                            const TruncationPolicy& policy) {
  params.validate();
  double max_abs = 0.0;
  for (double z : zs) max_abs = std::max(max_abs, std::abs(z));
  check_series_domain(zs.size(), params.thetas.size(), max_abs, policy);

  std::vector<long double> zl(zs.begin(), zs.end());
  SeriesDiag diag;
  const long double v = series_sum<long double>(params.theta0, params.thetas, zl, policy, diag);
  return {static_cast<double>(v), diag.tail + diag.cancellation, diag.degree};
}

MLComplexValue eval_multinomial_ml(const MLParams& params,
                                   std::span<const std::complex<double>> zs,
                                   const TruncationPolicy& policy) {
  params.validate();
  double max_abs = 0.0;
  for (const auto& z : zs) max_abs = std::max(max_abs, std::abs(z));
  check_series_domain(zs.size(), params.thetas.size(), max_abs, policy);

  std::vector<std::complex<long double>> zl;
  zl.reserve(zs.size());
  for (const auto& z : zs) zl.emplace_back(z.real(), z.imag());
  SeriesDiag diag;
  const auto v = series_sum<std::complex<long double>>(params.theta0, params.thetas, zl, policy, diag);
  return {{static_cast<double>(v.real()), static_cast<double>(v.imag())},
          diag.tail + diag.cancellation,
          diag.degree};
}

MLValue eval_ml2(double alpha, double beta, double z, const TruncationPolicy& policy) {
  MLParams p{beta, {alpha}};
  const double zz[] = {z};
  return eval_multinomial_ml(p, zz, policy);
}

std::vector<double> eval_mode_grid(double lambda, const FractionalModel& model,
                                   std::span<const double> ts, const TruncationPolicy& policy) {
  model.validate();
  require(model.n() <= kMaxComponents, "mode evaluation supports at most 8 fractional terms");
  require(lambda >= 0.0, "mode eigenvalue must be nonnegative");
  for (double t : ts) require(t >= 0.0, "mode times must be nonnegative");

  std::vector<double> out(ts.size(), 1.0);
  if (lambda == 0.0) return out;  // zero mode is constant

  // pure classical mode: the algebraic tail vanishes identically, so none of
  // the fractional machinery applies (or is needed)
  if (model.n() == 1 && model.orders[0] == 1.0) {
    for (std::size_t i = 0; i < ts.size(); ++i)
      out[i] = std::exp(-(lambda / model.weights[0]) * ts[i]);
    return out;
  }

  const std::size_t n = model.n();
  const double an = model.alpha_max();
  const double qn = model.q_max_order();
  // The mode evaluator runs the series well past the user-facing domain gate:
  // the shrink loop below enforces tail and cancellation budgets directly, and
  // a wide window is what keeps the series and asymptotic regimes overlapping.
  const double radius = std::max(policy.series_domain_radius, 12.0);

  // largest t each series argument stays inside the radius for
  double t_star = std::pow(radius * qn / lambda, 1.0 / an);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double cap = radius * qn / model.weights[i];
    t_star = std::min(t_star, std::pow(cap, 1.0 / (an - model.orders[i])));
  }

  double t_series_max = 0.0;
  double t_pos_min = std::numeric_limits<double>::infinity();
  for (double t : ts) {
    if (t > 0.0 && t <= t_star) t_series_max = std::max(t_series_max, t);
    if (t > 0.0) t_pos_min = std::min(t_pos_min, t);
  }

  ModeSeriesTable tab;
  double t_ok = 0.0;
  if (t_series_max > 0.0) {
    tab = build_mode_table(lambda, model, t_series_max, t_pos_min, policy);
    // shrink the series window until both the majorant tail and the floating
    // cancellation (peak layer bound * eps) are inside budget; both grow with t
    if (tab.converged) {
      t_ok = tab.t_build;
      for (int tries = 0; tries < 80 && t_ok >= t_pos_min; ++tries) {
        const bool tail_ok = tab.tail_at(t_ok) < 1e-12;
        const bool cancel_ok =
            std::exp(tab.log_peak_abs(t_ok)) * static_cast<double>(LDBL_EPSILON) * 16.0 < 1e-10;
        if (tail_ok && cancel_ok) break;
        t_ok *= 0.7;
      }
      if (t_ok < t_pos_min) t_ok = 0.0;
    }
  }

  AsymTable asym;
  const double asym_tol = std::max(policy.abs_tol, 2e-10) * 10.0;
  std::vector<std::size_t> ode_idx;
  for (std::size_t idx = 0; idx < ts.size(); ++idx) {
    const double t = ts[idx];
    if (t == 0.0) continue;
    if (t <= t_ok) {
      const auto ev = eval_mode_table(tab, t);
      // y = 1 + zc_0 t^{a_n} E(...); zc_0 t^{a_n} is entry-table component 0 power 1
      const long double pre = tab.zconst[0] * powl(static_cast<long double>(t), static_cast<long double>(an));
      out[idx] = static_cast<double>(1.0L + pre * ev.value);
      continue;
    }
    const auto ar = eval_asymptotic(asym, lambda, model, t, asym_tol);
    if (ar.ok) {
      out[idx] = ar.value;
      continue;
    }
    const double cv = mode_via_contour(lambda, model, t);
    if (std::isfinite(cv)) {
      out[idx] = cv;
      continue;
    }
    ode_idx.push_back(idx);
  }
  if (!ode_idx.empty()) {
    std::vector<double> need;
    need.reserve(ode_idx.size());
    for (std::size_t idx : ode_idx) need.push_back(ts[idx]);
    std::sort(need.begin(), need.end());
    need.erase(std::unique(need.begin(), need.end()), need.end());
    const auto ys = mode_via_ode_batch(lambda, model, need);
    for (std::size_t idx : ode_idx) {
      const auto it = std::lower_bound(need.begin(), need.end(), ts[idx]);
      out[idx] = ys[static_cast<std::size_t>(it - need.begin())];
    }
  }
  return out;
}

double eval_mode(double lambda, const FractionalModel& model, double t,
                 const TruncationPolicy& policy) {
  const double ts[] = {t};
  return eval_mode_grid(lambda, model, ts, policy)[0];
}

// ---------------------------------------------------------------------------
// product-integration ODE solver

namespace {

// L1 scheme on a (possibly nonuniform) grid g with g[0] = 0, y[0] = 1:
// each Caputo term is discretized with a piecewise-linear memory kernel,
//   D^a y(t_k) ~ sum_j c_{k,j} (y_j - y_{j-1}),
//   c_{k,j} = [(t_k - t_{j-1})^{1-a} - (t_k - t_j)^{1-a}] / (Gamma(2-a) (t_j - t_{j-1})),
// and the resulting implicit relation is solved for y_k step by step.
// Terms with a = 1 use the exact first-difference stencil (no memory).
std::vector<double> solve_mode_ode_l1(double lambda, const FractionalModel& model,
                                      const std::vector<double>& g) {
  const std::size_t m = g.size();
  const std::size_t n = model.n();
  std::vector<double> y(m, 1.0);
  if (lambda == 0.0) return y;

  std::vector<double> gamma2(n), expo(n);
  std::vector<bool> classical(n);
  for (std::size_t i = 0; i < n; ++i) {
    classical[i] = model.orders[i] == 1.0;
    expo[i] = 1.0 - model.orders[i];
    gamma2[i] = classical[i] ? 1.0 : std::tgamma(2.0 - model.orders[i]);
  }

  std::vector<double> dy(m, 0.0);  // y_j - y_{j-1}
  for (std::size_t k = 1; k < m; ++k) {
    const double tk = g[k];
    const double hk = g[k] - g[k - 1];
    double diag = 0.0;    // sum_i q_i c^i_{k,k}
    double memory = 0.0;  // sum_i q_i sum_{j<k} c^i_{k,j} dy_j
    for (std::size_t i = 0; i < n; ++i) {
      const double q = model.weights[i];
      if (classical[i]) {
        diag += q / hk;
        continue;
      }
      const double e = expo[i];
      const double norm = q / gamma2[i];
      double prev = std::pow(tk - g[0], e);
      for (std::size_t j = 1; j < k; ++j) {
        const double cur = std::pow(tk - g[j], e);
        memory += norm * (prev - cur) / (g[j] - g[j - 1]) * dy[j];
        prev = cur;
      }
      diag += norm * std::pow(hk, e - 1.0);
    }
    y[k] = (diag * y[k - 1] - memory) / (diag + lambda);
    dy[k] = y[k] - y[k - 1];
  }
  return y;
}

// Crank-Nicolson for the pure classical case y' = -(lambda/q) y: second order,
// which is what gets the alpha = 1 oracle down to ~1e-8 on desk grids.
std::vector<double> solve_mode_ode_cn(double lambda, const FractionalModel& model,
                                      const std::vector<double>& g) {
  std::vector<double> y(g.size(), 1.0);
  const double rate = lambda / model.weights[0];
  for (std::size_t k = 1; k < g.size(); ++k) {
    const double h = g[k] - g[k - 1];
    y[k] = y[k - 1] * (1.0 - rate * h / 2.0) / (1.0 + rate * h / 2.0);
  }
  return y;
}

std::vector<double> solve_mode_ode(double lambda, const FractionalModel& model,
                                   const std::vector<double>& g) {
  if (model.n() == 1 && model.orders[0] == 1.0) return solve_mode_ode_cn(lambda, model, g);
  return solve_mode_ode_l1(lambda, model, g);
}

}  // namespace

std::vector<double> frac_ode_oracle(double lambda, const FractionalModel& model,
                                    std::span<const double> t_grid, double tol,
                                    double* error_estimate) {
  model.validate();
  require(lambda >= 0.0, "mode eigenvalue must be nonnegative");
  require(!t_grid.empty(), "time grid must be nonempty");
  require(t_grid[0] >= 0.0, "time grid must start at or after 0");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    require(t_grid[i] > t_grid[i - 1], "time grid must be strictly increasing");

  // internal grid always starts at t = 0 where y = 1 is known
  std::vector<double> g;
  g.reserve(t_grid.size() + 1);
  std::size_t first = 0;
  if (t_grid[0] > 0.0)
    g.push_back(0.0);
  else
    first = 1;  // t_grid[0] == 0 maps to the prepended node
  g.insert(g.end(), t_grid.begin() + static_cast<std::ptrdiff_t>(first), t_grid.end());
  if (first == 1) g.insert(g.begin(), 0.0);

  const auto coarse = solve_mode_ode(lambda, model, g);

  std::vector<double> fine_grid;
  fine_grid.reserve(g.size() * 2);
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    fine_grid.push_back(g[i]);
    fine_grid.push_back(0.5 * (g[i] + g[i + 1]));
  }
  fine_grid.push_back(g.back());
  const auto fine = solve_mode_ode(lambda, model, fine_grid);

  double est = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    est = std::max(est, std::abs(coarse[i] - fine[2 * i]));
  if (error_estimate) *error_estimate = est;
  if (est > tol)
    throw StepSizeError("grid-halving estimate " + std::to_string(est) +
                        " exceeds requested tolerance " + std::to_string(tol));

  std::vector<double> out;
  out.reserve(t_grid.size());
  // map requested points back; g == {0} + t_grid (minus duplicate 0 handling)
  const std::size_t offset = (t_grid[0] > 0.0) ? 1 : 0;
  for (std::size_t i = 0; i < t_grid.size(); ++i) out.push_back(fine[2 * (i + offset)]);
  return out;
}

std::vector<double> make_ode_grid(double t_max, int points, const FractionalModel& model) {
  require(t_max > 0.0, "grid endpoint must be positive");
  require(points >= 16, "grid needs at least 16 points");
  model.validate();
  const double r = std::clamp(2.0 / model.alpha_max(), 2.0, 8.0);
  const double t_knee = t_max / 10.0;
  const int m1 = points / 2;
  const int m2 = points - m1;
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(points) + 1);
  for (int i = 0; i <= m1; ++i)
    g.push_back(t_knee * std::pow(static_cast<double>(i) / m1, r));
  for (int j = 1; j <= m2; ++j)
    g.push_back(t_knee + (t_max - t_knee) * static_cast<double>(j) / m2);
  return g;
}

}  // namespace fracorder
