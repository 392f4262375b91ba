#pragma once

// Test-only reference implementations.  Deliberately brute-force and slow:
// they share no code path with the library so agreement is meaningful.

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fracorder/mlf.hpp"

namespace fracorder::testing {

using bigfloat = boost::multiprecision::cpp_bin_float_quad;

// Upper bound on the part of the multinomial ML series beyond total degree
// `degree`: the degree-k layer is bounded by (sum |z_i|)^k / Gamma(theta0 +
// theta_min*k), summed until the layers are negligible.  Valid once the Gamma
// argument is past its minimum (true for degree >= 20, theta_min >= 0.05).
inline double series_tail_bound(const MLParams& params, const std::vector<double>& zs,
                                int degree) {
  double zsum = 0.0;
  for (double z : zs) zsum += std::abs(z);
  if (zsum == 0.0) return 0.0;
  double tmin = params.thetas[0];
  for (double t : params.thetas) tmin = std::min(tmin, t);
  double tail = 0.0;
  for (int k = degree + 1; k <= 400; ++k)
    tail += std::exp(k * std::log(zsum) - std::lgamma(params.theta0 + tmin * k));
  return tail;
}

// Direct triple-loop sum of the multinomial Mittag-Leffler series: over total
// degree k, over all compositions (k_1..k_n) of k, multinomial coefficient
// times product of powers over Gamma(th0 + sum th_i k_i).  Accumulation is
// 113-bit (the alternating degree layers cancel, so the sum needs the extra
// precision); the Gamma factor is a positive per-term scale with no
// cancellation, evaluated in 80-bit long double.  No adaptive truncation —
// the caller picks max_degree via series_tail_bound.
inline double oracle_multinomial_ml(const MLParams& params, const std::vector<double>& zs,
                                    int max_degree = 60) {
  const std::size_t n = params.thetas.size();

  std::vector<bigfloat> fact(max_degree + 1);
  fact[0] = 1;
  for (int k = 1; k <= max_degree; ++k) fact[k] = fact[k - 1] * k;
  std::vector<std::vector<bigfloat>> zpow(n, std::vector<bigfloat>(max_degree + 1));
  for (std::size_t i = 0; i < n; ++i) {
    zpow[i][0] = 1;
    for (int k = 1; k <= max_degree; ++k) zpow[i][k] = zpow[i][k - 1] * zs[i];
  }

  bigfloat total = 0;
  std::vector<int> comp(n, 0);
  for (int k = 0; k <= max_degree; ++k) {
    std::fill(comp.begin(), comp.end(), 0);
    comp[0] = k;
    for (;;) {
      bigfloat term = fact[k];
      long double arg = params.theta0;
      for (std::size_t i = 0; i < n; ++i) {
        term *= zpow[i][comp[i]];
        term /= fact[comp[i]];
        arg += static_cast<long double>(params.thetas[i]) * comp[i];
      }
      total += term / boost::math::tgamma(arg);

      // next composition: move the leading unit one slot right
      std::size_t i = 0;
      while (i + 1 < n && comp[i] == 0) ++i;
      if (i + 1 >= n) break;
      const int head = comp[i];
      comp[i] = 0;
      comp[0] = head - 1;
      ++comp[i + 1];
    }
  }
  return total.convert_to<double>();
}

}  // namespace fracorder::testing
