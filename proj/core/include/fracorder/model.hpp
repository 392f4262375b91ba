#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fracorder/errors.hpp"

namespace fracorder {

// The multi-term time operator sum_i q_i d^{a_i}/dt^{a_i} with
// 0 < a_1 < ... < a_n <= 1 and q_i > 0.  a_n = 1 is admitted so the classical
// single-term limit (plain first derivative) stays inside the type.
struct FractionalModel {
  std::vector<double> orders;   // strictly increasing, in (0, 1]
  std::vector<double> weights;  // positive, same length as orders

  std::size_t n() const noexcept { return orders.size(); }
  double alpha_max() const { return orders.back(); }
  double q_max_order() const { return weights.back(); }

  void validate() const {
    require(!orders.empty(), "model needs at least one fractional term");
    require(orders.size() == weights.size(), "orders/weights length mismatch");
    for (std::size_t i = 0; i < orders.size(); ++i) {
      require(orders[i] > 0.0 && orders[i] <= 1.0, "orders must lie in (0, 1]");
      require(weights[i] > 0.0, "weights must be positive");
      if (i > 0) require(orders[i] > orders[i - 1], "orders must be strictly increasing");
    }
  }
};

// Sorts (order, weight) pairs ascending by order and validates.  Identification
// and synthesis both funnel through this so permuted inputs are canonical.
inline FractionalModel make_model(std::vector<double> orders, std::vector<double> weights) {
  require(orders.size() == weights.size(), "orders/weights length mismatch");
  std::vector<std::size_t> idx(orders.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return orders[a] < orders[b]; });
  FractionalModel m;
  m.orders.reserve(orders.size());
  m.weights.reserve(orders.size());
  for (std::size_t i : idx) {
    m.orders.push_back(orders[i]);
    m.weights.push_back(weights[i]);
  }
  m.validate();
  return m;
}

}  // namespace fracorder
