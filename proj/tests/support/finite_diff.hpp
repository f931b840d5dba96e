#pragma once

// Central finite-difference oracle used to check analytic gradients. It only
// perturbs raw leaf values and re-runs a forward closure; it never touches the
// reverse sweep it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "leap/tensor.hpp"

namespace leap::testing {

inline std::vector<double> central_difference(Tensor& leaf, const std::function<double()>& f,
                                              double step = 1e-5) {
  auto values = leaf.mutable_data();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + step;
    const double up = f();
    values[i] = keep - step;
    const double down = f();
    values[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

// max_i |a_i - b_i| / max(|b|_inf, floor)
inline double relative_error(std::span<const double> a, std::span<const double> b,
                             double floor = 1e-8) {
  double num = 0.0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / den;
}

}  // namespace leap::testing
