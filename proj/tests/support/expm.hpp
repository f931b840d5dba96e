#pragma once

// Matrix exponential by scaling and squaring of a truncated Taylor series.
// Test-only oracle for linear ODE solutions.

#include <cmath>
#include <vector>

namespace leap::testing {

using Mat = std::vector<std::vector<double>>;

inline Mat mat_mul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size();
  Mat c(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat expm(const Mat& a, double tol = 1e-12) {
  const std::size_t n = a.size();
  double norm = 0.0;
  for (const auto& row : a) {
    double s = 0.0;
    for (double v : row) s += std::abs(v);
    norm = std::max(norm, s);
  }
  int squarings = 0;
  while (norm > 0.5) {
    norm *= 0.5;
    ++squarings;
  }
  Mat scaled = a;
  const double f = std::ldexp(1.0, -squarings);
  for (auto& row : scaled)
    for (double& v : row) v *= f;
  Mat result(n, std::vector<double>(n, 0.0)), term(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) result[i][i] = term[i][i] = 1.0;
  for (int k = 1; k < 40; ++k) {
    term = mat_mul(term, scaled);
    double mx = 0.0;
    for (auto& row : term)
      for (double& v : row) {
        v /= k;
        mx = std::max(mx, std::abs(v));
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) result[i][j] += term[i][j];
    if (mx < tol * 1e-4) break;
  }
  for (int s = 0; s < squarings; ++s) result = mat_mul(result, result);
  return result;
}

}  // namespace leap::testing
