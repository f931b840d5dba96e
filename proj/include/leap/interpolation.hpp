#pragma once

// Continuous control paths built from irregular, partially observed samples.
//
// Each channel is fitted independently through its own observed points. A
// channel whose first (last) observation comes after (before) the sample's
// first (last) time is held constant at that observation outside its span,
// so every channel is defined on the full sample domain.

#include <array>
#include <cstddef>
#include <vector>

namespace leap {

enum class InterpolationScheme { natural_cubic, linear };

// S(t) = a + b u + c u^2 + d u^3 with u = t - knot on each segment.
struct CubicSegment {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
};

struct ChannelSpline {
  std::vector<double> knots;
  std::vector<double> values;
  std::vector<CubicSegment> segments;  // knots.size() - 1 entries

  double value(double t) const;
  double derivative(double t) const;
  double second_derivative(double t) const;

 private:
  std::size_t locate(double t) const;
};

class ControlPath {
 public:
  ControlPath(std::vector<double> times, std::vector<ChannelSpline> channels,
              InterpolationScheme scheme);

  std::size_t channels() const { return channels_.size(); }
  double start() const { return times_.front(); }
  double end() const { return times_.back(); }
  const std::vector<double>& knot_times() const { return times_; }
  InterpolationScheme scheme() const { return scheme_; }
  const ChannelSpline& channel(std::size_t c) const { return channels_.at(c); }

  std::vector<double> value(double t) const;
  std::vector<double> derivative(double t) const;
  // Writes into a caller buffer of size channels(); hot path for solvers.
  void value_into(double t, double* out) const;
  void derivative_into(double t, double* out) const;

 private:
  void check_domain(double t) const;

  std::vector<double> times_;
  std::vector<ChannelSpline> channels_;
  InterpolationScheme scheme_;
};

// `values[c][i]` and `observed[c][i]` index channel c at times[i].
ControlPath fit_natural_cubic(const std::vector<double>& times,
                              const std::vector<std::vector<double>>& values,
                              const std::vector<std::vector<bool>>& observed);

ControlPath fit_linear(const std::vector<double>& times,
                       const std::vector<std::vector<double>>& values,
                       const std::vector<std::vector<bool>>& observed);

ControlPath fit_path(InterpolationScheme scheme, const std::vector<double>& times,
                     const std::vector<std::vector<double>>& values,
                     const std::vector<std::vector<bool>>& observed);

// Affine map of raw sample times onto [0, N] where N + 1 is the sample count.
std::vector<double> normalize_times(const std::vector<double>& raw);

}  // namespace leap
