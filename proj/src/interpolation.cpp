#include "leap/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "leap/errors.hpp"

namespace leap {

namespace {

void check_increasing(const std::vector<double>& times) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1]))
      throw ContractError("knot times must be strictly increasing (index " + std::to_string(i) +
                          ")");
  }
}

struct Observed {
  std::vector<double> t;
  std::vector<double> y;
};

Observed gather(const std::vector<double>& times, const std::vector<double>& values,
                const std::vector<bool>& observed, std::size_t channel) {
  if (values.size() != times.size() || observed.size() != times.size())
    throw DimensionError("channel " + std::to_string(channel) + " has " +
                         std::to_string(values.size()) + " values for " +
                         std::to_string(times.size()) + " times");
  Observed o;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (observed[i]) {
      o.t.push_back(times[i]);
      o.y.push_back(values[i]);
    }
  }
  if (o.t.size() < 2)
    throw InsufficientDataError("channel " + std::to_string(channel) + " has " +
                                std::to_string(o.t.size()) +
                                " observed points; at least 2 are required");
  return o;
}

ChannelSpline linear_channel(Observed o) {
  ChannelSpline s;
  const std::size_t n = o.t.size() - 1;
  s.segments.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = o.t[i + 1] - o.t[i];
    s.segments[i] = {o.y[i], (o.y[i + 1] - o.y[i]) / h, 0.0, 0.0};
  }
  s.knots = std::move(o.t);
  s.values = std::move(o.y);
  return s;
}

// Natural boundary: second derivative M is zero at both ends. Interior M_i
// solve the symmetric tridiagonal system
//   h_{i-1} M_{i-1} + 2 (h_{i-1} + h_i) M_i + h_i M_{i+1} = 6 (s_i - s_{i-1})
// with s_i the secant slope of segment i (Thomas algorithm).
ChannelSpline natural_cubic_channel(Observed o) {
  const std::size_t n = o.t.size() - 1;
  std::vector<double> h(n), slope(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = o.t[i + 1] - o.t[i];
    slope[i] = (o.y[i + 1] - o.y[i]) / h[i];
  }
  std::vector<double> m(n + 1, 0.0);
  if (n >= 2) {
    const std::size_t k = n - 1;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = j + 1;
      diag[j] = 2.0 * (h[i - 1] + h[i]);
      upper[j] = h[i];
      rhs[j] = 6.0 * (slope[i] - slope[i - 1]);
    }
    for (std::size_t j = 1; j < k; ++j) {
      const double w = h[j] / diag[j - 1];  // sub-diagonal entry of row j is h_j
      diag[j] -= w * upper[j - 1];
      rhs[j] -= w * rhs[j - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t j = k - 1; j-- > 0;) m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
  }
  ChannelSpline s;
  s.segments.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.segments[i] = {o.y[i], slope[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0, 0.5 * m[i],
                     (m[i + 1] - m[i]) / (6.0 * h[i])};
  }
  s.knots = std::move(o.t);
  s.values = std::move(o.y);
  return s;
}

template <class ChannelFit>
ControlPath fit_with(const std::vector<double>& times,
                     const std::vector<std::vector<double>>& values,
                     const std::vector<std::vector<bool>>& observed, InterpolationScheme scheme,
                     ChannelFit fit) {
  if (times.size() < 2) throw InsufficientDataError("a path needs at least two sample times");
  check_increasing(times);
  if (values.size() != observed.size() || values.empty())
    throw DimensionError("values and mask must describe the same nonzero channel count");
  std::vector<ChannelSpline> channels;
  channels.reserve(values.size());
  for (std::size_t c = 0; c < values.size(); ++c)
    channels.push_back(fit(gather(times, values[c], observed[c], c)));
  return ControlPath(times, std::move(channels), scheme);
}

}  // namespace

// ---- ChannelSpline -------------------------------------------------------------

std::size_t ChannelSpline::locate(double t) const {
  auto it = std::upper_bound(knots.begin(), knots.end(), t);
  std::size_t idx = static_cast<std::size_t>(it - knots.begin());
  idx = idx == 0 ? 0 : idx - 1;
  return std::min(idx, segments.size() - 1);
}

double ChannelSpline::value(double t) const {
  if (t <= knots.front()) return values.front();
  if (t >= knots.back()) return values.back();
  const std::size_t i = locate(t);
  const CubicSegment& s = segments[i];
  const double u = t - knots[i];
  return s.a + u * (s.b + u * (s.c + u * s.d));
}

double ChannelSpline::derivative(double t) const {
  if (t < knots.front() || t > knots.back()) return 0.0;
  const std::size_t i = locate(t);
  const CubicSegment& s = segments[i];
  const double u = t - knots[i];
  return s.b + u * (2.0 * s.c + 3.0 * u * s.d);
}

double ChannelSpline::second_derivative(double t) const {
  if (t < knots.front() || t > knots.back()) return 0.0;
  const std::size_t i = locate(t);
  const CubicSegment& s = segments[i];
  return 2.0 * s.c + 6.0 * s.d * (t - knots[i]);
}

// ---- ControlPath ---------------------------------------------------------------

ControlPath::ControlPath(std::vector<double> times, std::vector<ChannelSpline> channels,
                         InterpolationScheme scheme)
    : times_(std::move(times)), channels_(std::move(channels)), scheme_(scheme) {}

void ControlPath::check_domain(double t) const {
  const double tol = 1e-12 * std::max(1.0, std::abs(end() - start()));
  if (!(t >= start() - tol && t <= end() + tol))
    throw DomainError("path evaluated at t=" + std::to_string(t) + " outside [" +
                      std::to_string(start()) + ", " + std::to_string(end()) + "]");
}

std::vector<double> ControlPath::value(double t) const {
  std::vector<double> out(channels());
  value_into(t, out.data());
  return out;
}

std::vector<double> ControlPath::derivative(double t) const {
  std::vector<double> out(channels());
  derivative_into(t, out.data());
  return out;
}

void ControlPath::value_into(double t, double* out) const {
  check_domain(t);
  for (std::size_t c = 0; c < channels_.size(); ++c) out[c] = channels_[c].value(t);
}

void ControlPath::derivative_into(double t, double* out) const {
  check_domain(t);
  for (std::size_t c = 0; c < channels_.size(); ++c) out[c] = channels_[c].derivative(t);
}

// ---- fitting ---------------------------------------------------------------------

ControlPath fit_natural_cubic(const std::vector<double>& times,
                              const std::vector<std::vector<double>>& values,
                              const std::vector<std::vector<bool>>& observed) {
  return fit_with(times, values, observed, InterpolationScheme::natural_cubic,
                  natural_cubic_channel);
}

ControlPath fit_linear(const std::vector<double>& times,
                       const std::vector<std::vector<double>>& values,
                       const std::vector<std::vector<bool>>& observed) {
  return fit_with(times, values, observed, InterpolationScheme::linear, linear_channel);
}

ControlPath fit_path(InterpolationScheme scheme, const std::vector<double>& times,
                     const std::vector<std::vector<double>>& values,
                     const std::vector<std::vector<bool>>& observed) {
  return scheme == InterpolationScheme::linear ? fit_linear(times, values, observed)
                                               : fit_natural_cubic(times, values, observed);
}

std::vector<double> normalize_times(const std::vector<double>& raw) {
  if (raw.size() < 2) throw InsufficientDataError("cannot normalize fewer than two times");
  check_increasing(raw);
  const double n = static_cast<double>(raw.size() - 1);
  const double t0 = raw.front();
  const double span = raw.back() - t0;
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - t0) / span * n;
  out.back() = n;
  return out;
}

}  // namespace leap
