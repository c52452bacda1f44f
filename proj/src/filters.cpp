#include "battkit/filters.hpp"

#include <cmath>

#include "battkit/errors.hpp"

namespace battkit::filters {

HighPassFilter::HighPassFilter(double tc_s) : tc_s_(tc_s) {
  if (!(tc_s > 0.0)) throw InvalidInput("HighPassFilter: Tc must be positive");
}

void HighPassFilter::precharge(double u0) {
  if (!std::isfinite(u0)) throw InvalidInput("HighPassFilter: non-finite input");
  u_prev_ = u0;
  y_prev_ = 0.0;
}

double HighPassFilter::step(double u, double ts_s) {
  if (!std::isfinite(u)) throw InvalidInput("HighPassFilter: non-finite input");
  if (!(ts_s > 0.0)) throw InvalidInput("HighPassFilter: ts must be positive");
  const double denom = 2.0 * tc_s_ + ts_s;
  const double y =
      (2.0 * tc_s_ / denom) * (u - u_prev_) + ((2.0 * tc_s_ - ts_s) / denom) * y_prev_;
  u_prev_ = u;
  y_prev_ = y;
  return y;
}

TimeSeries gen_injection(const InjectionSpec& spec, double ts_s) {
  if (!(spec.amplitude_a >= 0.0) || !(spec.freq_hz > 0.0) ||
      !(spec.duration_s > 0.0))
    throw InvalidInput("gen_injection: bad injection spec");
  if (!(ts_s > 0.0)) throw InvalidInput("gen_injection: ts must be positive");
  if (!(spec.freq_hz < 0.5 / ts_s))
    throw InvalidInput("gen_injection: frequency violates the Nyquist limit");

  const long n = std::lround(spec.duration_s / ts_s);
  TimeSeries out;
  out.samples.reserve(static_cast<std::size_t>(n));
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (long k = 0; k < n; ++k) {
    const double t = k * ts_s;
    const double i = spec.offset_a + spec.amplitude_a * std::sin(two_pi * spec.freq_hz * t);
    out.samples.push_back({t, i, 0.0});
  }
  return out;
}

}  // namespace battkit::filters
