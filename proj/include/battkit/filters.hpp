#pragma once

#include "battkit/timeseries.hpp"

namespace battkit::filters {

// Discrete first-order high-pass H(s) = Tc*s/(1 + Tc*s), Tustin-discretized:
//   y(k) = 2Tc/(2Tc+ts) * (u(k) - u(k-1)) + (2Tc-ts)/(2Tc+ts) * y(k-1)
// DC components of the input decay like e^{-t/Tc}.
class HighPassFilter {
 public:
  explicit HighPassFilter(double tc_s);

  // Seed the previous-input state so the first sample does not register as a
  // step. A constant offset present from sample 0 then never appears in the
  // output at all.
  void precharge(double u0);

  double step(double u, double ts_s);

  double tc_s() const { return tc_s_; }
  double prev_input() const { return u_prev_; }
  double prev_output() const { return y_prev_; }

 private:
  double tc_s_;
  double u_prev_ = 0.0;
  double y_prev_ = 0.0;
};

struct InjectionSpec {
  double amplitude_a = 0.0;
  double freq_hz = 0.0;
  double duration_s = 0.0;
  double offset_a = 0.0;
};

// Sinusoidal excitation i(t) = offset + A*sin(2*pi*f*t), samples at
// t = 0, ts, ..., covering [0, duration). Throws on Nyquist violation.
TimeSeries gen_injection(const InjectionSpec& spec, double ts_s);

}  // namespace battkit::filters
