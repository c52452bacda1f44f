#include "battkit/ecm.hpp"

#include <algorithm>
#include <cmath>

#include "battkit/errors.hpp"

namespace battkit::ecm {

void CellParams::validate() const {
  if (!(rs_ohm > 0.0) || !(rt_ohm > 0.0) || !(tau_s > 0.0) || !(qb_ah > 0.0))
    throw InvalidInput("CellParams: resistances, tau and capacity must be positive");
  if (!(eta > 0.0) || !(eta <= 1.0))
    throw InvalidInput("CellParams: eta must be in (0, 1]");
  if (!std::isfinite(ct_farad()))
    throw InvalidInput("CellParams: derived capacitance is not finite");
}

double coulomb_delta(double i_a, double ts_s, double eta, double qb_ah) {
  return eta * ts_s * i_a / (3600.0 * qb_ah);
}

double step_vc(double vc_prev_v, double i_a, const CellParams& p, double ts_s) {
  if (!std::isfinite(vc_prev_v) || !std::isfinite(i_a) || !std::isfinite(ts_s))
    throw InvalidInput("step_vc: non-finite input");
  if (!(ts_s > 0.0)) throw InvalidInput("step_vc: ts must be positive");
  const double decay = std::exp(-ts_s / p.tau_s);
  return decay * vc_prev_v + p.rt_ohm * (1.0 - decay) * i_a;
}

SocStep step_soc(double soc_prev, double i_a, const CellParams& p, double ts_s) {
  if (!std::isfinite(soc_prev) || !std::isfinite(i_a) || !std::isfinite(ts_s))
    throw InvalidInput("step_soc: non-finite input");
  if (!(ts_s > 0.0)) throw InvalidInput("step_soc: ts must be positive");
  const double soc = soc_prev - coulomb_delta(i_a, ts_s, p.eta, p.qb_ah);
  if (soc < 0.0) return {0.0, true};
  if (soc > 1.0) return {1.0, true};
  return {soc, false};
}

double terminal_voltage(const CellState& s, double i_a, const CellParams& p,
                        const ocv::OcvCurve& curve) {
  return curve.eval(s.soc) - p.rs_ohm * i_a - s.vc_v;
}

double BiasSchedule::at(double t_s) const {
  double dv = 0.0;
  for (const Segment& seg : segments) {
    if (t_s < seg.start_s) break;
    dv = seg.dv_v;
  }
  return dv;
}

void BiasSchedule::validate() const {
  if (segments.empty()) return;
  if (segments.front().start_s != 0.0)
    throw InvalidInput("BiasSchedule: first segment must start at t=0");
  for (std::size_t k = 1; k < segments.size(); ++k)
    if (!(segments[k].start_s > segments[k - 1].start_s))
      throw InvalidInput("BiasSchedule: segment starts must strictly increase");
}

SimResult simulate(const CellState& initial, const TimeSeries& current_profile,
                   const CellParams& params, const ocv::OcvCurve& curve,
                   const BiasSchedule& bias, double noise_std_v,
                   rng::Stream& noise) {
  params.validate();
  bias.validate();
  if (!(noise_std_v >= 0.0)) throw InvalidInput("simulate: negative noise std");
  const double ts = current_profile.sample_period();  // enforces uniformity

  SimResult out;
  out.measured.samples.reserve(current_profile.size());
  out.soc_true.reserve(current_profile.size());
  out.vc_true.reserve(current_profile.size());

  CellState state = initial;
  for (const Sample& in : current_profile.samples) {
    const SocStep s = step_soc(state.soc, in.i_a, params, ts);
    state.soc = s.soc;
    out.soc_clamped = out.soc_clamped || s.clamped;
    state.vc_v = step_vc(state.vc_v, in.i_a, params, ts);

    const double vb = terminal_voltage(state, in.i_a, params, curve);
    const double n = (noise_std_v > 0.0) ? noise_std_v * noise.gaussian() : 0.0;
    const double v = vb + bias.at(in.t_s) + n;

    out.measured.samples.push_back({in.t_s, in.i_a, v});
    out.soc_true.push_back(state.soc);
    out.vc_true.push_back(state.vc_v);
  }
  out.final_state = state;
  return out;
}

}  // namespace battkit::ecm
