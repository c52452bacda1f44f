#pragma once

#include <vector>

#include "battkit/ocv.hpp"
#include "battkit/rng.hpp"
#include "battkit/timeseries.hpp"

namespace battkit::ecm {

// First-order equivalent circuit: ohmic resistance in series with one RC
// pair and an OCV source. Positive current = discharge everywhere.
struct CellParams {
  double rs_ohm = 0.0;  // ohmic resistance
  double rt_ohm = 0.0;  // diffusion resistance
  double tau_s = 0.0;   // RC time constant
  double qb_ah = 0.0;   // capacity [Ah]
  double eta = 1.0;     // charge/discharge efficiency

  double ct_farad() const { return tau_s / rt_ohm; }
  void validate() const;  // throws InvalidInput
};

struct CellState {
  double soc = 0.0;   // 0..1
  double vc_v = 0.0;  // RC pair voltage
};

struct SocStep {
  double soc = 0.0;
  bool clamped = false;
};

// SOC removed by current i over one step. The only place the Ah-to-coulomb
// factor (3600) lives.
double coulomb_delta(double i_a, double ts_s, double eta, double qb_ah);

// Exact discrete RC propagation: e^{-ts/tau}*vc + Rt*(1-e^{-ts/tau})*i.
double step_vc(double vc_prev_v, double i_a, const CellParams& p, double ts_s);

// Coulomb counting with [0,1] clamp; the clamp is reported, not silent.
SocStep step_soc(double soc_prev, double i_a, const CellParams& p, double ts_s);

// Vb = OCV(soc) - Rs*i - Vc
double terminal_voltage(const CellState& s, double i_a, const CellParams& p,
                        const ocv::OcvCurve& curve);

// Piecewise-constant voltage-sensor bias, segments ordered by start time.
struct BiasSchedule {
  struct Segment {
    double start_s = 0.0;
    double dv_v = 0.0;
  };
  std::vector<Segment> segments;

  double at(double t_s) const;  // 0 when empty
  void validate() const;
};

struct SimResult {
  TimeSeries measured;           // v_v = Vb + dV(t) + noise
  std::vector<double> soc_true;  // hidden ground truth, aligned
  std::vector<double> vc_true;
  CellState final_state;
  bool soc_clamped = false;
};

// Ground-truth twin. Every profile sample k propagates the state over one
// period using i(k), then measures; the caller owns any t0 snapshot row.
// The profile must be uniformly sampled.
SimResult simulate(const CellState& initial, const TimeSeries& current_profile,
                   const CellParams& params, const ocv::OcvCurve& curve,
                   const BiasSchedule& bias, double noise_std_v,
                   rng::Stream& noise);

}  // namespace battkit::ecm
