#include "battkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "battkit/filters.hpp"

namespace battkit::pipeline {

PipelineState init_state(double soc0_hat, double qb0_hat_ah,
                         const ecm::CellParams& params_guess,
                         const PipelineConfig& cfg, Stage stage) {
  cfg.zones.validate();
  PipelineState p;
  p.stage = stage;
  p.soc_hat = soc0_hat;
  p.qb_hat = qb0_hat_ah;
  p.dv_hat = 0.0;
  p.vc_hat = 0.0;
  p.params_hat = params_guess;
  p.zone = ocv::classify_zone(cfg.zones, soc0_hat);

  p.dekf.soc_f.x[0] = soc0_hat;
  p.dekf.soc_f.p[0][0] = cfg.p0_scale * cfg.init_err_soc * cfg.init_err_soc;
  p.dekf.soc_f.q[0][0] = cfg.q_soc;
  p.dekf.soc_f.r_meas = cfg.r_meas;

  p.dekf.qb_f.x[0] = qb0_hat_ah;
  const double eqb = cfg.init_err_qb_frac * qb0_hat_ah;
  p.dekf.qb_f.p[0][0] = cfg.p0_scale * eqb * eqb;
  p.dekf.qb_f.q[0][0] = cfg.q_qb;
  p.dekf.qb_f.r_meas = cfg.r_meas;

  p.dv_f.x[0] = 0.0;  // bias assumed unknown, start at zero
  p.dv_f.p[0][0] = cfg.p0_scale * cfg.init_err_dv_v * cfg.init_err_dv_v;
  p.dv_f.q[0][0] = cfg.q_dv;
  p.dv_f.r_meas = cfg.r_meas;
  return p;
}

namespace {

struct FilteredSegment {
  double t0_s = 0.0;
  double ts_s = 0.0;
  std::vector<double> vf;
  std::vector<double> if_;
};

// Identical high-pass instances on the voltage and current streams,
// precharged to the first sample, burn-in dropped.
FilteredSegment filter_segment(const TimeSeries& seg, double tc_s,
                               double burn_in_tcs) {
  FilteredSegment out;
  const double ts = seg.sample_period();
  out.ts_s = ts;
  filters::HighPassFilter fv(tc_s);
  filters::HighPassFilter fi(tc_s);
  fv.precharge(seg.samples.front().v_v);
  fi.precharge(seg.samples.front().i_a);
  const std::size_t burn = static_cast<std::size_t>(
      std::ceil(burn_in_tcs * tc_s / ts));
  out.vf.reserve(seg.size());
  out.if_.reserve(seg.size());
  for (std::size_t k = 0; k < seg.size(); ++k) {
    const double vf = fv.step(seg.samples[k].v_v, ts);
    const double if_ = fi.step(seg.samples[k].i_a, ts);
    if (k >= burn) {
      out.vf.push_back(vf);
      out.if_.push_back(if_);
    }
  }
  out.t0_s = seg.samples.front().t_s + static_cast<double>(burn) * ts;
  return out;
}

}  // namespace

IdResult run_param_id(const TimeSeries& hf_segment,
                      const TimeSeries& mf_segment,
                      const ecm::CellParams& init_guess,
                      const PipelineConfig& cfg) {
  init_guess.validate();
  if (hf_segment.size() < 2)
    throw IdentifiabilityError("high-frequency injection segment missing");
  if (mf_segment.size() < 2)
    throw IdentifiabilityError("medium-frequency injection segment missing");

  const FilteredSegment hf =
      filter_segment(hf_segment, cfg.tc_hf_s, cfg.id_burn_in_tcs);
  kalman::ScalarIdConfig rs_cfg;
  rs_cfg.q = cfg.q_rs;
  rs_cfg.r_meas = cfg.r_meas;
  const double ers = cfg.init_err_rs_frac * init_guess.rs_ohm;
  rs_cfg.p0 = cfg.p0_scale * ers * ers;
  kalman::RsResult rs = kalman::estimate_rs(hf.vf, hf.if_, init_guess.rs_ohm,
                                            hf.t0_s, hf.ts_s, rs_cfg);

  const FilteredSegment mf =
      filter_segment(mf_segment, cfg.tc_mf_s, cfg.id_burn_in_tcs);
  kalman::RtTauConfig rt_cfg;
  rt_cfg.q_rt = cfg.q_rt;
  rt_cfg.q_tau = cfg.q_tau;
  rt_cfg.r_meas = cfg.r_meas;
  const double ert = cfg.init_err_rt_frac * init_guess.rt_ohm;
  const double etau = cfg.init_err_tau_frac * init_guess.tau_s;
  rt_cfg.p0_rt = cfg.p0_scale * ert * ert;
  rt_cfg.p0_tau = cfg.p0_scale * etau * etau;
  rt_cfg.recursive_sensitivity = cfg.recursive_tau_sensitivity;
  kalman::RtTauResult rt = kalman::estimate_rt_tau(
      mf.vf, mf.if_, rs.rs_ohm, {init_guess.rt_ohm, init_guess.tau_s},
      mf.t0_s, mf.ts_s, rt_cfg);

  IdResult out;
  out.params = init_guess;  // capacity and efficiency pass through
  out.params.rs_ohm = rs.rs_ohm;
  out.params.rt_ohm = rt.theta.rt_ohm;
  out.params.tau_s = rt.theta.tau_s;
  out.tau_floored = rt.tau_floored;
  out.rs_trace = std::move(rs.trace);
  out.rt_tau_trace = std::move(rt.trace);
  return out;
}

void step(PipelineState& p, const Sample& s, const ocv::OcvCurve& curve,
          const PipelineConfig& cfg) {
  const double ts = cfg.ts_s;

  // zone decision from the previous step's estimate
  const ocv::Zone zone = ocv::classify_zone(cfg.zones, p.soc_hat);
  const bool leaving_low = p.zone == ocv::Zone::Low && zone != ocv::Zone::Low;
  if (leaving_low && p.stage == Stage::StateEst)
    p.dekf.dv_comp_v = p.dv_hat;  // latch for the coming high-zone dwells
  p.zone = zone;

  // discharge starts delimit cycles; only meaningful once the injection
  // windows are over
  if (p.stage == Stage::StateEst && s.i_a > 0.0 && p.last_i_a <= 0.0)
    ++p.cycle_index;
  p.last_i_a = s.i_a;

  switch (zone) {
    case ocv::Zone::High: {
      kalman::dekf_step(p.dekf, s.i_a, s.v_v, p.params_hat, curve, ts);
      p.soc_hat = p.dekf.soc_f.x[0];
      p.qb_hat = p.dekf.qb_f.x[0];
      p.dv_f.p[0][0] += cfg.q_dv;
      break;
    }
    case ocv::Zone::Mid:
    case ocv::Zone::Low: {
      ecm::CellParams cc = p.params_hat;
      cc.qb_ah = p.qb_hat;
      const ecm::SocStep st = ecm::step_soc(p.soc_hat, s.i_a, cc, ts);
      p.soc_hat = st.soc;
      p.dekf.soc_f.x[0] = st.soc;  // the dual filter resumes from here
      p.dekf.vc_v = ecm::step_vc(p.dekf.vc_v, s.i_a, p.params_hat, ts);
      kalman::dekf_idle_predict(p.dekf);

      const bool dv_active =
          zone == ocv::Zone::Low && p.stage == Stage::StateEst &&
          (!cfg.l_zone_discharge_only || s.i_a > 0.0);
      if (dv_active) {
        p.dv_hat = kalman::estimate_dv(p.dv_f, p.soc_hat, s.i_a, s.v_v,
                                       p.params_hat, curve, p.dekf.vc_v);
      } else {
        p.dv_f.p[0][0] += cfg.q_dv;
      }
      break;
    }
  }
  p.vc_hat = p.dekf.vc_v;
}

Trajectory run(const TimeSeries& data, PipelineState state,
               const ocv::OcvCurve& curve, const PipelineConfig& cfg,
               const std::optional<ecm::CellParams>& identified) {
  Trajectory traj;
  traj.points.reserve(data.size());
  for (const Sample& s : data.samples) {
    if (state.stage == Stage::ParamId && identified &&
        s.t_s >= cfg.stage_transition_t_s) {
      state.params_hat.rs_ohm = identified->rs_ohm;
      state.params_hat.rt_ohm = identified->rt_ohm;
      state.params_hat.tau_s = identified->tau_s;
      state.stage = Stage::StateEst;
    }
    step(state, s, curve, cfg);
    traj.points.push_back({s.t_s, state.zone, state.soc_hat, state.qb_hat,
                           state.dv_hat, state.vc_hat, state.cycle_index,
                           state.stage});
  }
  return traj;
}

Trajectory run_baseline(const TimeSeries& data, PipelineState state,
                        const ecm::CellParams& true_params,
                        const ocv::OcvCurve& curve, const PipelineConfig& cfg) {
  state.stage = Stage::StateEst;
  state.params_hat = true_params;
  Trajectory traj;
  traj.points.reserve(data.size());
  for (const Sample& s : data.samples) {
    if (s.i_a > 0.0 && state.last_i_a <= 0.0) ++state.cycle_index;
    state.last_i_a = s.i_a;
    kalman::dekf_step(state.dekf, s.i_a, s.v_v, state.params_hat, curve,
                      cfg.ts_s);
    state.soc_hat = state.dekf.soc_f.x[0];
    state.qb_hat = state.dekf.qb_f.x[0];
    state.vc_hat = state.dekf.vc_v;
    state.zone = ocv::classify_zone(cfg.zones, state.soc_hat);
    traj.points.push_back({s.t_s, state.zone, state.soc_hat, state.qb_hat,
                           state.dv_hat, state.vc_hat, state.cycle_index,
                           state.stage});
  }
  return traj;
}

void Trajectory::write_csv(const std::string& path,
                           const std::vector<double>* soc_true,
                           double qb_true_ah) const {
  if (soc_true && soc_true->size() != points.size())
    throw InvalidInput("trajectory truth column has wrong length");
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << "t_s,zone,soc_hat,qb_hat,dv_hat,vc_hat";
  if (soc_true) f << ",soc_true,qb_true";
  f << ",cycle,stage\n";
  char buf[256];
  for (std::size_t k = 0; k < points.size(); ++k) {
    const TrajectoryPoint& p = points[k];
    std::snprintf(buf, sizeof(buf), "%.17g,%s,%.17g,%.17g,%.17g,%.17g", p.t_s,
                  ocv::zone_name(p.zone), p.soc_hat, p.qb_hat, p.dv_hat,
                  p.vc_hat);
    f << buf;
    if (soc_true) {
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", (*soc_true)[k],
                    qb_true_ah);
      f << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%d,%s\n", p.cycle_index,
                  p.stage == Stage::ParamId ? "param_id" : "state_est");
    f << buf;
  }
}

}  // namespace battkit::pipeline
