#pragma once

#include <optional>
#include <string>
#include <vector>

#include "battkit/ecm.hpp"
#include "battkit/kalman.hpp"
#include "battkit/ocv.hpp"
#include "battkit/timeseries.hpp"

namespace battkit::pipeline {

enum class Stage { ParamId, StateEst };

struct PipelineConfig {
  ocv::ZoneConfig zones;

  // noise covariances
  double r_meas = 1e-6;    // (1 mV)^2
  double q_soc = 1e-10;
  double q_qb = 1e-8;      // (1e-4 Ah)^2 per step
  double q_dv = 1e-10;
  double q_rs = 1e-10;
  double q_rt = 1e-10;
  double q_tau = 1e-4;

  // initial covariances: 10x the squared expected initial error
  double init_err_soc = 0.09;
  double init_err_qb_frac = 0.25;  // relative to the initial capacity guess
  double init_err_dv_v = 0.03;
  double init_err_rs_frac = 0.25;
  double init_err_rt_frac = 0.25;
  double init_err_tau_frac = 0.25;
  double p0_scale = 10.0;

  // high-pass filter time constants for the two identification stages
  double tc_hf_s = 10.0;
  double tc_mf_s = 300.0;
  double id_burn_in_tcs = 5.0;  // discard this many Tc of filtered output

  bool l_zone_discharge_only = true;
  bool recursive_tau_sensitivity = false;

  double ts_s = 1.0;
  // ParamId -> StateEst switch; identified parameters are adopted at the
  // first sample at or after this time.
  double stage_transition_t_s = 0.0;
};

struct PipelineState {
  Stage stage = Stage::StateEst;
  ocv::Zone zone = ocv::Zone::Mid;
  double soc_hat = 0.0;
  double qb_hat = 0.0;
  double dv_hat = 0.0;
  double vc_hat = 0.0;
  ecm::CellParams params_hat;
  int cycle_index = 0;  // 0 = initial stage, increments at discharge start

  kalman::DekfState dekf;
  kalman::EkfState<1> dv_f;
  double last_i_a = 0.0;
};

// Initial state per the experimental protocol: SOC and capacity guesses with
// covariances scaled from the configured expected initial errors.
PipelineState init_state(double soc0_hat, double qb0_hat_ah,
                         const ecm::CellParams& params_guess,
                         const PipelineConfig& cfg, Stage stage);

struct TrajectoryPoint {
  double t_s = 0.0;
  ocv::Zone zone = ocv::Zone::Mid;
  double soc_hat = 0.0;
  double qb_hat = 0.0;
  double dv_hat = 0.0;
  double vc_hat = 0.0;
  int cycle_index = 0;
  Stage stage = Stage::StateEst;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;

  void write_csv(const std::string& path,
                 const std::vector<double>* soc_true = nullptr,
                 double qb_true_ah = 0.0) const;
};

struct IdResult {
  ecm::CellParams params;
  bool tau_floored = false;
  kalman::Trace rs_trace;
  kalman::Trace rt_tau_trace;
};

// Step 1: high-pass both streams of each injection segment (filters
// precharged to the first sample so constant offsets never enter), drop the
// configured burn-in, then run the Rs and (Rt, tau) estimators in sequence.
// Capacity and efficiency pass through from the initial guess.
IdResult run_param_id(const TimeSeries& hf_segment,
                      const TimeSeries& mf_segment,
                      const ecm::CellParams& init_guess,
                      const PipelineConfig& cfg);

// Step 2 state machine, one sample. The zone decision uses the previous
// step's SOC estimate. High: dual filter updates SOC and capacity (bias
// compensated). Mid: coulomb counting only. Low: coulomb counting plus the
// bias estimator (discharge passes only, unless configured otherwise); the
// estimate is latched for compensation when the zone is left.
void step(PipelineState& p, const Sample& s, const ocv::OcvCurve& curve,
          const PipelineConfig& cfg);

// Folds step over the series. If identified params are supplied the state
// starts in ParamId and adopts them at cfg.stage_transition_t_s.
Trajectory run(const TimeSeries& data, PipelineState state,
               const ocv::OcvCurve& curve, const PipelineConfig& cfg,
               const std::optional<ecm::CellParams>& identified = std::nullopt);

// Continuous-estimation baseline: the dual filter runs on every sample
// regardless of zone and the sensor bias is never estimated or compensated.
Trajectory run_baseline(const TimeSeries& data, PipelineState state,
                        const ecm::CellParams& true_params,
                        const ocv::OcvCurve& curve, const PipelineConfig& cfg);

}  // namespace battkit::pipeline
