#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "battkit/ecm.hpp"
#include "battkit/ocv.hpp"
#include "battkit/pipeline.hpp"
#include "battkit/timeseries.hpp"

namespace battkit::harness {

struct InjectionWindow {
  double t_start_s = 0.0;
  double duration_s = 0.0;
  double freq_hz = 0.0;
  double amplitude_c = 0.5;  // amplitude as a C-rate multiple
};

struct ProfileSpec {
  double soc_start = 0.01;
  double soc_top = 0.70;
  double soc_bottom = 0.01;
  double c_rate = 0.1;
  int n_cycles = 4;
  double ts_est_s = 1.0;
  double ts_fine_s = 0.1;
  InjectionWindow hf{14400.0, 200.0, 0.5, 0.5};
  InjectionWindow mf{14700.0, 3000.0, 0.01, 0.5};
};

// Bias segment start, either absolute or resolved at the start of a cycle's
// discharge once the profile is built.
struct BiasSpec {
  struct Segment {
    double dv_v = 0.0;
    std::optional<double> t_s;
    std::optional<int> at_cycle;  // 1-based
  };
  std::vector<Segment> segments;
};

struct Scenario {
  std::string name;
  ecm::CellParams cell;
  std::optional<std::string> anchors_csv;  // absent -> built-in curve
  ProfileSpec profile;
  BiasSpec bias;
  double noise_std_v = 1e-3;
  std::uint64_t seed = 1;

  pipeline::PipelineConfig estimator;
  double init_soc = 0.10;
  double init_qb_frac = 0.80;     // of true capacity
  double init_params_frac = 0.80; // of true Rs, Rt, tau
  double init_dv_v = 0.0;
};

Scenario load_scenario(const std::string& path);
ocv::OcvCurve scenario_curve(const Scenario& sc);

// Current script at native rates: the estimation series runs at ts_est
// throughout while injection windows are additionally produced at ts_fine.
struct BuiltProfile {
  struct Span {
    double t0_s = 0.0;  // first sample sits at t0 + ts
    double ts_s = 1.0;
    std::vector<double> i_a;
    bool fine = false;  // injection window kept at the fine rate
  };
  std::vector<Span> spans;
  std::vector<double> discharge_start_s;  // one per cycle
  double stage_transition_t_s = 0.0;
  double t_end_s = 0.0;
};

BuiltProfile build_profile(const Scenario& sc);

// Bias segments with cycle references resolved against the built profile.
ecm::BiasSchedule resolve_bias(const BiasSpec& spec, const BuiltProfile& bp);

struct SimulatedScenario {
  TimeSeries est;                // uniform ts_est series for the estimator
  std::vector<double> soc_true;  // aligned with est
  std::vector<double> vc_true;
  TimeSeries hf_segment;         // fine-rate injection windows
  TimeSeries mf_segment;
  ecm::BiasSchedule bias;
  std::vector<double> discharge_start_s;
  double stage_transition_t_s = 0.0;
};

SimulatedScenario simulate_scenario(const Scenario& sc,
                                    const ocv::OcvCurve& curve);

// Root-mean-square SOC error in percent.
double rmse_soc(std::span<const double> est, std::span<const double> truth);
// Absolute relative capacity error in percent.
double re_capacity(double qb_hat_ah, double qb_true_ah);

struct CycleMetrics {
  int cycle = 0;
  double rmse_soc_pct = 0.0;
  double re_qb_pct = 0.0;
  std::optional<double> dv_at_l_exit_v;
};

struct RunReport {
  std::string scenario;
  ecm::CellParams params_id;
  double rs_err_pct = 0.0;
  double rt_err_pct = 0.0;
  double tau_err_pct = 0.0;
  std::vector<CycleMetrics> cycles;  // index 0 = initial stage
  double final_rmse_soc_pct = 0.0;
  double final_re_qb_pct = 0.0;
  std::optional<double> baseline_final_rmse_soc_pct;
  std::optional<double> baseline_final_re_qb_pct;
  double runtime_s = 0.0;

  std::string to_json() const;
};

struct RunOptions {
  bool compare_baseline = false;
  bool baseline_only = false;
  // Output directory; empty = no files written.
  std::string out_dir;
};

RunReport run_scenario(const Scenario& sc, const RunOptions& opt = {});

// Simulate only: writes measured.csv (+ truth columns) and the fine-rate
// injection segment files.
void simulate_to_dir(const Scenario& sc, const std::string& out_dir);

}  // namespace battkit::harness
