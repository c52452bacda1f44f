#include "battkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "battkit/errors.hpp"
#include "battkit/filters.hpp"

namespace battkit::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Rethrows with the pipeline-stage label while keeping the error class, so
// exit codes stay faithful.
[[noreturn]] void throw_with_stage(const char* stage, const Error& e) {
  const std::string msg = std::string(stage) + ": " + e.what();
  if (dynamic_cast<const NumericalFailure*>(&e)) throw NumericalFailure(msg);
  if (dynamic_cast<const IdentifiabilityError*>(&e))
    throw IdentifiabilityError(msg);
  if (dynamic_cast<const InvalidInput*>(&e)) throw InvalidInput(msg);
  if (dynamic_cast<const FormatError*>(&e)) throw FormatError(msg);
  if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
  if (dynamic_cast<const FitFailure*>(&e)) throw FitFailure(msg);
  throw Error(msg);
}

long exact_count(double span_s, double ts_s, const char* what) {
  const double n = span_s / ts_s;
  const long rounded = std::lround(n);
  if (std::abs(n - static_cast<double>(rounded)) > 1e-6 || rounded < 0)
    throw ConfigError(std::string(what) + " is not aligned to the sampling grid");
  return rounded;
}

TimeSeries span_profile(const BuiltProfile::Span& span) {
  TimeSeries p;
  p.samples.resize(span.i_a.size());
  for (std::size_t k = 0; k < span.i_a.size(); ++k)
    p.samples[k] = {span.t0_s + static_cast<double>(k + 1) * span.ts_s,
                    span.i_a[k], 0.0};
  return p;
}

}  // namespace

BuiltProfile build_profile(const Scenario& sc) {
  const ProfileSpec& ps = sc.profile;
  sc.cell.validate();
  if (!(ps.soc_start >= 0.0 && ps.soc_start < ps.soc_top && ps.soc_top <= 1.0))
    throw ConfigError("profile: need 0 <= soc_start < soc_top <= 1");
  if (!(ps.soc_bottom >= 0.0 && ps.soc_bottom < ps.soc_top))
    throw ConfigError("profile: need 0 <= soc_bottom < soc_top");
  if (!(ps.c_rate > 0.0)) throw ConfigError("profile: c_rate must be positive");
  if (ps.n_cycles < 0) throw ConfigError("profile: negative cycle count");
  if (!(ps.ts_fine_s > 0.0) || !(ps.ts_est_s > 0.0))
    throw ConfigError("profile: sampling periods must be positive");
  const long fine_ratio = exact_count(ps.ts_est_s, ps.ts_fine_s,
                                      "estimation period over fine period");
  if (fine_ratio < 1)
    throw ConfigError("profile: ts_fine must not exceed ts_est");

  const double i_amp = ps.c_rate * sc.cell.qb_ah;  // 1C equals qb_ah amps
  const double init_dur = (ps.soc_top - ps.soc_start) / ps.c_rate * 3600.0;
  const double cycle_half = (ps.soc_top - ps.soc_bottom) / ps.c_rate * 3600.0;

  const double hf_end = ps.hf.t_start_s + ps.hf.duration_s;
  const double mf_end = ps.mf.t_start_s + ps.mf.duration_s;
  if (!(ps.hf.t_start_s > 0.0 && hf_end <= ps.mf.t_start_s && mf_end < init_dur))
    throw ConfigError(
        "profile: injection windows must fit, in order, inside the initial "
        "charge");

  BuiltProfile bp;
  // span boundaries advance by whole sample counts so cycle times stay exact
  auto coarse = [&](double t0, double dur, double i, const char* what) {
    const long n = exact_count(dur, ps.ts_est_s, what);
    BuiltProfile::Span s;
    s.t0_s = t0;
    s.ts_s = ps.ts_est_s;
    s.i_a.assign(static_cast<std::size_t>(n), i);
    bp.spans.push_back(std::move(s));
    return t0 + static_cast<double>(n) * ps.ts_est_s;
  };
  auto window = [&](double t0, const InjectionWindow& w, double offset,
                    const char* what) {
    exact_count(w.t_start_s, ps.ts_est_s, what);
    exact_count(w.duration_s, ps.ts_est_s, what);
    filters::InjectionSpec spec;
    spec.amplitude_a = w.amplitude_c * sc.cell.qb_ah;
    spec.freq_hz = w.freq_hz;
    spec.duration_s = w.duration_s;
    spec.offset_a = offset;
    const TimeSeries inj = filters::gen_injection(spec, ps.ts_fine_s);
    BuiltProfile::Span s;
    s.t0_s = t0;
    s.ts_s = ps.ts_fine_s;
    s.fine = true;
    s.i_a.reserve(inj.size());
    for (const Sample& smp : inj.samples) s.i_a.push_back(smp.i_a);
    bp.spans.push_back(std::move(s));
    return t0 + w.duration_s;
  };

  const double i_chg = -i_amp;
  double t = 0.0;
  t = coarse(t, ps.hf.t_start_s, i_chg, "high-frequency window start");
  t = window(t, ps.hf, i_chg, "high-frequency window");
  t = coarse(t, ps.mf.t_start_s - hf_end, i_chg, "gap between windows");
  t = window(t, ps.mf, i_chg, "medium-frequency window");
  bp.stage_transition_t_s = t;
  t = coarse(t, init_dur - mf_end, i_chg, "initial charge tail");

  for (int c = 0; c < ps.n_cycles; ++c) {
    bp.discharge_start_s.push_back(t);
    t = coarse(t, cycle_half, i_amp, "discharge leg");
    t = coarse(t, cycle_half, i_chg, "charge leg");
  }
  bp.t_end_s = t;
  return bp;
}

ecm::BiasSchedule resolve_bias(const BiasSpec& spec, const BuiltProfile& bp) {
  ecm::BiasSchedule out;
  for (const BiasSpec::Segment& s : spec.segments) {
    double t = 0.0;
    if (s.t_s && s.at_cycle)
      throw ConfigError("bias segment: give either t_s or at_cycle, not both");
    if (s.t_s) {
      t = *s.t_s;
    } else if (s.at_cycle) {
      const int c = *s.at_cycle;
      if (c < 1 || static_cast<std::size_t>(c) > bp.discharge_start_s.size())
        throw ConfigError("bias segment: at_cycle outside the profile");
      t = bp.discharge_start_s[static_cast<std::size_t>(c - 1)];
    }
    out.segments.push_back({t, s.dv_v});
  }
  std::sort(out.segments.begin(), out.segments.end(),
            [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  out.validate();
  return out;
}

ocv::OcvCurve scenario_curve(const Scenario& sc) {
  if (!sc.anchors_csv) return ocv::default_lfp();
  const auto anchors = ocv::read_anchors_csv(*sc.anchors_csv);
  return ocv::fit(anchors).curve();
}

SimulatedScenario simulate_scenario(const Scenario& sc,
                                    const ocv::OcvCurve& curve) {
  const BuiltProfile bp = build_profile(sc);
  SimulatedScenario out;
  out.bias = resolve_bias(sc.bias, bp);
  out.discharge_start_s = bp.discharge_start_s;
  out.stage_transition_t_s = bp.stage_transition_t_s;

  const long fine_ratio =
      std::lround(sc.profile.ts_est_s / sc.profile.ts_fine_s);
  ecm::CellState state{sc.profile.soc_start, 0.0};
  std::size_t fine_seen = 0;
  for (std::size_t si = 0; si < bp.spans.size(); ++si) {
    const BuiltProfile::Span& span = bp.spans[si];
    if (span.i_a.empty()) continue;
    rng::Stream stream = rng::Stream::derive(sc.seed, si);
    const TimeSeries profile = span_profile(span);
    const ecm::SimResult res = ecm::simulate(state, profile, sc.cell, curve,
                                             out.bias, sc.noise_std_v, stream);
    state = res.final_state;

    if (!span.fine) {
      for (std::size_t k = 0; k < res.measured.size(); ++k) {
        out.est.samples.push_back(res.measured.samples[k]);
        out.soc_true.push_back(res.soc_true[k]);
        out.vc_true.push_back(res.vc_true[k]);
      }
    } else {
      TimeSeries& seg = (fine_seen == 0) ? out.hf_segment : out.mf_segment;
      seg = res.measured;
      ++fine_seen;
      for (std::size_t k = 0; k < res.measured.size(); ++k) {
        if ((static_cast<long>(k) + 1) % fine_ratio != 0) continue;
        // the estimation series sees the coarse-rate samples of the window
        out.est.samples.push_back(res.measured.samples[k]);
        out.soc_true.push_back(res.soc_true[k]);
        out.vc_true.push_back(res.vc_true[k]);
      }
    }
  }
  return out;
}

double rmse_soc(std::span<const double> est, std::span<const double> truth) {
  if (est.size() != truth.size())
    throw InvalidInput("rmse_soc: series lengths differ");
  if (est.empty()) throw InvalidInput("rmse_soc: empty series");
  double acc = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double d = est[k] - truth[k];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(est.size())) * 100.0;
}

double re_capacity(double qb_hat_ah, double qb_true_ah) {
  if (!(qb_true_ah > 0.0))
    throw InvalidInput("re_capacity: true capacity must be positive");
  return std::abs(qb_hat_ah - qb_true_ah) / qb_true_ah * 100.0;
}

namespace {

json params_json(const ecm::CellParams& p) {
  return json{{"rs_ohm", p.rs_ohm},
              {"rt_ohm", p.rt_ohm},
              {"tau_s", p.tau_s},
              {"qb_ah", p.qb_ah},
              {"eta", p.eta}};
}

struct CycleRange {
  int cycle;
  std::size_t begin;
  std::size_t end;  // exclusive
};

// Cycle j covers (discharge_start_j, discharge_start_{j+1}]; index 0 is the
// initial stage.
std::vector<CycleRange> cycle_ranges(const TimeSeries& est,
                                     const std::vector<double>& dstarts) {
  std::vector<CycleRange> out;
  std::vector<std::size_t> bounds{0};
  for (double t : dstarts) {
    const auto it = std::upper_bound(
        est.samples.begin(), est.samples.end(), t,
        [](double value, const Sample& s) { return value < s.t_s; });
    bounds.push_back(static_cast<std::size_t>(it - est.samples.begin()));
  }
  bounds.push_back(est.size());
  for (std::size_t j = 0; j + 1 < bounds.size(); ++j)
    if (bounds[j + 1] > bounds[j])
      out.push_back({static_cast<int>(j), bounds[j], bounds[j + 1]});
  return out;
}

std::vector<CycleMetrics> compute_cycle_metrics(
    const pipeline::Trajectory& traj, const SimulatedScenario& sim,
    double qb_true) {
  std::vector<double> soc_hat(traj.points.size());
  for (std::size_t k = 0; k < traj.points.size(); ++k)
    soc_hat[k] = traj.points[k].soc_hat;

  std::vector<CycleMetrics> out;
  for (const CycleRange& r : cycle_ranges(sim.est, sim.discharge_start_s)) {
    CycleMetrics m;
    m.cycle = r.cycle;
    m.rmse_soc_pct = rmse_soc(
        std::span<const double>(soc_hat).subspan(r.begin, r.end - r.begin),
        std::span<const double>(sim.soc_true).subspan(r.begin, r.end - r.begin));
    m.re_qb_pct = re_capacity(traj.points[r.end - 1].qb_hat, qb_true);
    for (std::size_t k = r.end; k-- > r.begin;) {
      if (traj.points[k].zone == ocv::Zone::Low &&
          traj.points[k].stage == pipeline::Stage::StateEst) {
        m.dv_at_l_exit_v = traj.points[k].dv_hat;
        break;
      }
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace

std::string RunReport::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["params_id"] = params_json(params_id);
  j["params_err_pct"] = {{"rs", rs_err_pct}, {"rt", rt_err_pct},
                         {"tau", tau_err_pct}};
  json cyc = json::array();
  for (const CycleMetrics& m : cycles) {
    json c{{"cycle", m.cycle},
           {"rmse_soc_pct", m.rmse_soc_pct},
           {"re_qb_pct", m.re_qb_pct}};
    if (m.dv_at_l_exit_v) c["dv_at_l_exit_v"] = *m.dv_at_l_exit_v;
    cyc.push_back(c);
  }
  j["cycles"] = cyc;
  j["final_rmse_soc_pct"] = final_rmse_soc_pct;
  j["final_re_qb_pct"] = final_re_qb_pct;
  if (baseline_final_rmse_soc_pct) {
    j["baseline_final_rmse_soc_pct"] = *baseline_final_rmse_soc_pct;
    j["baseline_final_re_qb_pct"] = *baseline_final_re_qb_pct;
  }
  j["runtime_s"] = runtime_s;
  return j.dump(2);
}

RunReport run_scenario(const Scenario& sc, const RunOptions& opt) {
  const auto t_begin = std::chrono::steady_clock::now();
  const ocv::OcvCurve curve = scenario_curve(sc);
  const SimulatedScenario sim = simulate_scenario(sc, curve);

  pipeline::PipelineConfig cfg = sc.estimator;
  cfg.ts_s = sc.profile.ts_est_s;
  cfg.stage_transition_t_s = sim.stage_transition_t_s;

  ecm::CellParams guess = sc.cell;
  guess.rs_ohm *= sc.init_params_frac;
  guess.rt_ohm *= sc.init_params_frac;
  guess.tau_s *= sc.init_params_frac;
  guess.qb_ah *= sc.init_qb_frac;

  RunReport rep;
  rep.scenario = sc.name;

  pipeline::Trajectory traj;
  pipeline::IdResult id;
  const bool run_compensated = !opt.baseline_only;
  if (run_compensated) {
    try {
      id = pipeline::run_param_id(sim.hf_segment, sim.mf_segment, guess, cfg);
    } catch (const Error& e) {
      throw_with_stage("param_id", e);
    }
    pipeline::PipelineState st = pipeline::init_state(
        sc.init_soc, guess.qb_ah, guess, cfg, pipeline::Stage::ParamId);
    st.dv_f.x[0] = sc.init_dv_v;
    st.dv_hat = sc.init_dv_v;
    try {
      traj = pipeline::run(sim.est, st, curve, cfg, id.params);
    } catch (const Error& e) {
      throw_with_stage("pipeline", e);
    }
    rep.params_id = id.params;
    rep.rs_err_pct = (id.params.rs_ohm / sc.cell.rs_ohm - 1.0) * 100.0;
    rep.rt_err_pct = (id.params.rt_ohm / sc.cell.rt_ohm - 1.0) * 100.0;
    rep.tau_err_pct = (id.params.tau_s / sc.cell.tau_s - 1.0) * 100.0;
  }

  pipeline::Trajectory btraj;
  const bool run_base = opt.compare_baseline || opt.baseline_only;
  if (run_base) {
    pipeline::PipelineState st = pipeline::init_state(
        sc.init_soc, guess.qb_ah, sc.cell, cfg, pipeline::Stage::StateEst);
    try {
      btraj = pipeline::run_baseline(sim.est, st, sc.cell, curve, cfg);
    } catch (const Error& e) {
      throw_with_stage("baseline", e);
    }
  }

  const pipeline::Trajectory& main_traj = run_compensated ? traj : btraj;
  rep.cycles = compute_cycle_metrics(main_traj, sim, sc.cell.qb_ah);
  if (!rep.cycles.empty()) {
    rep.final_rmse_soc_pct = rep.cycles.back().rmse_soc_pct;
    rep.final_re_qb_pct = rep.cycles.back().re_qb_pct;
  }
  if (run_base && run_compensated) {
    const auto bm = compute_cycle_metrics(btraj, sim, sc.cell.qb_ah);
    if (!bm.empty()) {
      rep.baseline_final_rmse_soc_pct = bm.back().rmse_soc_pct;
      rep.baseline_final_re_qb_pct = bm.back().re_qb_pct;
    }
  }
  if (!run_compensated) rep.params_id = sc.cell;

  rep.runtime_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_begin)
                      .count();

  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    write_csv(sim.est, sim.soc_true, sim.vc_true, (dir / "measured.csv").string());
    if (run_compensated) {
      traj.write_csv((dir / "trajectory.csv").string(), &sim.soc_true,
                     sc.cell.qb_ah);
      id.rs_trace.write_csv((dir / "rs_trace.csv").string());
      id.rt_tau_trace.write_csv((dir / "rt_tau_trace.csv").string());
    }
    if (run_base)
      btraj.write_csv((dir / "baseline_trajectory.csv").string(),
                      &sim.soc_true, sc.cell.qb_ah);

    CsvTable percycle;
    percycle.columns = {"cycle", "rmse_soc_pct", "re_qb_pct", "dv_at_l_exit_v"};
    percycle.data.resize(4);
    for (const CycleMetrics& m : rep.cycles) {
      percycle.data[0].push_back(m.cycle);
      percycle.data[1].push_back(m.rmse_soc_pct);
      percycle.data[2].push_back(m.re_qb_pct);
      percycle.data[3].push_back(m.dv_at_l_exit_v ? *m.dv_at_l_exit_v
                                                  : std::nan(""));
    }
    write_csv_table(percycle, (dir / "percycle.csv").string());

    std::ofstream f(dir / "report.json");
    f << rep.to_json() << '\n';
  }
  return rep;
}

void simulate_to_dir(const Scenario& sc, const std::string& out_dir) {
  const ocv::OcvCurve curve = scenario_curve(sc);
  const SimulatedScenario sim = simulate_scenario(sc, curve);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_csv(sim.est, sim.soc_true, sim.vc_true, (dir / "measured.csv").string());
  write_csv(sim.hf_segment, (dir / "injection_hf.csv").string());
  write_csv(sim.mf_segment, (dir / "injection_mf.csv").string());
}

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }

  try {
    Scenario sc;
    sc.name = j.value("name", fs::path(path).stem().string());
    const json& cell = j.at("cell");
    sc.cell.rs_ohm = cell.at("rs_ohm").get<double>();
    sc.cell.rt_ohm = cell.at("rt_ohm").get<double>();
    sc.cell.tau_s = cell.at("tau_s").get<double>();
    sc.cell.qb_ah = cell.at("qb_ah").get<double>();
    sc.cell.eta = cell.value("eta", 1.0);
    sc.cell.validate();

    if (j.contains("ocv") && j["ocv"].contains("anchors_csv")) {
      fs::path p = j["ocv"]["anchors_csv"].get<std::string>();
      if (p.is_relative()) p = fs::path(path).parent_path() / p;
      if (!fs::exists(p))
        throw ConfigError("scenario references missing file: " + p.string());
      sc.anchors_csv = p.string();
    }

    if (j.contains("profile")) {
      const json& p = j["profile"];
      sc.profile.soc_start = p.value("soc_start", sc.profile.soc_start);
      sc.profile.soc_top = p.value("soc_top", sc.profile.soc_top);
      sc.profile.soc_bottom = p.value("soc_bottom", sc.profile.soc_bottom);
      sc.profile.c_rate = p.value("c_rate", sc.profile.c_rate);
      sc.profile.n_cycles = p.value("n_cycles", sc.profile.n_cycles);
      sc.profile.ts_est_s = p.value("ts_est_s", sc.profile.ts_est_s);
      sc.profile.ts_fine_s = p.value("ts_fine_s", sc.profile.ts_fine_s);
      auto window = [](const json& w, InjectionWindow& out) {
        out.t_start_s = w.value("t_start_s", out.t_start_s);
        out.duration_s = w.value("duration_s", out.duration_s);
        out.freq_hz = w.value("freq_hz", out.freq_hz);
        out.amplitude_c = w.value("amplitude_c", out.amplitude_c);
      };
      if (p.contains("hf")) window(p["hf"], sc.profile.hf);
      if (p.contains("mf")) window(p["mf"], sc.profile.mf);
    }

    if (j.contains("bias")) {
      for (const json& s : j["bias"].at("segments")) {
        BiasSpec::Segment seg;
        seg.dv_v = s.at("dv_v").get<double>();
        if (s.contains("t_s")) seg.t_s = s["t_s"].get<double>();
        if (s.contains("at_cycle")) seg.at_cycle = s["at_cycle"].get<int>();
        if (!seg.t_s && !seg.at_cycle)
          throw ConfigError("bias segment needs t_s or at_cycle");
        sc.bias.segments.push_back(seg);
      }
    }

    sc.noise_std_v = j.value("noise_std_v", sc.noise_std_v);
    sc.seed = j.value("seed", sc.seed);

    if (j.contains("estimator")) {
      const json& e = j["estimator"];
      pipeline::PipelineConfig& c = sc.estimator;
      if (e.contains("zones")) {
        const json& z = e["zones"];
        if (z.contains("h")) {
          c.zones.h_lo = z["h"][0].get<double>();
          c.zones.h_hi = z["h"][1].get<double>();
        }
        if (z.contains("l")) {
          c.zones.l_lo = z["l"][0].get<double>();
          c.zones.l_hi = z["l"][1].get<double>();
        }
        c.zones.l_slope_max = z.value("l_slope_max", c.zones.l_slope_max);
      }
      c.r_meas = e.value("r_meas", c.r_meas);
      c.q_soc = e.value("q_soc", c.q_soc);
      c.q_qb = e.value("q_qb", c.q_qb);
      c.q_dv = e.value("q_dv", c.q_dv);
      c.q_rs = e.value("q_rs", c.q_rs);
      c.q_rt = e.value("q_rt", c.q_rt);
      c.q_tau = e.value("q_tau", c.q_tau);
      c.init_err_soc = e.value("init_err_soc", c.init_err_soc);
      c.init_err_qb_frac = e.value("init_err_qb_frac", c.init_err_qb_frac);
      c.init_err_dv_v = e.value("init_err_dv_v", c.init_err_dv_v);
      c.tc_hf_s = e.value("tc_hf_s", c.tc_hf_s);
      c.tc_mf_s = e.value("tc_mf_s", c.tc_mf_s);
      c.id_burn_in_tcs = e.value("id_burn_in_tcs", c.id_burn_in_tcs);
      c.l_zone_discharge_only =
          e.value("l_zone_discharge_only", c.l_zone_discharge_only);
      c.recursive_tau_sensitivity =
          e.value("recursive_tau_sensitivity", c.recursive_tau_sensitivity);
    }
    sc.estimator.zones.validate();

    if (j.contains("init")) {
      const json& i = j["init"];
      sc.init_soc = i.value("soc", sc.init_soc);
      sc.init_qb_frac = i.value("qb_frac", sc.init_qb_frac);
      sc.init_params_frac = i.value("params_frac", sc.init_params_frac);
      sc.init_dv_v = i.value("dv_v", sc.init_dv_v);
    }
    return sc;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace battkit::harness
