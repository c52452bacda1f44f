#include "battkit/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace battkit::kalman {

void Trace::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << "t_s";
  for (std::size_t i = 0; i < n_states; ++i) f << ",est_" << state_names[i];
  for (std::size_t i = 0; i < n_states; ++i) f << ",var_" << state_names[i];
  f << ",innovation";
  for (std::size_t i = 0; i < n_states; ++i) f << ",gain_" << state_names[i];
  f << '\n';
  char buf[32];
  auto put = [&](double v, bool lead_comma) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    if (lead_comma) f << ',';
    f << buf;
  };
  for (const TracePoint& p : points) {
    put(p.t_s, false);
    for (std::size_t i = 0; i < n_states; ++i) put(p.x[i], true);
    for (std::size_t i = 0; i < n_states; ++i) put(p.var[i], true);
    put(p.innovation, true);
    for (std::size_t i = 0; i < n_states; ++i) put(p.gain[i], true);
    f << '\n';
  }
}

namespace {

void check_aligned(std::span<const double> vf, std::span<const double> if_,
                   double excitation_min) {
  if (vf.size() != if_.size())
    throw InvalidInput("filtered series must have equal length");
  if (vf.empty()) throw IdentifiabilityError("no samples in the filtered series");
  double acc = 0.0;
  for (double x : if_) acc += x * x;
  if (!(acc / static_cast<double>(if_.size()) >= excitation_min))
    throw IdentifiabilityError("insufficient excitation in the filtered current");
}

}  // namespace

RsResult estimate_rs(std::span<const double> vf, std::span<const double> if_,
                     double init_rs, double t0_s, double ts_s,
                     const ScalarIdConfig& cfg) {
  if (!(init_rs > 0.0)) throw InvalidInput("estimate_rs: init must be positive");
  check_aligned(vf, if_, cfg.excitation_min);

  EkfState<1> s;
  s.x[0] = init_rs;
  const double e0 = 0.25 * init_rs;
  s.p[0][0] = cfg.p0 > 0.0 ? cfg.p0 : 10.0 * e0 * e0;
  s.q[0][0] = cfg.q;
  s.r_meas = cfg.r_meas;

  RsResult out;
  out.trace.n_states = 1;
  out.trace.state_names = {"rs_ohm"};
  out.trace.points.reserve(vf.size());

  for (std::size_t k = 0; k < vf.size(); ++k) {
    UpdateInfo info;
    s = ekf_update<1>(
        s, [](Vec<1> x, double) { return x; },
        [](Vec<1>, double) { return Mat<1>{{{1.0}}}; },
        [](Vec<1> x, double u) { return -x[0] * u; },
        [](Vec<1>, double u) { return Vec<1>{-u}; }, if_[k], vf[k], &info);
    TracePoint tp;
    tp.t_s = t0_s + static_cast<double>(k) * ts_s;
    tp.x[0] = s.x[0];
    tp.var[0] = s.p[0][0];
    tp.innovation = info.innovation;
    tp.gain[0] = info.gain[0];
    out.trace.points.push_back(tp);
  }
  out.rs_ohm = s.x[0];
  return out;
}

RtTauResult estimate_rt_tau(std::span<const double> vf,
                            std::span<const double> if_, double rs_known,
                            const ThetaRc& init, double t0_s, double ts_s,
                            const RtTauConfig& cfg) {
  if (!(init.rt_ohm > 0.0) || !(init.tau_s > 0.0))
    throw InvalidInput("estimate_rt_tau: init must be positive");
  if (!(rs_known > 0.0))
    throw InvalidInput("estimate_rt_tau: rs_known must be positive");
  check_aligned(vf, if_, cfg.excitation_min);

  EkfState<2> s;
  s.x = {init.rt_ohm, init.tau_s};
  const double ert = 0.25 * init.rt_ohm;
  const double etau = 0.25 * init.tau_s;
  s.p[0][0] = cfg.p0_rt > 0.0 ? cfg.p0_rt : 10.0 * ert * ert;
  s.p[1][1] = cfg.p0_tau > 0.0 ? cfg.p0_tau : 10.0 * etau * etau;
  s.q[0][0] = cfg.q_rt;
  s.q[1][1] = cfg.q_tau;
  s.r_meas = cfg.r_meas;

  RtTauResult out;
  out.trace.n_states = 2;
  out.trace.state_names = {"rt_ohm", "tau_s"};
  out.trace.points.reserve(vf.size());

  double i2_prev = 0.0;
  double if_prev = 0.0;
  double sens_prev = 0.0;  // d i2_prev / d tau, recursive mode only

  for (std::size_t k = 0; k < vf.size(); ++k) {
    const double ifk = if_[k];

    // auxiliary bilinear recursion, re-evaluated at the tau being probed;
    // the previous state is held constant inside one measurement
    auto i2_at = [ts_s, ifk, if_prev, i2_prev](double tau) {
      return models::rc_aux(tau, ts_s, ifk, if_prev, i2_prev);
    };
    auto di2_dtau_frozen = [ts_s, ifk, if_prev, i2_prev](double tau) {
      return models::rc_aux_dtau(tau, ts_s, ifk, if_prev, i2_prev);
    };

    UpdateInfo info;
    s = ekf_update<2>(
        s, [](Vec<2> x, double) { return x; },
        [](Vec<2>, double) {
          return Mat<2>{{{1.0, 0.0}, {0.0, 1.0}}};
        },
        [&](Vec<2> x, double u) { return -rs_known * u - x[0] * i2_at(x[1]); },
        [&](Vec<2> x, double) {
          double dtau = di2_dtau_frozen(x[1]);
          if (cfg.recursive_sensitivity) {
            const double b = (ts_s - 2.0 * x[1]) / (ts_s + 2.0 * x[1]);
            dtau -= b * sens_prev;
          }
          return Vec<2>{-i2_at(x[1]), -x[0] * dtau};
        },
        ifk, vf[k], &info);

    if (s.x[1] < cfg.tau_floor_s) {
      s.x[1] = cfg.tau_floor_s;
      out.tau_floored = true;
    }

    // commit the recursion with the freshest tau estimate
    const double tau_used = s.x[1];
    const double b = (ts_s - 2.0 * tau_used) / (ts_s + 2.0 * tau_used);
    sens_prev = di2_dtau_frozen(tau_used) - b * sens_prev;
    i2_prev = i2_at(tau_used);
    if_prev = ifk;

    TracePoint tp;
    tp.t_s = t0_s + static_cast<double>(k) * ts_s;
    tp.x = {s.x[0], s.x[1]};
    tp.var = {s.p[0][0], s.p[1][1]};
    tp.innovation = info.innovation;
    tp.gain = info.gain;
    out.trace.points.push_back(tp);
  }
  out.theta = {s.x[0], s.x[1]};
  return out;
}

void dekf_step(DekfState& d, double i_a, double v_meas_v,
               const ecm::CellParams& params, const ocv::OcvCurve& curve,
               double ts_s, UpdateInfo* info) {
  d.vc_v = ecm::step_vc(d.vc_v, i_a, params, ts_s);
  const double vc = d.vc_v;
  const double eta = params.eta;
  const double dv = d.dv_comp_v;
  const double soc_prev = d.soc_f.x[0];
  const double qb_prior = std::max(d.qb_f.x[0], kQbFloorAh);
  const double delta = ecm::coulomb_delta(i_a, ts_s, eta, qb_prior);

  UpdateInfo soc_info;
  const EkfState<1> soc_next = ekf_update<1>(
      d.soc_f, [delta](Vec<1> x, double) { return Vec<1>{x[0] - delta}; },
      [](Vec<1>, double) { return Mat<1>{{{1.0}}}; },
      [&](Vec<1> x, double u) {
        return models::meas_soc(x[0], u, params, curve, vc, dv);
      },
      [&](Vec<1> x, double) {
        return Vec<1>{models::meas_soc_jac(x[0], curve)};
      },
      i_a, v_meas_v, &soc_info);

  // weight filter: same innovation, sensitivity through the coulomb term
  auto h_qb = [&](Vec<1> x, double u) {
    const double qb = std::max(x[0], kQbFloorAh);
    return models::meas_qb(qb, soc_prev, u, ts_s, params, curve, vc, dv);
  };
  auto hj_qb = [&](Vec<1> x, double u) {
    const double qb = std::max(x[0], kQbFloorAh);
    return Vec<1>{models::meas_qb_jac(qb, soc_prev, u, ts_s, params, curve)};
  };
  const double qb_p_prior = d.qb_f.p[0][0] + d.qb_f.q[0][0];
  const double qb_h = hj_qb(Vec<1>{qb_prior}, i_a)[0];
  const double qb_innov = v_meas_v - h_qb(Vec<1>{qb_prior}, i_a);
  const double qb_s = qb_h * qb_h * qb_p_prior + d.qb_f.r_meas;
  EkfState<1> qb_next = d.qb_f;
  if (qb_innov * qb_innov <= d.qb_gate_nis * qb_s) {
    qb_next = ekf_update<1>(
        d.qb_f, [](Vec<1> x, double) { return x; },
        [](Vec<1>, double) { return Mat<1>{{{1.0}}}; }, h_qb, hj_qb, i_a,
        v_meas_v, nullptr);
    const double step_max = d.qb_step_max_frac * qb_prior;
    qb_next.x[0] =
        std::clamp(qb_next.x[0], qb_prior - step_max, qb_prior + step_max);
  } else {
    qb_next.p[0][0] = qb_p_prior;  // coast
  }

  d.soc_f = soc_next;
  d.qb_f = qb_next;
  d.soc_clamped = false;
  if (d.soc_f.x[0] < 0.0) {
    d.soc_f.x[0] = 0.0;
    d.soc_clamped = true;
  } else if (d.soc_f.x[0] > 1.0) {
    d.soc_f.x[0] = 1.0;
    d.soc_clamped = true;
  }
  if (d.qb_f.x[0] < kQbFloorAh) d.qb_f.x[0] = kQbFloorAh;
  if (info) *info = soc_info;
}

void dekf_idle_predict(DekfState& d) {
  d.soc_f.p[0][0] += d.soc_f.q[0][0];
  d.qb_f.p[0][0] += d.qb_f.q[0][0];
}

double estimate_dv(EkfState<1>& e, double soc_known, double i_a,
                   double v_meas_v, const ecm::CellParams& params,
                   const ocv::OcvCurve& curve, double vc_v, UpdateInfo* info) {
  e = ekf_update<1>(
      e, [](Vec<1> x, double) { return x; },
      [](Vec<1>, double) { return Mat<1>{{{1.0}}}; },
      [&](Vec<1> x, double u) {
        return models::meas_dv(x[0], soc_known, u, params, curve, vc_v);
      },
      [](Vec<1>, double) { return Vec<1>{1.0}; }, i_a, v_meas_v, info);
  return e.x[0];
}

BiasLawResult verify_bias_law(double a_v_per_soc, double dv_v, int n_mc,
                              int steps, std::uint64_t seed,
                              const BiasLawConfig& cfg) {
  if (!(a_v_per_soc > 0.0))
    throw InvalidInput("verify_bias_law: slope must be positive");
  if (n_mc < 2 || steps < 1)
    throw InvalidInput("verify_bias_law: need n_mc >= 2 and steps >= 1");

  const double delta =
      ecm::coulomb_delta(cfg.i_a, cfg.ts_s, cfg.eta, cfg.qb_ah);
  const double w_std = std::sqrt(cfg.q_soc);
  const double v_std = std::sqrt(cfg.r_meas);

  std::vector<double> terminal(static_cast<std::size_t>(n_mc));
  for (int m = 0; m < n_mc; ++m) {
    rng::Stream stream = rng::Stream::derive(seed, static_cast<std::uint64_t>(m));
    double soc_true = cfg.soc0;
    EkfState<1> est;
    est.x[0] = cfg.soc0 + cfg.est_soc0_offset;
    est.p[0][0] = cfg.p0;
    est.q[0][0] = cfg.q_soc;
    est.r_meas = cfg.r_meas;

    for (int k = 0; k < steps; ++k) {
      soc_true = soc_true - delta + w_std * stream.gaussian();
      const double z = a_v_per_soc * soc_true + cfg.b_v -
                       cfg.rs_ohm * cfg.i_a + dv_v + v_std * stream.gaussian();
      est = ekf_update<1>(
          est, [delta](Vec<1> x, double) { return Vec<1>{x[0] - delta}; },
          [](Vec<1>, double) { return Mat<1>{{{1.0}}}; },
          [&](Vec<1> x, double u) {
            return a_v_per_soc * x[0] + cfg.b_v - cfg.rs_ohm * u;
          },
          [&](Vec<1>, double) { return Vec<1>{a_v_per_soc}; }, cfg.i_a, z);
    }
    terminal[static_cast<std::size_t>(m)] = est.x[0] - soc_true;
  }

  BiasLawResult out;
  out.predicted = dv_v / a_v_per_soc;
  out.mean_error =
      std::accumulate(terminal.begin(), terminal.end(), 0.0) / n_mc;
  double var = 0.0;
  for (double e : terminal) var += (e - out.mean_error) * (e - out.mean_error);
  var /= (n_mc - 1);
  out.sigma_mc = std::sqrt(var / n_mc);
  return out;
}

}  // namespace battkit::kalman
