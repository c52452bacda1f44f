#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "battkit/ecm.hpp"
#include "battkit/errors.hpp"
#include "battkit/ocv.hpp"

namespace battkit::kalman {

template <std::size_t N>
using Vec = std::array<double, N>;
template <std::size_t N>
using Mat = std::array<std::array<double, N>, N>;

namespace detail {

template <std::size_t N>
Mat<N> identity() {
  Mat<N> m{};
  for (std::size_t i = 0; i < N; ++i) m[i][i] = 1.0;
  return m;
}

template <std::size_t N>
Mat<N> matmul(const Mat<N>& a, const Mat<N>& b) {
  Mat<N> c{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < N; ++k)
      for (std::size_t j = 0; j < N; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

template <std::size_t N>
Mat<N> transpose(const Mat<N>& a) {
  Mat<N> t{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) t[i][j] = a[j][i];
  return t;
}

template <std::size_t N>
void symmetrize(Mat<N>& p) {
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) {
      const double m = 0.5 * (p[i][j] + p[j][i]);
      p[i][j] = m;
      p[j][i] = m;
    }
}

template <std::size_t N>
double min_eigenvalue(const Mat<N>& p) {
  static_assert(N <= 2, "closed-form eigenvalues only");
  if constexpr (N == 1) {
    return p[0][0];
  } else {
    const double tr = p[0][0] + p[1][1];
    const double det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    return tr / 2.0 - disc;
  }
}

// Symmetrize, tolerate eigenvalues down to -1e-10 and floor them at zero;
// anything more negative is a genuine failure.
template <std::size_t N>
void make_psd(Mat<N>& p) {
  symmetrize(p);
  const double lmin = min_eigenvalue(p);
  if (lmin < -1e-10)
    throw NumericalFailure("covariance lost positive semi-definiteness");
  if (lmin < 0.0)
    for (std::size_t i = 0; i < N; ++i) p[i][i] -= lmin;
}

}  // namespace detail

// Mean, covariance and noise covariances of one filter instance.
template <std::size_t N>
struct EkfState {
  Vec<N> x{};
  Mat<N> p{};
  Mat<N> q{};          // process noise covariance
  double r_meas = 0.0; // measurement noise variance (scalar measurement)
};

struct UpdateInfo {
  double innovation = 0.0;
  double predicted_meas = 0.0;
  std::array<double, 2> gain{};
};

// One scalar-measurement EKF predict+update cycle.
//   f(x,u) -> Vec<N> state transition      fj(x,u) -> Mat<N> its Jacobian
//   h(x,u) -> double predicted measurement hj(x,u) -> Vec<N> its Jacobian
// Covariance update in Joseph form, then symmetrized and floored.
template <std::size_t N, class F, class FJ, class H, class HJ>
EkfState<N> ekf_update(EkfState<N> s, F&& f, FJ&& fj, H&& h, HJ&& hj, double u,
                       double z, UpdateInfo* info = nullptr) {
  using namespace detail;

  const Vec<N> xm = f(s.x, u);
  const Mat<N> fm = fj(s.x, u);
  Mat<N> pm = matmul(matmul(fm, s.p), transpose(fm));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) pm[i][j] += s.q[i][j];
  symmetrize(pm);

  const double zhat = h(xm, u);
  const Vec<N> hv = hj(xm, u);

  Vec<N> pht{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) pht[i] += pm[i][j] * hv[j];
  double innov_var = s.r_meas;
  for (std::size_t i = 0; i < N; ++i) innov_var += hv[i] * pht[i];
  if (!(innov_var > 0.0))
    throw NumericalFailure("non-positive innovation covariance");

  Vec<N> k{};
  for (std::size_t i = 0; i < N; ++i) k[i] = pht[i] / innov_var;

  const double innovation = z - zhat;
  for (std::size_t i = 0; i < N; ++i) s.x[i] = xm[i] + k[i] * innovation;

  Mat<N> ikh = identity<N>();
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) ikh[i][j] -= k[i] * hv[j];
  Mat<N> p = matmul(matmul(ikh, pm), transpose(ikh));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) p[i][j] += k[i] * s.r_meas * k[j];
  make_psd(p);
  s.p = p;

  if (info) {
    info->innovation = innovation;
    info->predicted_meas = zhat;
    info->gain = {};
    for (std::size_t i = 0; i < N; ++i) info->gain[i] = k[i];
  }
  return s;
}

// Measurement models shared by the estimators, exposed so their analytic
// Jacobians can be checked against finite differences of the same functions.
namespace models {

// Bilinear auxiliary current of the RC pair; the previous states are frozen
// inside one measurement evaluation.
inline double rc_aux(double tau_s, double ts_s, double if_k, double if_prev,
                     double i2_prev) {
  return (ts_s * (if_k + if_prev) - (ts_s - 2.0 * tau_s) * i2_prev) /
         (ts_s + 2.0 * tau_s);
}

inline double rc_aux_dtau(double tau_s, double ts_s, double if_k,
                          double if_prev, double i2_prev) {
  const double denom = ts_s + 2.0 * tau_s;
  return (4.0 * ts_s * i2_prev - 2.0 * ts_s * (if_k + if_prev)) /
         (denom * denom);
}

// Terminal-voltage prediction as a function of SOC.
inline double meas_soc(double soc, double i_a, const ecm::CellParams& p,
                       const ocv::OcvCurve& curve, double vc_v, double dv_v) {
  return curve.eval(soc) - p.rs_ohm * i_a - vc_v + dv_v;
}

inline double meas_soc_jac(double soc, const ocv::OcvCurve& curve) {
  return curve.slope(soc);
}

// Terminal-voltage prediction as a function of capacity, through the
// coulomb-counting SOC prediction from the previous estimate.
inline double meas_qb(double qb_ah, double soc_prev, double i_a, double ts_s,
                      const ecm::CellParams& p, const ocv::OcvCurve& curve,
                      double vc_v, double dv_v) {
  const double soc_pred =
      soc_prev - ecm::coulomb_delta(i_a, ts_s, p.eta, qb_ah);
  return meas_soc(soc_pred, i_a, p, curve, vc_v, dv_v);
}

inline double meas_qb_jac(double qb_ah, double soc_prev, double i_a,
                          double ts_s, const ecm::CellParams& p,
                          const ocv::OcvCurve& curve) {
  const double del = ecm::coulomb_delta(i_a, ts_s, p.eta, qb_ah);
  return curve.slope(soc_prev - del) * del / qb_ah;
}

// Terminal-voltage prediction as a function of the sensor bias.
inline double meas_dv(double dv_v, double soc_known, double i_a,
                      const ecm::CellParams& p, const ocv::OcvCurve& curve,
                      double vc_v) {
  return curve.eval(soc_known) - p.rs_ohm * i_a - vc_v + dv_v;
}

}  // namespace models

// Per-step record of an estimator run, exportable as CSV.
struct TracePoint {
  double t_s = 0.0;
  std::array<double, 2> x{};
  std::array<double, 2> var{};
  double innovation = 0.0;
  std::array<double, 2> gain{};
};

struct Trace {
  std::size_t n_states = 1;
  std::vector<std::string> state_names;
  std::vector<TracePoint> points;

  void write_csv(const std::string& path) const;
};

// ---- series resistance estimator (high-frequency stage) ----

struct ScalarIdConfig {
  double q = 1e-10;       // random-walk drive
  double r_meas = 1e-6;   // filtered-voltage noise variance
  double p0 = 0.0;        // initial variance
  double excitation_min = 1e-8;  // required mean(if^2) [A^2]
};

struct RsResult {
  double rs_ohm = 0.0;
  Trace trace;
};

// Scalar EKF on Vf = -Rs*If over aligned filtered series.
RsResult estimate_rs(std::span<const double> vf, std::span<const double> if_,
                     double init_rs, double t0_s, double ts_s,
                     const ScalarIdConfig& cfg);

// ---- RC pair estimator (medium-frequency stage) ----

struct ThetaRc {
  double rt_ohm = 0.0;
  double tau_s = 0.0;
};

struct RtTauConfig {
  double q_rt = 1e-10;
  double q_tau = 1e-4;
  double r_meas = 1e-6;
  double p0_rt = 0.0;
  double p0_tau = 0.0;
  // One-step Jacobian treats the previous auxiliary state as constant;
  // the recursive option propagates the full sensitivity instead.
  bool recursive_sensitivity = false;
  double tau_floor_s = 1e-3;
  double excitation_min = 1e-8;
};

struct RtTauResult {
  ThetaRc theta;
  bool tau_floored = false;
  Trace trace;
};

// 2-state EKF on Vf = -Rs*If - Rt*I2 with the bilinear auxiliary recursion
//   I2(k) = Ts/(Ts+2tau) [If(k)+If(k-1)] - (Ts-2tau)/(Ts+2tau) I2(k-1)
// re-evaluated with the current tau estimate each step.
RtTauResult estimate_rt_tau(std::span<const double> vf,
                            std::span<const double> if_, double rs_known,
                            const ThetaRc& init, double t0_s, double ts_s,
                            const RtTauConfig& cfg);

// ---- dual filter: SOC (state) + capacity (weight) ----

struct DekfState {
  EkfState<1> soc_f;        // state filter
  EkfState<1> qb_f;         // weight filter, capacity in Ah
  double vc_v = 0.0;        // tracked RC voltage
  double dv_comp_v = 0.0;   // compensated sensor bias used in the model
  bool soc_clamped = false; // last step hit the [0,1] clamp
  // Innovation-consistency gate for the weight filter: capacity is slow, so
  // an innovation with NIS above this belongs to the state filter and the
  // weight filter coasts for that sample. The state filter is never gated.
  double qb_gate_nis = 9.0;
  // One sample carries at most ocv_slope*|coulomb_delta| volts of capacity
  // information, so a linearized update is only trusted for a small relative
  // move; anything larger is truncated.
  double qb_step_max_frac = 0.005;
};

inline constexpr double kQbFloorAh = 0.1;

// One joint step: both filters share the innovation against
//   V = OCV(soc) - Rs*i - Vc + dV_comp.
// vc_v advances by the exact RC propagation with the identified (Rt, tau).
void dekf_step(DekfState& d, double i_a, double v_meas_v,
               const ecm::CellParams& params, const ocv::OcvCurve& curve,
               double ts_s, UpdateInfo* info = nullptr);

// Covariance-only predict for samples where the dual filter is idle.
void dekf_idle_predict(DekfState& d);

// ---- sensor bias estimator (low-slope zone) ----

// Scalar EKF on a random-walk dV with measurement
//   V = OCV(soc_known) - Rs*i - Vc + dV.
// soc_known comes from coulomb counting. Returns the updated estimate.
double estimate_dv(EkfState<1>& e, double soc_known, double i_a,
                   double v_meas_v, const ecm::CellParams& params,
                   const ocv::OcvCurve& curve, double vc_v,
                   UpdateInfo* info = nullptr);

// ---- steady-state bias law ----

struct BiasLawConfig {
  double qb_ah = 1.935;
  double eta = 1.0;
  double ts_s = 1.0;
  double i_a = 0.1935;
  double soc0 = 0.5;
  double est_soc0_offset = 0.01;  // initial estimator error, exercises decay
  double b_v = 3.3;
  double rs_ohm = 0.069;
  double q_soc = 1e-10;
  double r_meas = 1e-6;
  double p0 = 1e-4;
};

struct BiasLawResult {
  double mean_error = 0.0;  // Monte-Carlo mean of (estimate - truth), terminal
  double predicted = 0.0;   // closed form dv/a
  double sigma_mc = 0.0;    // std error of the Monte-Carlo mean
};

// Runs n_mc independent filters on the linear-OCV system with a constant
// measurement bias dv and compares the terminal mean estimation error with
// the steady-state prediction dv/a.
BiasLawResult verify_bias_law(double a_v_per_soc, double dv_v, int n_mc,
                              int steps, std::uint64_t seed,
                              const BiasLawConfig& cfg = {});

}  // namespace battkit::kalman
