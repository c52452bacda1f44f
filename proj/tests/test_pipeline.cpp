#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "battkit/ecm.hpp"
#include "battkit/errors.hpp"
#include "battkit/harness.hpp"
#include "battkit/ocv.hpp"
#include "battkit/pipeline.hpp"

using namespace battkit;

namespace {

const ecm::CellParams kCells[4] = {
    {0.069, 0.047, 33.0, 1.935, 1.0},  // cell 1 at 25 C
    {0.095, 0.050, 33.0, 1.896, 1.0},  // cell 2 at 25 C
    {0.127, 0.087, 30.0, 1.881, 1.0},  // cell 1 at 5 C
    {0.144, 0.090, 30.0, 1.811, 1.0},  // cell 2 at 5 C
};

harness::Scenario make_scenario(const ecm::CellParams& cell, double bias_v,
                                double noise_std, std::uint64_t seed,
                                int cycles = 4) {
  harness::Scenario sc;
  sc.name = "twin";
  sc.cell = cell;
  sc.noise_std_v = noise_std;
  sc.seed = seed;
  sc.profile.n_cycles = cycles;
  if (bias_v != 0.0) sc.bias.segments.push_back({bias_v, 0.0, std::nullopt});
  return sc;
}

ecm::CellParams scaled_guess(const ecm::CellParams& cell, double frac) {
  ecm::CellParams g = cell;
  g.rs_ohm *= frac;
  g.rt_ohm *= frac;
  g.tau_s *= frac;
  g.qb_ah *= frac;
  return g;
}

}  // namespace

TEST_CASE("parameter identification on all four noiseless twins") {
  const auto curve = ocv::default_lfp();
  for (const auto& cell : kCells) {
    const auto sc = make_scenario(cell, 0.0, 0.0, 5, 0);
    const auto sim = harness::simulate_scenario(sc, curve);
    pipeline::PipelineConfig cfg;
    const auto id = pipeline::run_param_id(sim.hf_segment, sim.mf_segment,
                                           scaled_guess(cell, 0.8), cfg);
    CHECK(id.params.rs_ohm == doctest::Approx(cell.rs_ohm).epsilon(0.02));
    CHECK(id.params.rt_ohm == doctest::Approx(cell.rt_ohm).epsilon(0.02));
    CHECK(id.params.tau_s == doctest::Approx(cell.tau_s).epsilon(0.02));
    // capacity and efficiency pass through from the guess
    CHECK(id.params.qb_ah == 0.8 * cell.qb_ah);
    CHECK(id.params.eta == cell.eta);
  }
}

TEST_CASE("parameter identification is immune to a constant sensor bias") {
  const auto curve = ocv::default_lfp();
  const auto& cell = kCells[0];
  pipeline::PipelineConfig cfg;
  const auto guess = scaled_guess(cell, 0.8);

  const auto plain =
      harness::simulate_scenario(make_scenario(cell, 0.0, 0.0, 5, 0), curve);
  const auto biased =
      harness::simulate_scenario(make_scenario(cell, 0.030, 0.0, 5, 0), curve);
  const auto id0 =
      pipeline::run_param_id(plain.hf_segment, plain.mf_segment, guess, cfg);
  const auto id1 =
      pipeline::run_param_id(biased.hf_segment, biased.mf_segment, guess, cfg);

  CHECK(std::abs(id1.params.rs_ohm / id0.params.rs_ohm - 1.0) < 1e-3);
  CHECK(std::abs(id1.params.rt_ohm / id0.params.rt_ohm - 1.0) < 1e-3);
  CHECK(std::abs(id1.params.tau_s / id0.params.tau_s - 1.0) < 1e-3);
}

TEST_CASE("parameter identification requires both injection segments") {
  const auto curve = ocv::default_lfp();
  const auto& cell = kCells[0];
  const auto sim =
      harness::simulate_scenario(make_scenario(cell, 0.0, 0.0, 5, 0), curve);
  pipeline::PipelineConfig cfg;
  TimeSeries empty;
  CHECK_THROWS_AS(pipeline::run_param_id(sim.hf_segment, empty,
                                         scaled_guess(cell, 0.8), cfg),
                  IdentifiabilityError);
  CHECK_THROWS_AS(pipeline::run_param_id(empty, sim.mf_segment,
                                         scaled_guess(cell, 0.8), cfg),
                  IdentifiabilityError);
}

TEST_CASE("step: mid-zone coulomb counting") {
  const auto curve = ocv::default_lfp();
  pipeline::PipelineConfig cfg;
  auto st = pipeline::init_state(0.60, 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  const double qb_before = st.qb_hat;
  const double dv_before = st.dv_hat;

  pipeline::step(st, {1.0, 0.1935, 3.3}, curve, cfg);
  CHECK(st.zone == ocv::Zone::Mid);
  // one second of 0.1C out of 1.935 Ah
  CHECK(st.soc_hat ==
        doctest::Approx(0.60 - 0.1935 / (3600.0 * 1.935)).epsilon(1e-12));
  CHECK(st.qb_hat == qb_before);
  CHECK(st.dv_hat == dv_before);
}

TEST_CASE("step: high zone runs the dual filter") {
  const auto curve = ocv::default_lfp();
  pipeline::PipelineConfig cfg;
  auto st = pipeline::init_state(0.05, 0.8 * 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  const double p_qb_before = st.dekf.qb_f.p[0][0];
  const double v = curve.eval(0.05) - kCells[0].rs_ohm * 0.1935;
  pipeline::step(st, {1.0, 0.1935, v}, curve, cfg);
  CHECK(st.zone == ocv::Zone::High);
  CHECK(st.dekf.qb_f.p[0][0] != p_qb_before);  // filter ran
}

TEST_CASE("step: low zone estimates the bias on discharge only") {
  const auto curve = ocv::default_lfp();
  pipeline::PipelineConfig cfg;

  auto st = pipeline::init_state(0.45, 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  // measurement 10 mV above the model: the bias filter must move
  const double v =
      curve.eval(0.45) - kCells[0].rs_ohm * 0.1935 + 0.010;
  pipeline::step(st, {1.0, 0.1935, v}, curve, cfg);
  CHECK(st.zone == ocv::Zone::Low);
  CHECK(st.dv_hat > 0.005);
  CHECK(st.qb_hat == 1.935);  // frozen outside the high zone

  // charge pass through the low zone is treated as mid zone
  auto ch = pipeline::init_state(0.45, 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  const double vch = curve.eval(0.45) + kCells[0].rs_ohm * 0.1935 + 0.010;
  pipeline::step(ch, {1.0, -0.1935, vch}, curve, cfg);
  CHECK(ch.zone == ocv::Zone::Low);
  CHECK(ch.dv_hat == 0.0);
}

TEST_CASE("step: zone decision uses the previous estimate") {
  const auto curve = ocv::default_lfp();
  pipeline::PipelineConfig cfg;
  // just above the high-zone boundary: this step must be mid-zone even
  // though the estimate ends up inside the high zone
  auto st = pipeline::init_state(0.1000001, 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  pipeline::step(st, {1.0, 0.1935, 3.0}, curve, cfg);
  CHECK(st.zone == ocv::Zone::Mid);
  CHECK(st.soc_hat < 0.10);
  pipeline::step(st, {2.0, 0.1935, 3.0}, curve, cfg);
  CHECK(st.zone == ocv::Zone::High);
}

TEST_CASE("step: bias estimate latches when the low zone is left") {
  const auto curve = ocv::default_lfp();
  pipeline::PipelineConfig cfg;
  auto st = pipeline::init_state(0.4000001, 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  const double v =
      curve.eval(0.40) - kCells[0].rs_ohm * 0.1935 + 0.010;
  pipeline::step(st, {1.0, 0.1935, v}, curve, cfg);  // low zone, estimates dv
  CHECK(st.zone == ocv::Zone::Low);
  const double dv_at_exit = st.dv_hat;
  CHECK(dv_at_exit != 0.0);
  CHECK(st.dekf.dv_comp_v == 0.0);  // not yet latched

  pipeline::step(st, {2.0, 0.1935, v}, curve, cfg);  // now mid zone
  CHECK(st.zone == ocv::Zone::Mid);
  CHECK(st.dekf.dv_comp_v == dv_at_exit);
}

TEST_CASE("full run: invariants over the trajectory") {
  const auto curve = ocv::default_lfp();
  const auto sc = make_scenario(kCells[0], 0.010, 2.5e-4, 21);
  const auto sim = harness::simulate_scenario(sc, curve);

  pipeline::PipelineConfig cfg;
  cfg.stage_transition_t_s = sim.stage_transition_t_s;
  const auto guess = scaled_guess(kCells[0], 0.8);
  const auto id =
      pipeline::run_param_id(sim.hf_segment, sim.mf_segment, guess, cfg);
  auto st = pipeline::init_state(0.10, guess.qb_ah, guess, cfg,
                                 pipeline::Stage::ParamId);
  const auto traj = pipeline::run(sim.est, st, curve, cfg, id.params);
  REQUIRE(traj.points.size() == sim.est.size());

  // frozen quantities: capacity moves only in the high zone, the bias
  // estimate only in low-zone dwells of the estimation stage
  int qb_updates = 0, dv_updates = 0;
  for (std::size_t k = 1; k < traj.points.size(); ++k) {
    const auto& p = traj.points[k];
    const auto& q = traj.points[k - 1];
    if (p.qb_hat != q.qb_hat) {
      CHECK(p.zone == ocv::Zone::High);
      ++qb_updates;
    }
    if (p.dv_hat != q.dv_hat) {
      CHECK(p.zone == ocv::Zone::Low);
      CHECK(p.stage == pipeline::Stage::StateEst);
      ++dv_updates;
    }
    if (p.stage == pipeline::Stage::ParamId) CHECK(p.dv_hat == 0.0);
  }
  CHECK(qb_updates > 0);
  CHECK(dv_updates > 0);

  // the RC voltage follows the exact propagation with the active parameters
  double vc = 0.0;
  for (std::size_t k = 0; k < traj.points.size(); ++k) {
    const bool identified =
        sim.est.samples[k].t_s >= cfg.stage_transition_t_s;
    vc = ecm::step_vc(vc, sim.est.samples[k].i_a,
                      identified ? id.params : guess, 1.0);
    CHECK(traj.points[k].vc_hat == vc);
  }

  // determinism and no look-ahead: a prefix replays identically
  auto st2 = pipeline::init_state(0.10, guess.qb_ah, guess, cfg,
                                  pipeline::Stage::ParamId);
  const auto traj2 = pipeline::run(sim.est, st2, curve, cfg, id.params);
  TimeSeries prefix;
  prefix.samples.assign(sim.est.samples.begin(),
                        sim.est.samples.begin() + 5000);
  auto st3 = pipeline::init_state(0.10, guess.qb_ah, guess, cfg,
                                  pipeline::Stage::ParamId);
  const auto traj3 = pipeline::run(prefix, st3, curve, cfg, id.params);
  for (std::size_t k = 0; k < traj.points.size(); ++k) {
    CHECK(traj2.points[k].soc_hat == traj.points[k].soc_hat);
    CHECK(traj2.points[k].qb_hat == traj.points[k].qb_hat);
    CHECK(traj2.points[k].dv_hat == traj.points[k].dv_hat);
  }
  for (std::size_t k = 0; k < traj3.points.size(); ++k) {
    CHECK(traj3.points[k].soc_hat == traj.points[k].soc_hat);
    CHECK(traj3.points[k].qb_hat == traj.points[k].qb_hat);
  }

  // cycle counter: four discharge starts in the estimation stage
  CHECK(traj.points.back().cycle_index == 4);
}

TEST_CASE("baseline runs the dual filter everywhere") {
  const auto curve = ocv::default_lfp();
  const auto sc = make_scenario(kCells[0], 0.010, 2.5e-4, 22, 1);
  const auto sim = harness::simulate_scenario(sc, curve);

  pipeline::PipelineConfig cfg;
  auto st = pipeline::init_state(0.10, 0.8 * 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  const auto traj =
      pipeline::run_baseline(sim.est, st, kCells[0], curve, cfg);
  REQUIRE(traj.points.size() == sim.est.size());

  int qb_updates_outside_high = 0;
  for (std::size_t k = 1; k < traj.points.size(); ++k) {
    CHECK(traj.points[k].dv_hat == 0.0);  // never estimated or compensated
    if (traj.points[k].qb_hat != traj.points[k - 1].qb_hat &&
        traj.points[k].zone != ocv::Zone::High)
      ++qb_updates_outside_high;
  }
  CHECK(qb_updates_outside_high > 0);
}

TEST_CASE("run without identified params starts in the estimation stage") {
  const auto curve = ocv::default_lfp();
  const auto sc = make_scenario(kCells[0], 0.0, 0.0, 23, 0);
  const auto sim = harness::simulate_scenario(sc, curve);
  pipeline::PipelineConfig cfg;
  auto st = pipeline::init_state(0.10, 1.935, kCells[0], cfg,
                                 pipeline::Stage::StateEst);
  const auto traj = pipeline::run(sim.est, st, curve, cfg);
  CHECK(traj.points.front().stage == pipeline::Stage::StateEst);
}
