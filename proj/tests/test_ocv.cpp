#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include "battkit/errors.hpp"
#include "battkit/ocv.hpp"
#include "battkit/rng.hpp"

using namespace battkit;
using ocv::kCoeffCount;

namespace {

ocv::OcvCurve linear_curve(double a, double b) {
  std::array<double, kCoeffCount> c{};
  c[0] = b;
  c[1] = a;
  return ocv::OcvCurve(c, 0.0, 1.0);
}

// Least-squares line of curve values over an n-point uniform grid, written
// independently of OcvCurve::linearize.
ocv::LinearOcv grid_line_oracle(const ocv::OcvCurve& curve, double lo,
                                double hi, int n) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int j = 0; j < n; ++j) {
    const double x = lo + (hi - lo) * j / (n - 1);
    const double y = curve.eval(x);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {a, (sy - a * sx) / n};
}

}  // namespace

TEST_CASE("eval basics") {
  const auto curve = ocv::default_lfp();
  CHECK(curve.eval(0.0) == curve.coeffs()[0]);  // constant term at soc=0

  const auto lin = linear_curve(1.5, 3.0);
  for (double s : {0.0, 0.25, 0.7, 1.0})
    CHECK(lin.eval(s) == doctest::Approx(1.5 * s + 3.0).epsilon(1e-15));

  bool clamped = false;
  CHECK(lin.eval(1.5, clamped) == doctest::Approx(4.5));
  CHECK(clamped);
  CHECK(lin.eval(-0.1, clamped) == doctest::Approx(3.0));
  CHECK(clamped);
  lin.eval(0.5, clamped);
  CHECK_FALSE(clamped);
}

TEST_CASE("default curve satisfies the slope facts") {
  const auto curve = ocv::default_lfp();
  CHECK(curve.slope(0.0) > 15.0);
  CHECK(curve.slope(0.45) < 0.05);
  CHECK(curve.linearize(0.40, 0.50).a < 0.05);
  // plateau and top-of-charge shape
  CHECK(curve.eval(0.45) == doctest::Approx(3.3).epsilon(0.02));
  CHECK(curve.eval(1.0) == doctest::Approx(3.65).epsilon(1e-6));
}

TEST_CASE("slope equals central finite difference") {
  const auto curve = ocv::default_lfp();
  const double h = 1e-6;
  for (int k = 1; k < 100; ++k) {
    const double s = k / 100.0;
    const double fd = (curve.eval(s + h) - curve.eval(s - h)) / (2.0 * h);
    CHECK(curve.slope(s) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("linearize") {
  const auto lin = linear_curve(2.5, 3.1);
  const auto fit = lin.linearize(0.2, 0.9);
  CHECK(fit.a == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(fit.b == doctest::Approx(3.1).epsilon(1e-12));

  // near-quadratic curve: continuous least squares of s^2 on [0,1] gives
  // a = 1, b = -1/6; the tiny linear term keeps the slope positive
  std::array<double, kCoeffCount> c{};
  c[1] = 1e-6;
  c[2] = 1.0;
  const ocv::OcvCurve quad(c, 0.0, 1.0);
  const auto ql = quad.linearize(0.0, 1.0);
  CHECK(ql.a == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(ql.b == doctest::Approx(-1.0 / 6.0).epsilon(2e-2));
  // and matches the grid oracle at the implementation's resolution
  const auto oracle = grid_line_oracle(quad, 0.0, 1.0, 100);
  CHECK(ql.a == doctest::Approx(oracle.a).epsilon(1e-12));
  CHECK(ql.b == doctest::Approx(oracle.b).epsilon(1e-12));

  CHECK_THROWS_AS(quad.linearize(0.5, 0.5), InvalidInput);
  CHECK_THROWS_AS(quad.linearize(0.9, 0.2), InvalidInput);
  CHECK_THROWS_AS(quad.linearize(-0.2, 0.5), InvalidInput);
}

TEST_CASE("curve construction rejects bad shapes") {
  std::array<double, kCoeffCount> dec{};
  dec[0] = 3.0;
  dec[1] = -1.0;  // decreasing
  CHECK_THROWS_AS(ocv::OcvCurve(dec, 0.0, 1.0), InvalidInput);

  std::array<double, kCoeffCount> flat{};
  flat[0] = 3.0;  // zero slope
  CHECK_THROWS_AS(ocv::OcvCurve(flat, 0.0, 1.0), InvalidInput);

  std::array<double, kCoeffCount> ok{};
  ok[0] = 3.0;
  ok[1] = 0.5;
  CHECK_THROWS_AS(ocv::OcvCurve(ok, 0.5, 0.5), InvalidInput);
}

TEST_CASE("fit recovers members of the polynomial family") {
  const auto curve = ocv::default_lfp();
  const auto anchors = ocv::default_lfp_anchors();
  const auto rep = ocv::fit(anchors);
  CHECK(rep.residual_max_v < 1e-9);
  CHECK(rep.residual_max_v < 2e-3);  // shipped-table contract
  double cnorm = 0.0, err = 0.0;
  for (std::size_t i = 0; i < kCoeffCount; ++i) {
    cnorm = std::max(cnorm, std::abs(curve.coeffs()[i]));
    err = std::max(err, std::abs(rep.coeffs[i] - curve.coeffs()[i]));
  }
  CHECK(err <= 1e-9 * cnorm);
}

TEST_CASE("fit round trip over random monotone polynomials") {
  // slope = q(x)^2 + x*r(x)^2 + eps is positive on [0,1]; its integral is a
  // generic monotone polynomial of degree 12
  rng::Stream rnd = rng::Stream::derive(99, 0);
  for (int rep = 0; rep < 15; ++rep) {
    std::array<double, 6> q{}, r{};
    for (auto& v : q) v = 2.0 * rnd.uniform() - 1.0;
    for (auto& v : r) v = 2.0 * rnd.uniform() - 1.0;

    std::array<double, 12> slope{};  // degree 11
    slope[0] = 0.05;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        slope[i + j] += q[i] * q[j];
        slope[i + j + 1] += r[i] * r[j];
      }
    std::array<double, kCoeffCount> coeffs{};
    coeffs[0] = 2.0 + rnd.uniform();
    for (int k = 0; k < 12; ++k) coeffs[k + 1] = slope[k] / (k + 1);

    const ocv::OcvCurve truth(coeffs, 0.0, 1.0);
    std::vector<ocv::Anchor> anchors;
    for (int k = 0; k <= 30; ++k) {
      const double s = k / 30.0;
      anchors.push_back({s, truth.eval(s)});
    }
    const auto fit = ocv::fit(anchors);
    double cnorm = 1.0, err = 0.0;
    for (std::size_t i = 0; i < kCoeffCount; ++i) {
      cnorm = std::max(cnorm, std::abs(coeffs[i]));
      err = std::max(err, std::abs(fit.coeffs[i] - coeffs[i]));
    }
    // The anchors are doubles, and at degree 12 the value-to-coefficient map
    // conditions the recovery to about 2e-8 absolute; that information floor
    // sits on top of the 1e-9 relative target.
    CHECK(err <= 1e-9 * cnorm + 3e-8);
  }
}

TEST_CASE("fit preconditions and failure modes") {
  const auto curve = ocv::default_lfp();

  // too few anchors
  std::vector<ocv::Anchor> ten;
  for (int k = 0; k < 10; ++k) {
    const double s = k / 9.0;
    ten.push_back({s, curve.eval(s)});
  }
  CHECK_THROWS_AS(ocv::fit(ten), InvalidInput);

  // unsorted anchors
  auto anchors = ocv::default_lfp_anchors();
  std::swap(anchors[3], anchors[4]);
  CHECK_THROWS_AS(ocv::fit(anchors), InvalidInput);

  // clustered anchors: rank-deficient design
  std::vector<ocv::Anchor> clustered;
  clustered.push_back({0.0, curve.eval(0.0)});
  for (int k = 0; k < 13; ++k) {
    const double s = 0.5 + 1e-9 * k;
    clustered.push_back({s, curve.eval(s)});
  }
  clustered.push_back({1.0, curve.eval(1.0)});
  CHECK_THROWS_AS(ocv::fit(clustered), FitFailure);

  // non-monotone target data is rejected rather than silently fitted
  std::vector<ocv::Anchor> wiggly;
  for (int k = 0; k <= 20; ++k) {
    const double s = k / 20.0;
    wiggly.push_back({s, 3.0 + 0.3 * std::sin(12.0 * s)});
  }
  CHECK_THROWS_AS(ocv::fit(wiggly), FitFailure);
}

TEST_CASE("zone classification") {
  ocv::ZoneConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  CHECK(ocv::classify_zone(cfg, 0.05) == ocv::Zone::High);
  CHECK(ocv::classify_zone(cfg, 0.45) == ocv::Zone::Low);
  CHECK(ocv::classify_zone(cfg, 0.60) == ocv::Zone::Mid);

  // closed boundaries belong to the named zone
  CHECK(ocv::classify_zone(cfg, 0.0) == ocv::Zone::High);
  CHECK(ocv::classify_zone(cfg, 0.10) == ocv::Zone::High);
  CHECK(ocv::classify_zone(cfg, 0.40) == ocv::Zone::Low);
  CHECK(ocv::classify_zone(cfg, 0.50) == ocv::Zone::Low);

  // partition: every soc lands in exactly one zone
  for (int k = 0; k <= 1000; ++k) {
    const double s = k / 1000.0;
    const bool in_h = s >= cfg.h_lo && s <= cfg.h_hi;
    const bool in_l = s >= cfg.l_lo && s <= cfg.l_hi;
    const ocv::Zone z = ocv::classify_zone(cfg, s);
    if (in_h) CHECK(z == ocv::Zone::High);
    else if (in_l) CHECK(z == ocv::Zone::Low);
    else CHECK(z == ocv::Zone::Mid);
  }

  ocv::ZoneConfig overlap;
  overlap.h_hi = 0.45;  // overlaps the low zone
  CHECK_THROWS_AS(overlap.validate(), InvalidInput);
  ocv::ZoneConfig outside;
  outside.l_hi = 1.2;
  CHECK_THROWS_AS(outside.validate(), InvalidInput);
}

TEST_CASE("curve json round trip") {
  const auto curve = ocv::default_lfp();
  const auto back = ocv::OcvCurve::from_json(curve.to_json());
  for (std::size_t i = 0; i < kCoeffCount; ++i)
    CHECK(back.coeffs()[i] == curve.coeffs()[i]);
  CHECK(back.soc_min() == curve.soc_min());
  CHECK(back.soc_max() == curve.soc_max());

  CHECK_THROWS_AS(ocv::OcvCurve::from_json("{not json"), FormatError);
  CHECK_THROWS_AS(ocv::OcvCurve::from_json("{\"coeffs\": [1,2]}"), FormatError);
}

TEST_CASE("anchor csv round trip") {
  const auto anchors = ocv::default_lfp_anchors();
  const std::string path = "ocv_anchors_test.csv";
  ocv::write_anchors_csv(anchors, path);
  const auto back = ocv::read_anchors_csv(path);
  REQUIRE(back.size() == anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    CHECK(back[i].soc == anchors[i].soc);
    CHECK(back[i].v == anchors[i].v);
  }
  std::remove(path.c_str());
}
