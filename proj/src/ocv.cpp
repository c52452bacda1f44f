#include "battkit/ocv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "battkit/errors.hpp"
#include "battkit/timeseries.hpp"

namespace battkit::ocv {

namespace {

double horner(const double* c, std::size_t n, double x) {
  double acc = 0.0;
  for (std::size_t k = n; k-- > 0;) acc = acc * x + c[k];
  return acc;
}

// Tall-skinny least squares via Householder QR; the factorization is kept so
// refinement passes can reuse it for new right-hand sides.
class QrLs {
 public:
  QrLs(std::vector<double> a, int m, int n) : m_(m), n_(n), a_(std::move(a)) {
    tau_.assign(n_, 0.0);
    for (int j = 0; j < n_; ++j) {
      double norm = 0.0;
      for (int i = j; i < m_; ++i) norm += at(i, j) * at(i, j);
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        tau_[j] = 0.0;
        continue;
      }
      const double x1 = at(j, j);
      const double s = (x1 >= 0.0) ? 1.0 : -1.0;
      const double v1 = x1 + s * norm;
      tau_[j] = s * v1 / norm;
      for (int i = j + 1; i < m_; ++i) at(i, j) /= v1;
      at(j, j) = -s * norm;
      for (int c = j + 1; c < n_; ++c) apply_house(j, &at(0, c));
    }
  }

  double condition() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (int j = 0; j < n_; ++j) {
      const double d = std::abs(at(j, j));
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
  }

  // rhs has m entries; returns the n least-squares coefficients
  std::vector<double> solve(std::vector<double> rhs) const {
    for (int j = 0; j < n_; ++j) apply_house(j, rhs.data());
    std::vector<double> x(n_);
    for (int i = n_ - 1; i >= 0; --i) {
      double acc = rhs[i];
      for (int j = i + 1; j < n_; ++j) acc -= at(i, j) * x[j];
      x[i] = acc / at(i, i);
    }
    return x;
  }

 private:
  double& at(int i, int j) { return a_[static_cast<std::size_t>(j) * m_ + i]; }
  const double& at(int i, int j) const {
    return a_[static_cast<std::size_t>(j) * m_ + i];
  }

  void apply_house(int j, double* col) const {
    if (tau_[j] == 0.0) return;
    double w = col[j];
    for (int i = j + 1; i < m_; ++i) w += at(i, j) * col[i];
    w *= tau_[j];
    col[j] -= w;
    for (int i = j + 1; i < m_; ++i) col[i] -= w * at(i, j);
  }

  int m_, n_;
  std::vector<double> a_;    // column-major; R above, Householder vectors below
  std::vector<double> tau_;
};

// Monomial coefficients of the Chebyshev polynomials up to the given degree.
std::vector<std::vector<double>> cheb_monomials(int degree) {
  std::vector<std::vector<double>> t(degree + 1);
  t[0] = {1.0};
  if (degree >= 1) t[1] = {0.0, 1.0};
  for (int k = 2; k <= degree; ++k) {
    t[k].assign(k + 1, 0.0);
    for (int i = 0; i < k; ++i) t[k][i + 1] += 2.0 * t[k - 1][i];
    for (std::size_t i = 0; i < t[k - 2].size(); ++i) t[k][i] -= t[k - 2][i];
  }
  return t;
}

// Rewrites a polynomial in u as one in s where u = alpha*s + beta.
std::vector<double> compose_affine(const std::vector<double>& cu, double alpha,
                                   double beta) {
  std::vector<double> res{cu.back()};
  for (std::size_t k = cu.size() - 1; k-- > 0;) {
    std::vector<double> next(res.size() + 1, 0.0);
    for (std::size_t i = 0; i < res.size(); ++i) {
      next[i] += beta * res[i];
      next[i + 1] += alpha * res[i];
    }
    next[0] += cu[k];
    res = std::move(next);
  }
  return res;
}

void check_shape(const std::array<double, kCoeffCount>& coeffs, double lo,
                 double hi, const char* who) {
  // 1e-3 grid: monotone non-decreasing values, strictly positive slope
  const int n = std::max(2, static_cast<int>(std::ceil((hi - lo) / 1e-3)) + 1);
  double prev = 0.0;
  for (int k = 0; k < n; ++k) {
    const double s = lo + (hi - lo) * k / (n - 1);
    const double v = horner(coeffs.data(), kCoeffCount, s);
    double dv = 0.0;
    for (std::size_t j = kCoeffCount - 1; j >= 1; --j)
      dv = dv * s + static_cast<double>(j) * coeffs[j];
    if (!std::isfinite(v) || !std::isfinite(dv))
      throw InvalidInput(std::string(who) + ": curve is not finite");
    if (!(dv > 0.0))
      throw InvalidInput(std::string(who) +
                         ": curve slope is not positive on the valid range");
    if (k > 0 && v < prev - 1e-12)
      throw InvalidInput(std::string(who) +
                         ": curve is not monotonically non-decreasing");
    prev = v;
  }
}

}  // namespace

const char* zone_name(Zone z) {
  switch (z) {
    case Zone::High: return "H";
    case Zone::Low: return "L";
    case Zone::Mid: return "M";
  }
  return "?";
}

void ZoneConfig::validate() const {
  auto interval_ok = [](double lo, double hi) {
    return std::isfinite(lo) && std::isfinite(hi) && 0.0 <= lo && lo <= hi &&
           hi <= 1.0;
  };
  if (!interval_ok(h_lo, h_hi) || !interval_ok(l_lo, l_hi))
    throw InvalidInput("zone intervals must lie within [0,1]");
  const bool disjoint = h_hi < l_lo || l_hi < h_lo;
  if (!disjoint) throw InvalidInput("high and low zones must be disjoint");
  if (!(l_slope_max > 0.0)) throw InvalidInput("l_slope_max must be positive");
}

Zone classify_zone(const ZoneConfig& cfg, double soc) {
  if (soc >= cfg.h_lo && soc <= cfg.h_hi) return Zone::High;
  if (soc >= cfg.l_lo && soc <= cfg.l_hi) return Zone::Low;
  return Zone::Mid;
}

OcvCurve::OcvCurve(const std::array<double, kCoeffCount>& coeffs,
                   double soc_min, double soc_max)
    : coeffs_(coeffs), soc_min_(soc_min), soc_max_(soc_max) {
  if (!(soc_min_ < soc_max_))
    throw InvalidInput("OcvCurve: empty valid range");
  for (double c : coeffs_)
    if (!std::isfinite(c)) throw InvalidInput("OcvCurve: non-finite coefficient");
  check_shape(coeffs_, soc_min_, soc_max_, "OcvCurve");
}

double OcvCurve::eval(double soc) const {
  bool ignored;
  return eval(soc, ignored);
}

double OcvCurve::eval(double soc, bool& clamped) const {
  clamped = false;
  if (soc < soc_min_) {
    soc = soc_min_;
    clamped = true;
  } else if (soc > soc_max_) {
    soc = soc_max_;
    clamped = true;
  }
  return horner(coeffs_.data(), kCoeffCount, soc);
}

double OcvCurve::slope(double soc) const {
  soc = std::clamp(soc, soc_min_, soc_max_);
  double acc = 0.0;
  for (std::size_t j = kCoeffCount - 1; j >= 1; --j)
    acc = acc * soc + static_cast<double>(j) * coeffs_[j];
  return acc;
}

LinearOcv OcvCurve::linearize(double soc_lo, double soc_hi) const {
  if (!(soc_lo < soc_hi))
    throw InvalidInput("linearize: interval is degenerate");
  if (soc_lo < soc_min_ || soc_hi > soc_max_)
    throw InvalidInput("linearize: interval outside the valid range");
  constexpr int n = 100;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int j = 0; j < n; ++j) {
    const double x = soc_lo + (soc_hi - soc_lo) * j / (n - 1);
    const double y = eval(x);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  const double a = (n * sxy - sx * sy) / denom;
  const double b = (sy - a * sx) / n;
  return {a, b};
}

std::string OcvCurve::to_json() const {
  nlohmann::json j;
  j["coeffs"] = coeffs_;
  j["valid_range"] = {soc_min_, soc_max_};
  return j.dump(2);
}

OcvCurve OcvCurve::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("curve JSON: ") + e.what());
  }
  if (!j.contains("coeffs") || !j.contains("valid_range"))
    throw FormatError("curve JSON needs 'coeffs' and 'valid_range'");
  const auto cj = j["coeffs"];
  if (!cj.is_array() || cj.size() != kCoeffCount)
    throw FormatError("curve JSON: 'coeffs' must hold 13 values");
  std::array<double, kCoeffCount> coeffs{};
  for (std::size_t i = 0; i < kCoeffCount; ++i) coeffs[i] = cj[i].get<double>();
  const auto rj = j["valid_range"];
  if (!rj.is_array() || rj.size() != 2)
    throw FormatError("curve JSON: 'valid_range' must hold [min, max]");
  return OcvCurve(coeffs, rj[0].get<double>(), rj[1].get<double>());
}

void OcvCurve::save_json(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << to_json() << '\n';
}

OcvCurve OcvCurve::load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

OcvCurve FitReport::curve() const { return OcvCurve(coeffs, soc_min, soc_max); }

FitReport fit(const std::vector<Anchor>& anchors, int degree) {
  if (degree < 1 || degree > kPolyOrder)
    throw InvalidInput("fit: degree must be in [1, 12]");
  const int m = static_cast<int>(anchors.size());
  const int n = degree + 1;
  if (m < degree + 2)
    throw InvalidInput("fit: need at least degree+2 anchor points");
  for (int i = 0; i < m; ++i) {
    if (!std::isfinite(anchors[i].soc) || !std::isfinite(anchors[i].v))
      throw InvalidInput("fit: non-finite anchor");
    if (i > 0 && !(anchors[i].soc > anchors[i - 1].soc))
      throw InvalidInput("fit: anchors must be strictly increasing in soc");
  }
  const double lo = anchors.front().soc;
  const double hi = anchors.back().soc;

  // Chebyshev basis on the mapped interval keeps the normal problem
  // well-conditioned even at degree 12.
  const double alpha = 2.0 / (hi - lo);
  const double beta = -(hi + lo) / (hi - lo);
  std::vector<double> design(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double u = alpha * anchors[i].soc + beta;
    double tkm1 = 1.0, tk = u;
    design[i] = 1.0;
    if (n > 1) design[static_cast<std::size_t>(m) + i] = u;
    for (int k = 2; k < n; ++k) {
      const double tk1 = 2.0 * u * tk - tkm1;
      design[static_cast<std::size_t>(k) * m + i] = tk1;
      tkm1 = tk;
      tk = tk1;
    }
  }
  const QrLs qr(std::move(design), m, n);
  const double cond = qr.condition();
  if (!(cond < 1e12)) {
    std::ostringstream msg;
    msg << "fit: design matrix is ill-conditioned (estimate " << cond
        << ", degree " << degree << ", " << m << " anchors)";
    throw FitFailure(msg.str());
  }

  const auto cheb = cheb_monomials(degree);
  auto to_monomial = [&](const std::vector<double>& cu) {
    std::vector<double> mono_u(n, 0.0);
    for (int k = 0; k < n; ++k)
      for (std::size_t i = 0; i < cheb[k].size(); ++i)
        mono_u[i] += cu[k] * cheb[k][i];
    return compose_affine(mono_u, alpha, beta);
  };

  std::vector<double> rhs(m);
  for (int i = 0; i < m; ++i) rhs[i] = anchors[i].v;
  std::vector<double> coeff_s = to_monomial(qr.solve(rhs));

  // Iterative refinement in the monomial representation recovers the digits
  // lost in the basis conversion.
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> resid(m);
    for (int i = 0; i < m; ++i)
      resid[i] =
          anchors[i].v - horner(coeff_s.data(), coeff_s.size(), anchors[i].soc);
    const std::vector<double> delta = to_monomial(qr.solve(resid));
    for (int i = 0; i < n; ++i) coeff_s[i] += delta[i];
  }

  FitReport rep;
  rep.soc_min = lo;
  rep.soc_max = hi;
  rep.condition = cond;
  for (std::size_t i = 0; i < coeff_s.size() && i < kCoeffCount; ++i)
    rep.coeffs[i] = coeff_s[i];
  for (int i = 0; i < m; ++i)
    rep.residual_max_v =
        std::max(rep.residual_max_v,
                 std::abs(anchors[i].v -
                          horner(rep.coeffs.data(), kCoeffCount, anchors[i].soc)));

  try {
    check_shape(rep.coeffs, lo, hi, "fit");
  } catch (const InvalidInput& e) {
    throw FitFailure(std::string("fit rejected: ") + e.what());
  }
  return rep;
}

std::vector<Anchor> read_anchors_csv(const std::string& path) {
  const CsvTable t = read_csv_table(path);
  if (!t.has("soc") || !t.has("v_ocv"))
    throw FormatError(path + ": anchors need columns soc,v_ocv");
  const auto& sc = t.col("soc");
  const auto& vc = t.col("v_ocv");
  std::vector<Anchor> out(sc.size());
  for (std::size_t i = 0; i < sc.size(); ++i) out[i] = {sc[i], vc[i]};
  return out;
}

void write_anchors_csv(const std::vector<Anchor>& anchors,
                       const std::string& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << "soc,v_ocv\n";
  char buf[80];
  for (const Anchor& a : anchors) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", a.soc, a.v);
    f << buf;
  }
}

// Built from explicitly non-negative slope terms so monotonicity holds by
// construction:  V(s) = V0 + (A/12)(1-(1-s)^12) + c*s + (B/12) s^12.
// A = 16 pins the steep low-SOC knee (slope 16 at s=0), c = 0.015 the
// plateau, B = 3.62 the top-of-charge rise to 3.65 V.
OcvCurve default_lfp() {
  constexpr double v0 = 2.0;
  constexpr double knee = 16.0;
  constexpr double plateau = 0.015;
  constexpr double top = 3.62;

  // binomial expansion of (A/12)(1 - (1-s)^12)
  constexpr double binom[13] = {1,   12,  66,  220, 495, 792, 924,
                                792, 495, 220, 66,  12,  1};
  std::array<double, kCoeffCount> c{};
  c[0] = v0;
  for (int k = 1; k <= 12; ++k) {
    const double sign = (k % 2 == 0) ? -1.0 : 1.0;
    c[k] = sign * (knee / 12.0) * binom[k];
  }
  c[1] += plateau;
  c[12] += top / 12.0;
  return OcvCurve(c, 0.0, 1.0);
}

std::vector<Anchor> default_lfp_anchors() {
  const OcvCurve curve = default_lfp();
  std::vector<Anchor> out;
  out.reserve(41);
  for (int k = 0; k <= 40; ++k) {
    const double s = k / 40.0;
    out.push_back({s, curve.eval(s)});
  }
  return out;
}

}  // namespace battkit::ocv
