#pragma once

#include <array>
#include <string>
#include <vector>

namespace battkit::ocv {

inline constexpr int kPolyOrder = 12;
inline constexpr std::size_t kCoeffCount = kPolyOrder + 1;

// Local linearization V_ocv = a*soc + b.
struct LinearOcv {
  double a = 0.0;  // V per unit SOC, positive
  double b = 0.0;  // V
};

// SOC zones by local OCV slope. High: steep enough for joint SOC/capacity
// estimation. Low: flat enough that the voltage-bias estimate is clean.
// Everything else is Mid.
enum class Zone { High, Low, Mid };

const char* zone_name(Zone z);

struct ZoneConfig {
  double h_lo = 0.0;
  double h_hi = 0.10;
  double l_lo = 0.40;
  double l_hi = 0.50;
  double l_slope_max = 0.05;  // V per unit SOC

  void validate() const;  // intervals within [0,1] and disjoint
};

// Closed intervals; boundaries belong to the named zone.
Zone classify_zone(const ZoneConfig& cfg, double soc);

// OCV-SOC map as a single polynomial, coefficient order A0..A12.
// Construction rejects curves that are not monotonically non-decreasing
// with positive slope on the valid range (checked on a 1e-3 grid).
class OcvCurve {
 public:
  OcvCurve(const std::array<double, kCoeffCount>& coeffs, double soc_min,
           double soc_max);

  double eval(double soc) const;
  double eval(double soc, bool& clamped) const;
  double slope(double soc) const;  // analytic derivative

  // Least-squares line over a uniform 100-point grid on [soc_lo, soc_hi].
  LinearOcv linearize(double soc_lo, double soc_hi) const;

  const std::array<double, kCoeffCount>& coeffs() const { return coeffs_; }
  double soc_min() const { return soc_min_; }
  double soc_max() const { return soc_max_; }

  std::string to_json() const;
  static OcvCurve from_json(const std::string& text);
  void save_json(const std::string& path) const;
  static OcvCurve load_json(const std::string& path);

 private:
  std::array<double, kCoeffCount> coeffs_{};
  double soc_min_ = 0.0;
  double soc_max_ = 1.0;
};

struct Anchor {
  double soc = 0.0;
  double v = 0.0;
};

struct FitReport {
  std::array<double, kCoeffCount> coeffs{};
  double soc_min = 0.0;
  double soc_max = 1.0;
  double residual_max_v = 0.0;
  double condition = 0.0;

  OcvCurve curve() const;
};

// Least-squares polynomial fit of the anchor table. Solved in a Chebyshev
// basis (QR) with iterative refinement so coefficients of curves already in
// the polynomial family are recovered to near machine precision.
// Requires >= degree+2 anchors with strictly increasing soc.
FitReport fit(const std::vector<Anchor>& anchors, int degree = kPolyOrder);

std::vector<Anchor> read_anchors_csv(const std::string& path);
void write_anchors_csv(const std::vector<Anchor>& anchors,
                       const std::string& path);

// Synthetic LFP-like default: slope > 15 V/SOC at soc=0, slope < 0.05 V/SOC
// across [0.40, 0.50], monotone rise to ~3.65 V at full charge. Stands in
// for a measured curve; tests and shipped scenarios use it.
OcvCurve default_lfp();
std::vector<Anchor> default_lfp_anchors();

}  // namespace battkit::ocv
