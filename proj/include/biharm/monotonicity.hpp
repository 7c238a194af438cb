#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "biharm/grid.hpp"

namespace biharm {

/// Excision of a singular core B_radius(center) from every energy integral.
/// With `energy` set, the analytic ∫_{B_radius}|Δu|² replaces the excised part;
/// otherwise the core is dropped and its nodal quadrature is reported separately.
struct CoreExcision {
  double radius = 0.0;
  std::optional<double> energy;
};

struct InteriorQuantities {
  double scaled_r = 0.0;  // r^{4-n} ∫_{B_r} |Δu|²
  double scaled_R = 0.0;
  double delta_E = 0.0;   // scaled_R - scaled_r
  double A1 = 0.0;
  double A2 = 0.0;
  double core_numeric = 0.0;  // quadrature over the excised core, 0 without excision
};

/// Terms of the interior monotonicity identity about x for radii r < R.
/// Requires r >= 4h and B_R(x) at least 2h away from the boundary (ResolutionError).
InteriorQuantities interior_quantities(const GridField& u, const Point& x, double r, double R,
                                       const CoreExcision& core = {});

/// Per-radius boundary terms for v = u - φ about a point x0 of the flat face.
struct BoundaryProfile {
  Point center{};
  std::vector<double> radii;
  std::vector<double> hess;    // ρ^{4-n} ∫_{Ω∩B_ρ} |∇²v|²
  std::vector<double> B, C;    // boundary terms of the definition
  std::vector<double> f, g;    // the same surface terms in the second notation
  std::vector<double> sigma1, sigma2;
  std::vector<double> annulus; // A(radii[i], radii[j]) stored at i * m + j for i < j
  double A(std::size_t i, std::size_t j) const { return annulus[i * radii.size() + j]; }
};

/// All boundary quantities on an ascending radius list.
/// Throws BoundaryDataError unless |v| and |∂_n v| on the flat face stay below 10 h² max(1, sup|φ|).
BoundaryProfile boundary_profile(const GridField& u, const GridField& phi, const Point& x0,
                                 const std::vector<double>& radii);

struct BoundaryQuantities {
  double A = 0.0;
  double B_r = 0.0, B_R = 0.0, C_r = 0.0, C_R = 0.0;
  double hess_r = 0.0, hess_R = 0.0;
  double f_r = 0.0, f_R = 0.0, g_r = 0.0, g_R = 0.0;
};
BoundaryQuantities boundary_quantities(const GridField& u, const GridField& phi, const Point& x0, double r,
                                       double R);

struct Sigma {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};
Sigma sigma_decomposition(const GridField& u, const GridField& phi, const Point& x0, double r);

struct FitResult {
  bool found = false;
  double C = 0.0;
};

/// Smallest C in [0, 1000] for which the boundary monotonicity inequality holds
/// for every radius pair of the profile (bisection). Needs at least 4 radii.
FitResult fit_monotonicity_constant(const BoundaryProfile& profile);

/// Margin RHS - LHS of the inequality divided by e^{CR}, for one radius pair.
double monotonicity_margin(const BoundaryProfile& profile, std::size_t i, std::size_t j, double C);

struct MonotonicityRow {
  double r = 0, R = 0;
  double scaledE_r = 0, scaledE_R = 0, A1 = 0, A2 = 0;
  double Abdry = 0, B_r = 0, B_R = 0, C_r = 0, C_R = 0, f_r = 0, g_r = 0, sigma1 = 0, sigma2 = 0;
  double fittedC = 0;
};

struct MonotonicityReport {
  Point center{};
  std::vector<double> radii;
  std::vector<double> scaled_energy;  // r^{4-n} ∫_{B_r ∩ Ω} |Δu|²
  std::vector<MonotonicityRow> rows;  // one per pair r < R; unavailable terms are NaN
  std::optional<FitResult> fit;
};

/// Radii must increase, start at >= 4h and end at <= (distance to the curved boundary) - 2h.
/// Interior terms are filled when B_R stays 2h away from every face; boundary terms when φ is given.
MonotonicityReport monotonicity_report(const GridField& u, const GridField* phi, const Point& center,
                                       const std::vector<double>& radii, const CoreExcision& core = {});

void write_csv(std::ostream& out, const MonotonicityReport& report);
void write_csv(const std::string& path, const MonotonicityReport& report);

}  // namespace biharm
