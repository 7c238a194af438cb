#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "biharm/grid.hpp"

namespace biharm {

/// Finite scan of balls B_r(c) used by every norm: centres are the nodes whose
/// lattice indices are multiples of `stride`, radii are `radii` (dyadic 2^k h when empty).
struct MorreyParams {
  double p = 2.0;
  double lambda = 2.0;
  int stride = 1;
  std::vector<double> radii;
  /// false: only balls inside the domain; true: balls cut by flat faces are allowed
  /// (B_r(c) ∩ domain), the curved boundary must still stay outside.
  bool clip = false;

  /// Throws ParameterError for p < 1, λ outside (0, n], stride < 1 or bad radii.
  void validate(int n) const;
};

/// {h, 2h, 4h, ...} up to rmax.
std::vector<double> dyadic_radii(double h, double rmax);

struct ScanEntry {
  Point center{};
  double radius = 0.0;
  double value = 0.0;
};

/// value = max over entries; balls meeting invalid nodes of the input are skipped and counted.
struct NormScan {
  double value = 0.0;
  ScanEntry best;
  std::vector<ScanEntry> entries;
  std::size_t skipped = 0;
};

/// Morrey norm (sup_B r^{λ-n} ∫_B |f|^p)^{1/p}. Several components are reduced to
/// their Euclidean norm per node. Empty scans throw ParameterError.
NormScan morrey_scan(const GridField& f, const MorreyParams& params);
double morrey_norm(const GridField& f, const MorreyParams& params);

/// Weak Morrey quantity sup_B sup_t t (r^{λ-n} |{x ∈ B : |f| > t}|)^{1/p} on grid level sets.
NormScan weak_morrey_scan(const GridField& f, const MorreyParams& params);
double weak_morrey_norm(const GridField& f, const MorreyParams& params);

/// BMO seminorm sup_B r^{-n} ∫_B |f - f_B|, f_B the ball average (p and λ are ignored).
NormScan bmo_scan(const GridField& f, const MorreyParams& params);
double bmo_seminorm(const GridField& f, const MorreyParams& params);

/// sup_B (avg_B |f - f_B|^q)^{1/q}; with bmo_seminorm this gives a John–Nirenberg ratio.
double oscillation_moment(const GridField& f, const MorreyParams& params, double q);

/// Per-node scalar |f| (Euclidean over components), validity tags copied.
GridField pointwise_norm(const GridField& f);

/// ∫_{[-1/2,1/2]^n} |z|^{α-n} dz, the cell average of the Riesz kernel in units of h^{α-n}.
double riesz_self_coefficient(double alpha, int n);

/// I_α f(x) = Σ_y |x - y|^{α-n} f(y) w_y hⁿ over nodes with f ≠ 0, all components.
/// At y = x the kernel is replaced by its cell average c(α, n) h^{α-n}.
/// Throws ParameterError for α outside (0, n).
GridField riesz_potential(const GridField& f, double alpha);
/// Same at one point; the self-term applies when x is a node.
std::vector<double> riesz_potential_at(const GridField& f, double alpha, const Point& x);

/// f_s(x) = f(x / s) by multilinear interpolation; values outside the lattice read as zero.
GridField dilate(const GridField& f, double s);

struct AdamsCheck {
  std::vector<double> scales;
  std::vector<double> source_norms, target_norms, ratios;
  double spread = 0.0;  // max ratio / min ratio
};

/// ‖I_α f_s‖_target / ‖f_s‖_source for f_s = dilate(f, s). Throws DegenerateError on a zero source norm.
AdamsCheck check_adams(const GridField& f, const MorreyParams& source, double alpha, const MorreyParams& target,
                       const std::vector<double>& scales = {1.0, 0.5, 0.25});

/// ‖∇u‖²_{M^{4,4}} against ‖∇u‖_{M^{2,2}} (‖∇²u‖_{M^{2,4}} + ‖∇u‖_{M^{4,4}}) on one scan.
struct InterpolationCheck {
  double grad22 = 0.0, grad44 = 0.0, hess24 = 0.0;
  double lhs = 0.0, rhs = 0.0;
  std::optional<double> ratio;  // absent when both sides vanish
};
/// p and λ of `scan` are ignored. Throws DegenerateError when rhs = 0 < lhs.
InterpolationCheck check_interpolation(const GridField& u, const MorreyParams& scan);

/// density(x) = min_r r^{4-n} ∫_{B_r(x) ∩ Ω} (|∇²u|² + |∇u|⁴), the liminf replaced by the radius list.
struct SingularSetReport {
  double threshold = 0.0;  // ε₀²
  std::vector<double> radii;
  std::vector<std::size_t> scanned;  // node indices
  std::vector<double> density;       // one per scanned node
  std::vector<std::size_t> flagged;  // nodes with density >= threshold
  std::size_t excised = 0;           // centres whose balls met nodes without derivatives (excised)
  double diameter = 0.0;             // of the flagged node set
};
/// Centres: stride-aligned nodes whose balls stay inside the curved boundary.
/// Radii must be >= 4h (ResolutionError); ε₀ > 0 (ParameterError).
SingularSetReport singular_set(const GridField& u, double eps0, const std::vector<double>& radii, int stride = 1);

/// Quantities of the boundary small-energy lemma for v = u − φ about x0 on the flat face.
struct SmallEnergyReport {
  double R = 0.0;
  double hypothesis = 0.0;  // R^{4-n} ∫_{B_R ∩ Ω} (|∇²v|² + R^{-2}|∇v|²)
  double threshold = 0.0;   // ε₀²
  bool holds = false;
  double lower_energy = 0.0;  // R^{4-n} ∫_{B_{R/3}} |∇²v|² + R^{2-n} ∫_{B_{R/3}} |∇v|²
  double good_radius = 0.0;   // ρ ∈ [R/2, R] minimizing σ1
  double good_sigma1 = 0.0;
  double good_energy = 0.0;   // ρ^{4-n} ∫_{B_ρ} |∇²v|² + ρ^{2-n} ∫_{B_ρ} |∇v|² at the good radius
  double quartic = 0.0;       // R^{4-n} ∫_{B_{R/3}} |∇v|⁴
};
/// Preconditions and errors as boundary_profile; R/2 >= 4h.
SmallEnergyReport check_small_energy_hypotheses(const GridField& u, const GridField& phi, const Point& x0, double R,
                                                double eps0, int samples = 9);

/// CSV: x0..x{n-1},radius,value.
void write_csv(std::ostream& out, const NormScan& scan, int n);
void write_csv(const std::string& path, const NormScan& scan, int n);
/// CSV: x0..x{n-1},density,flagged.
void write_csv(std::ostream& out, const SingularSetReport& report, const Lattice& lattice);
void write_csv(const std::string& path, const SingularSetReport& report, const Lattice& lattice);

}  // namespace biharm
