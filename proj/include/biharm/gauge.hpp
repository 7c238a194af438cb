#pragma once

#include <string>
#include <vector>

#include "biharm/analysis.hpp"
#include "biharm/grid.hpp"

namespace biharm {

struct SolveConfig;

/// so(l)-valued 1-form: per node and axis k an antisymmetric l×l matrix stored at
/// component (k*l + i)*l + j of an n*l*l field.
struct ConnectionField {
  GridField omega;
  int l = 0;

  int dim() const { return omega.lattice().dim(); }
  static int component(int l, int k, int i, int j) { return (k * l + i) * l + j; }
  double operator()(std::size_t idx, int k, int i, int j) const { return omega(idx, component(l, k, i, j)); }
};

/// Ωᵏ_ij = u_i ∂_k u_j - u_j ∂_k u_i for a unit-vector field u. Throws ConstraintError when
/// u leaves the sphere by more than 1e-8; nodes without gradient support are tagged invalid.
ConnectionField build_omega(const GridField& u);

/// Even reflection ũ(x', x_n) = u(x', -x_n) of a half-ball field onto the full ball.
GridField reflect_extend(const GridField& u);

struct GaugeConfig {
  int max_sweeps = 20000;
  /// Stop once the relative discrete divergence of A drops to this value.
  double tol = 1e-6;
  /// Nodewise update P <- Π(P + step·M); 0 takes the exact block minimizer Π(M).
  double step = 0.0;

  /// Throws ParameterError for max_sweeps < 1, tol <= 0 or step < 0.
  void validate() const;
};

/// SO(l) frame with its gauged connection.
struct FrameField {
  int l = 0;
  GridField P;  // l*l row-major per node
  GridField A;  // n*l*l, same layout as ConnectionField; mean of the adjacent edge values
  std::vector<double> energy;  // F before the first sweep and after each sweep
  double divergence = 0.0;     // ‖Σ_k (A_out - A_in)‖ / ‖A‖ over nodes
  double orthogonality = 0.0;  // max |PᵀP - I|
  int sweeps = 0;
  bool converged = false;
};

/// Lattice energy F(P) = h^{n-2} Σ_edges |P(y) - P(x) V_e|² for the edge transport
/// V_e = cay(-h Ω_e), Ω_e the endpoint average. F → ∫ Σ_k |dP P⁻¹ + P Ω P⁻¹|² as h → 0.
/// Edges with an invalid endpoint are dropped.
double gauge_energy(const ConnectionField& omega, const GridField& P);

/// Minimizes F over SO(l)-valued frames by red-black block sweeps starting from P = Id.
/// Stationarity is the discrete Coulomb condition div A = 0 with natural boundary
/// conditions. Requires a Ball domain (DomainError). Non-convergence is reported, not thrown.
FrameField coulomb_gauge(const ConnectionField& omega, const GaugeConfig& cfg = {});
/// Uses max_iters as the sweep budget and tol as the divergence tolerance.
FrameField coulomb_gauge(const ConnectionField& omega, const SolveConfig& cfg);

/// Nearest rotation to an l×l row-major matrix; DegenerateError when it is singular.
std::vector<double> nearest_rotation(const std::vector<double>& m, int l);

struct OscillationReport {
  double lq = 0.0;        // (avg_B |P - Π(P̄)|^q)^{1/q}
  double bmo = 0.0;       // [P]_BMO on the scan
  double distance = 0.0;  // |P̄ - Π(P̄)|
  std::vector<double> mean, projection;
};
/// Average of P over B_radius(centre of the domain), its SO(l) projection, the L^q deviation
/// from that projection and the BMO seminorm of P.
OscillationReport oscillation_check(const GridField& P, int l, double q, double radius, const MorreyParams& scan = {});

/// GridField binary layout with l*l components and a flag block (1 = valid).
void write_frame(const std::string& path, const FrameField& frame);

}  // namespace biharm
