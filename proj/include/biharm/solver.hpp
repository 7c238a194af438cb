#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "biharm/calculus.hpp"
#include "biharm/grid.hpp"

namespace biharm {

struct SolveConfig {
  /// Flow step; 0 selects the largest admissible value h^4/16.
  double tau = 0.0;
  int max_iters = 2000;
  /// Flow stops once sup |P(u) Δ²u| over free nodes drops to this value.
  double tol = 1e-6;
  /// Relative residual target of the clamped linear solves.
  double lin_tol = 1e-8;
  int lin_max_iters = 20000;

  /// Throws ParameterError for non-positive values or tau > h^4/16.
  void validate(double h) const;
  double step_for(double h) const { return tau > 0.0 ? tau : std::pow(h, 4) / 16.0; }
};

/// Clamped discrete bilaplacian Δ_h∘Δ_h on a lattice.
///
/// Free nodes are those with the full central 2-ring; every other node is
/// pinned, which clamps both the trace and the normal derivative (two layers).
class ClampedSystem {
 public:
  explicit ClampedSystem(LatticePtr lattice);

  const Lattice& lattice() const { return *lattice_; }
  bool is_free(std::size_t idx) const { return free_[idx] != 0; }
  const std::vector<std::uint8_t>& free_mask() const { return free_; }
  std::size_t free_count() const { return free_nodes_.size(); }
  const std::vector<std::size_t>& free_nodes() const { return free_nodes_; }

  /// y = Δ_h Δ_h x at free nodes (x read everywhere, scalar), y = 0 at pinned nodes.
  void apply(const std::vector<double>& x, std::vector<double>& y) const;
  /// Constant diagonal of the free-free block, (4n² + 2n)/h⁴.
  double diagonal() const { return diag_; }

  /// Discrete clamped energy E_S(v) = hⁿ Σ_{y ∈ S} |Δ_h v(y)|², S = nodes with a central Laplacian.
  double stencil_energy(const GridField& v) const;

 private:
  LatticePtr lattice_;
  std::vector<std::uint8_t> free_;
  std::vector<std::size_t> free_nodes_;
  std::vector<std::size_t> central_nodes_;   // S
  std::vector<std::int64_t> central_nbrs_;   // 2n neighbours per node of S
  std::vector<std::int64_t> free_nbrs_;      // 2n neighbours per free node
  double diag_ = 0.0;
};

/// PCG (Jacobi) on the free block: solves A_ff x_f = b_f. b and x are full-length;
/// pinned entries of x are ignored and left untouched. Throws SolverError on stagnation.
struct LinearStats {
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> history;
};
LinearStats solve_clamped(const ClampedSystem& sys, const std::vector<double>& b, std::vector<double>& x,
                          double tol, int max_iters);

/// ∫ |Δu|² over nodes where the Laplacian is supported (weights from the quadrature).
double hessian_energy(const GridField& u);
/// Same over region ∩ domain.
double hessian_energy(const GridField& u, const Region& region);

/// ∫ |∇²u|² from forward mixed differences over every complete lattice cell.
double hessian_frobenius_energy(const GridField& u);

/// Tangential part of Δ²u at free nodes; other nodes are tagged invalid.
/// Throws ConstraintError when some | |u| − 1 | exceeds 1e-6.
GridField residual(const GridField& u);

struct FlowRecord {
  int iteration = 0;
  double energy = 0.0;    // E_S of the accepted iterate
  double residual = 0.0;  // sup norm of the tangential residual
  double tau = 0.0;
  bool accepted = true;
};

struct FlowResult {
  GridField u;
  std::vector<FlowRecord> history;
  bool converged = false;
  int iterations = 0;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  double final_residual = 0.0;
};

/// Projected gradient flow u ← Π(u − τ P(u)Δ²u) with the pinned layers held at φ.
/// Energy (E_S) never increases across accepted steps; rejected steps halve τ.
FlowResult minimize(const GridField& phi, const SolveConfig& cfg,
                    const std::optional<GridField>& initial = std::nullopt);

/// Convergence CSV of the accepted iterates: iteration,energy,residual,tau.
void write_csv(std::ostream& out, const FlowResult& result);
void write_csv(const std::string& path, const FlowResult& result);

/// Clamped biharmonic extension: values on the pinned layers of `clamp` encode
/// the trace and normal-derivative data; free values are solved for. Per component.
GridField biharmonic_extend(const GridField& clamp, const SolveConfig& cfg, LinearStats* stats = nullptr);

/// Green function of the clamped Δ_h² with a discrete delta h^{-n} at `source`.
GridField green_function(LatticePtr domain, const Index& source, const SolveConfig& cfg,
                         LinearStats* stats = nullptr);

struct GreenTable {
  DomainSpec domain;
  std::vector<Index> sources;
  std::vector<GridField> values;
};
GreenTable green_table(LatticePtr domain, const std::vector<Index>& sources, const SolveConfig& cfg);

/// Least-squares slope of log|G| against log|x − source| over nodes with
/// r_min ≤ |x − source| ≤ r_max. Throws DegenerateError with fewer than two distinct radii.
struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t samples = 0;
};
DecayFit fit_green_decay(const GridField& G, const Index& source, double r_min, double r_max);

/// [E₂(u∘(id + tY)) − E₂(u∘(id − tY))]/(2t) with t = h² and multilinear resampling.
/// Y has n components; nodes where Y ≠ 0 must be interior with a full 2-ring.
double inner_variation_derivative(const GridField& u, const PointFn& Y);

/// Multilinear interpolation of every component of u at an arbitrary point.
/// Throws DomainError when a corner of the enclosing cell is missing.
void interpolate(const GridField& u, const Point& x, std::span<double> out);

}  // namespace biharm
