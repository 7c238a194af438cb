#pragma once

#include <cstdint>

#include "biharm/grid.hpp"

namespace biharm {

/// Finite-difference scheme: central 2nd order inside, one-sided 2nd order at
/// the boundary, bilaplacian as the composition of two Laplacians.
struct StencilConfig {
  /// Relative perturbation of the centre weight of the central second
  /// difference. Zero is the consistent scheme; anything else is a deliberately
  /// broken stencil used as a negative control.
  double mutation = 0.0;
};

/// Which one-dimensional stencil a node can use along an axis.
enum class Support : std::uint8_t { None, Central, Forward, Backward };

/// Node-level difference kernels on a lattice.
///
/// Kernels read node-major arrays with L components per node and return false
/// when the node lacks support. Field-level wrappers below tag such nodes invalid.
class Stencil {
 public:
  explicit Stencil(LatticePtr lattice, StencilConfig cfg = {});

  const Lattice& lattice() const { return *lattice_; }
  const LatticePtr& lattice_ptr() const { return lattice_; }
  const StencilConfig& config() const { return cfg_; }

  /// Storage index of k + step * e_axis, or -1.
  std::ptrdiff_t neighbor(const Index& k, int axis, int step) const;
  Support first_support(const Index& k, int axis) const;
  Support second_support(const Index& k, int axis) const;
  /// True when the node has the full 2-ring needed by central Δ∘Δ.
  bool two_ring(const Index& k) const;

  bool d1(const double* f, int L, std::size_t idx, const Index& k, int axis, double* out) const;
  bool d2(const double* f, int L, std::size_t idx, const Index& k, int axis, double* out) const;
  /// Symmetrized ½(D_a D_b + D_b D_a) for a != b.
  bool mixed(const double* f, int L, const Index& k, int a, int b, double* out) const;

  /// out[k*L + c] = ∂_k f_c.
  bool gradient_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const;
  /// out[(a*n + b)*L + c] = ∂_a ∂_b f_c, symmetric in (a, b).
  bool hessian_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const;
  bool laplacian_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const;
  /// Central Δ(Δf) at a 2-ring node, evaluated without forming Δf globally.
  bool bilaplacian_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const;

 private:
  LatticePtr lattice_;
  StencilConfig cfg_;
};

/// Throws ResolutionError unless every axis has at least `count` nodes.
void require_nodes_per_axis(const Lattice& lattice, int count);

/// n*L components, layout k*L + c.
GridField gradient(const GridField& f, const StencilConfig& cfg = {});
/// n*n*L components, layout (a*n + b)*L + c.
GridField hessian(const GridField& f, const StencilConfig& cfg = {});
GridField laplacian(const GridField& f, const StencilConfig& cfg = {});
/// laplacian(laplacian(f)), tagged valid only at 2-ring nodes.
GridField bilaplacian(const GridField& f, const StencilConfig& cfg = {});

/// Max over interior 2-ring nodes of |Δ|∇v|² − 2|∇²v|² − 2<∇Δv, ∇v>|.
double check_bochner(const GridField& v, const StencilConfig& cfg = {});

}  // namespace biharm
