#pragma once

#include <vector>

#include "biharm/grid.hpp"

namespace biharm::maps {

/// u ≡ p (p need not be normalized; callers pass unit vectors for sphere maps).
GridField constant(LatticePtr lattice, const std::vector<double>& p);

/// Great-circle map (cos(a x_axis), sin(a x_axis), 0, ..., 0) into S^{L-1}.
GridField geodesic(LatticePtr lattice, double a, int axis = 0, int L = 3);

/// (x - c)/|x - c| into S^{n-1}; the singular node itself receives e_1.
GridField radial_projection(LatticePtr lattice, const Point& center = {});

/// Area of the unit sphere S^{n-1} in R^n.
double sphere_area(int n);

/// ∫_{B_rho} |Δ(x/|x|)|² = (n-1)² |S^{n-1}| rho^{n-4}/(n-4); needs n > 4.
double radial_projection_core_energy(int n, double rho);

/// r^{4-n} ∫_{B_r} |Δ(x/|x|)|², independent of r; needs n > 4.
double radial_projection_scaled_energy(int n);

}  // namespace biharm::maps
