#include "biharm/maps.hpp"

#include <cmath>
#include <numbers>

#include "biharm/error.hpp"

namespace biharm::maps {

GridField constant(LatticePtr lattice, const std::vector<double>& p) {
  if (p.empty()) throw ParameterError("constant map needs at least one component");
  return sample(std::move(lattice), static_cast<int>(p.size()), [&](const Point&, std::span<double> v) {
    std::copy(p.begin(), p.end(), v.begin());
  });
}

GridField geodesic(LatticePtr lattice, double a, int axis, int L) {
  if (L < 2) throw ParameterError("geodesic map needs L >= 2");
  if (axis < 0 || axis >= lattice->dim()) throw ParameterError("geodesic axis out of range");
  return sample(std::move(lattice), L, [&](const Point& x, std::span<double> v) {
    std::fill(v.begin(), v.end(), 0.0);
    v[0] = std::cos(a * x[axis]);
    v[1] = std::sin(a * x[axis]);
  });
}

GridField radial_projection(LatticePtr lattice, const Point& center) {
  const int n = lattice->dim();
  return sample(std::move(lattice), n, [&](const Point& x, std::span<double> v) {
    double r2 = 0.0;
    for (int d = 0; d < n; ++d) r2 += (x[d] - center[d]) * (x[d] - center[d]);
    const double r = std::sqrt(r2);
    for (int d = 0; d < n; ++d) v[d] = r > 0.0 ? (x[d] - center[d]) / r : (d == 0 ? 1.0 : 0.0);
  });
}

double sphere_area(int n) {
  if (n < 1) throw ParameterError("dimension must be positive");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

double radial_projection_core_energy(int n, double rho) {
  return radial_projection_scaled_energy(n) * std::pow(rho, n - 4);
}

double radial_projection_scaled_energy(int n) {
  if (n <= 4) throw ParameterError("the scaled energy of x/|x| is finite only for n > 4");
  return (n - 1.0) * (n - 1.0) * sphere_area(n) / (n - 4.0);
}

}  // namespace biharm::maps
