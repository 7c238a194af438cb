#pragma once

#include <span>
#include <vector>

namespace biharm {

/// Unit sphere S^{L-1} inside R^L with its closed-form extrinsic geometry.
class SphereTarget {
 public:
  static constexpr double kDegenerateNorm = 1e-12;
  static constexpr double kUnitTol = 1e-8;

  explicit SphereTarget(int L);
  int ambient_dim() const { return L_; }

  /// Nearest-point projection y / |y|; throws DegeneratePointError when |y| < 1e-12.
  std::vector<double> project(std::span<const double> y) const;
  void project(std::span<const double> y, std::span<double> out) const;

  /// V - <V, y> y for unit y; throws DomainError when y is not unit within 1e-8.
  std::vector<double> tangent_project(std::span<const double> y, std::span<const double> V) const;
  void tangent_project(std::span<const double> y, std::span<const double> V, std::span<double> out) const;

  /// B(y)(X, Y) = -<X, Y> y; throws DomainError when y is not unit within 1e-8.
  std::vector<double> second_fundamental_form(std::span<const double> y, std::span<const double> X,
                                              std::span<const double> Y) const;

  /// Tangent projector Id - y y^T as a row-major L x L matrix.
  std::vector<double> projector(std::span<const double> y) const;

  /// Throws DomainError unless |y| = 1 within tol.
  void require_unit(std::span<const double> y, double tol = kUnitTol) const;

 private:
  void require_size(std::span<const double> v) const;
  int L_;
};

}  // namespace biharm
