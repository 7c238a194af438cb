#include "biharm/manifold.hpp"

#include <cmath>
#include <string>

#include "biharm/error.hpp"

namespace biharm {

namespace {
double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
}  // namespace

SphereTarget::SphereTarget(int L) : L_(L) {
  if (L < 2) throw ParameterError("sphere target needs ambient dimension L >= 2");
}

void SphereTarget::require_size(std::span<const double> v) const {
  if (static_cast<int>(v.size()) != L_)
    throw ParameterError("vector of length " + std::to_string(v.size()) + " for target in R^" +
                         std::to_string(L_));
}

void SphereTarget::require_unit(std::span<const double> y, double tol) const {
  require_size(y);
  if (std::abs(std::sqrt(dot(y, y)) - 1.0) > tol) throw DomainError("point is not on the unit sphere");
}

void SphereTarget::project(std::span<const double> y, std::span<double> out) const {
  require_size(y);
  const double norm = std::sqrt(dot(y, y));
  if (!(norm >= kDegenerateNorm)) throw DegeneratePointError("projection of a point at the origin");
  for (int i = 0; i < L_; ++i) out[i] = y[i] / norm;
}

std::vector<double> SphereTarget::project(std::span<const double> y) const {
  std::vector<double> out(L_);
  project(y, out);
  return out;
}

void SphereTarget::tangent_project(std::span<const double> y, std::span<const double> V,
                                   std::span<double> out) const {
  require_unit(y);
  require_size(V);
  const double c = dot(V, y);
  for (int i = 0; i < L_; ++i) out[i] = V[i] - c * y[i];
}

std::vector<double> SphereTarget::tangent_project(std::span<const double> y,
                                                  std::span<const double> V) const {
  std::vector<double> out(L_);
  tangent_project(y, V, out);
  return out;
}

std::vector<double> SphereTarget::second_fundamental_form(std::span<const double> y,
                                                          std::span<const double> X,
                                                          std::span<const double> Y) const {
  require_unit(y);
  require_size(X);
  require_size(Y);
  const double c = dot(X, Y);
  std::vector<double> out(L_);
  for (int i = 0; i < L_; ++i) out[i] = -c * y[i];
  return out;
}

std::vector<double> SphereTarget::projector(std::span<const double> y) const {
  require_unit(y);
  std::vector<double> P(static_cast<std::size_t>(L_) * L_);
  for (int i = 0; i < L_; ++i)
    for (int j = 0; j < L_; ++j) P[i * L_ + j] = (i == j ? 1.0 : 0.0) - y[i] * y[j];
  return P;
}

}  // namespace biharm
