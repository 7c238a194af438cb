#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "biharm/calculus.hpp"
#include "biharm/error.hpp"
#include "biharm/maps.hpp"
#include "biharm/monotonicity.hpp"
#include "biharm/solver.hpp"

using namespace biharm;

namespace {

constexpr double kPi = std::numbers::pi;

double norm(const Point& x, int n) {
  double s = 0;
  for (int d = 0; d < n; ++d) s += x[d] * x[d];
  return std::sqrt(s);
}

double bump(double s) { return s < 1.0 ? std::pow(std::cos(0.5 * kPi * s), 4) : 0.0; }

// Analytic jet of v = x3² cos(x1 + 2 x2) in R³; vanishes to first order on {x3 = 0}.
struct Jet3 {
  double g[3];
  double H[3][3];
};

Jet3 test_jet(const double x[3]) {
  const double w = x[0] + 2 * x[1], c = std::cos(w), s = std::sin(w), z = x[2];
  Jet3 j{};
  j.g[0] = -z * z * s;
  j.g[1] = -2 * z * z * s;
  j.g[2] = 2 * z * c;
  j.H[0][0] = -z * z * c;
  j.H[0][1] = j.H[1][0] = -2 * z * z * c;
  j.H[1][1] = -4 * z * z * c;
  j.H[0][2] = j.H[2][0] = -2 * z * s;
  j.H[1][2] = j.H[2][1] = -4 * z * s;
  j.H[2][2] = 2 * c;
  return j;
}

GridField test_field(LatticePtr lat) {
  return sample(lat, 1, [](const Point& x, std::span<double> v) {
    v[0] = x[2] * x[2] * std::cos(x[0] + 2 * x[1]);
  });
}

struct Pointwise {
  double a = 0, hess = 0, g = 0, q = 0, pr = 0, grad = 0, s2 = 0;
};

Pointwise pointwise(const double y[3]) {
  const int n = 3;
  const Jet3 j = test_jet(y);
  const double rho = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
  double yu = 0, euler = 0, yuh = 0, grad = 0, hess = 0, lap = 0;
  for (int i = 0; i < n; ++i) yu += y[i] * j.g[i];
  for (int b = 0; b < n; ++b) {
    double yh = 0;
    for (int i = 0; i < n; ++i) {
      yh += y[i] * j.H[i][b];
      hess += j.H[i][b] * j.H[i][b];
    }
    euler += (j.g[b] + yh) * (j.g[b] + yh);
    yuh += j.g[b] * yh;
    grad += j.g[b] * j.g[b];
    lap += j.H[b][b];
  }
  Pointwise p;
  p.a = 4 * (euler / std::pow(rho, n - 2) + (n - 2) * yu * yu / std::pow(rho, n));
  p.hess = hess;
  p.g = 2 * yu * yu / std::pow(rho, n - 1) - yuh / std::pow(rho, n - 3) - 2 * grad / std::pow(rho, n - 3);
  p.q = yuh / rho;
  p.pr = lap * yu / rho;
  p.grad = grad;
  p.s2 = 2 * yuh + 3 * grad - 4 * yu * yu / (rho * rho);
  return p;
}

// Midpoint rule in spherical coordinates over the upper hemisphere.
template <class F>
double hemisphere(double rho, F&& f, int nt = 160, int np = 320) {
  double sum = 0;
  for (int it = 0; it < nt; ++it) {
    const double t = (it + 0.5) * 0.5 * kPi / nt;
    for (int ip = 0; ip < np; ++ip) {
      const double p = (ip + 0.5) * 2 * kPi / np;
      const double y[3] = {rho * std::sin(t) * std::cos(p), rho * std::sin(t) * std::sin(p), rho * std::cos(t)};
      sum += f(y) * std::sin(t);
    }
  }
  return sum * rho * rho * (0.5 * kPi / nt) * (2 * kPi / np);
}

template <class F>
double half_ball(double r0, double r1, F&& f, int nr = 120) {
  double sum = 0;
  const double dr = (r1 - r0) / nr;
  for (int i = 0; i < nr; ++i) sum += hemisphere(r0 + (i + 0.5) * dr, f, 60, 120) * dr;
  return sum;
}

struct Oracle {
  double hess, g, f, sigma1, sigma2;
};

Oracle oracle_at(double rho) {
  const double hess = rho * half_ball(0.0, rho, [](const double* y) { return pointwise(y).hess; });
  const double g = hemisphere(rho, [](const double* y) { return pointwise(y).g; });
  const double q = hemisphere(rho, [](const double* y) { return pointwise(y).q; });
  const double pr = hemisphere(rho, [](const double* y) { return pointwise(y).pr; });
  const double gs = hemisphere(rho, [](const double* y) { return pointwise(y).grad; });
  const double s2 = hemisphere(rho, [](const double* y) { return pointwise(y).s2; });
  return {hess, g, rho * (q - pr), hess + gs, s2};
}

GridField perturbed(const GridField& phi, const Point& e, double amp, double width) {
  const Lattice& lat = phi.lattice();
  const int n = lat.dim(), L = phi.components();
  GridField u(phi.lattice_ptr(), L);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const Point x = lat.coord(lat.index_of(i));
    const auto p = phi.at(i);
    double ep = 0;
    for (int c = 0; c < L; ++c) ep += e[c] * p[c];
    const double s = amp * x[n - 1] * x[n - 1] * bump(norm(x, n) / width);
    double len = 0;
    std::vector<double> w(L);
    for (int c = 0; c < L; ++c) {
      w[c] = p[c] + s * (e[c] - ep * p[c]);
      len += w[c] * w[c];
    }
    len = std::sqrt(len);
    for (int c = 0; c < L; ++c) u(i, c) = w[c] / len;
  }
  return u;
}

}  // namespace

TEST(Interior, ConstantMapHasNoTerms) {
  auto lat = build_domain(DomainSpec::ball(5, 1.0, 0.125));
  const auto q = interior_quantities(maps::constant(lat, {0, 0, 1}), Point{}, 0.5, 0.75);
  EXPECT_EQ(q.delta_E, 0.0);
  EXPECT_EQ(q.A1, 0.0);
  EXPECT_EQ(q.A2, 0.0);
}

TEST(Interior, HarmonicQuadraticMatchesClosedForm) {
  // u = x1 x2 is harmonic: ΔE = 0, so A1 + A2 = 0, and A1 has a closed form.
  const int n = 5;
  auto lat = build_domain(DomainSpec::ball(n, 1.0, 1.0 / 16));
  auto u = sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = x[0] * x[1]; });
  const double r = 0.3, R = 0.6;
  const auto q = interior_quantities(u, Point{}, r, R);
  const double a1 = maps::sphere_area(n) * (std::pow(R, 4) - std::pow(r, 4)) *
                    (8.0 / n + 4.0 * (n - 2) / (n * (n + 2.0)));
  EXPECT_NEAR(q.A1, a1, 0.02 * a1);
  EXPECT_NEAR(q.A1 + q.A2, 0.0, 0.02 * a1);
  EXPECT_NEAR(q.delta_E, 0.0, 1e-9);
}

TEST(Interior, RadialProjectionScaledEnergyAndIdentity) {
  const int n = 5;
  const double h = 1.0 / 16;
  auto lat = build_domain(DomainSpec::ball(n, 0.625, h));
  const GridField u = maps::radial_projection(lat);
  const CoreExcision core{4 * h, maps::radial_projection_core_energy(n, 4 * h)};
  const double target = maps::radial_projection_scaled_energy(n);
  EXPECT_NEAR(target, 128 * kPi * kPi / 3, 1e-9);
  const auto rep = monotonicity_report(u, nullptr, Point{}, {0.3, 0.35, 0.4}, core);
  for (double e : rep.scaled_energy) EXPECT_NEAR(e, target, 0.01 * target);
  const auto q = interior_quantities(u, Point{}, 0.3, 0.4, core);
  EXPECT_GE(q.A1, 0.0);
  for (double t : {q.delta_E, q.A1, q.A2}) EXPECT_LE(std::abs(t), 0.05 * target);
  EXPECT_GT(q.core_numeric, 0.0);
}

TEST(Interior, RadiusConstraints) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  const auto u = maps::constant(lat, {1, 0, 0});
  EXPECT_THROW(interior_quantities(u, Point{}, 0.25, 0.7), ResolutionError);
  EXPECT_THROW(interior_quantities(u, Point{}, 0.5, 0.8), ResolutionError);
  EXPECT_THROW(interior_quantities(u, Point{}, 0.6, 0.5), ParameterError);
}

TEST(Interior, AnnulusTermNonnegativeOnSmoothMaps) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 1.0 / 16));
  const auto u = maps::geodesic(lat, 2.0, 1);
  for (double R : {0.4, 0.6, 0.8}) EXPECT_GE(interior_quantities(u, Point{0.05, 0, 0}, 0.3, R).A1, 0.0);
}

TEST(Boundary, IdenticalMapsGiveZero) {
  auto lat = build_domain(DomainSpec::half_ball(5, 1.0, 0.125));
  const auto phi = maps::geodesic(lat, 1.0);
  const auto p = boundary_profile(phi, phi, Point{}, {0.5, 0.6, 0.75});
  for (const auto* v : {&p.hess, &p.B, &p.C, &p.f, &p.g, &p.sigma1, &p.sigma2})
    for (double x : *v) EXPECT_EQ(x, 0.0);
  for (double a : p.annulus) EXPECT_EQ(a, 0.0);
}

TEST(Boundary, RandomPerturbationsKeepAnnulusNonnegative) {
  const int n = 5;
  auto lat = build_domain(DomainSpec::half_ball(n, 1.0, 0.125));
  const auto phi = maps::geodesic(lat, 1.0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.2, 1.0);
  const std::vector<double> radii{0.5, 0.58, 0.66, 0.75};
  for (int trial = 0; trial < 8; ++trial) {
    Point e{};
    double len = 0;
    for (int c = 0; c < 3; ++c) {
      e[c] = gauss(rng);
      len += e[c] * e[c];
    }
    for (int c = 0; c < 3; ++c) e[c] /= std::sqrt(len);
    const auto u = perturbed(phi, e, 2.0 * unit(rng), 0.5 + 0.5 * unit(rng));
    const auto p = boundary_profile(u, phi, Point{}, radii);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      EXPECT_TRUE(std::isfinite(p.B[i]) && std::isfinite(p.C[i]));
      EXPECT_GE(p.sigma1[i], 0.0);
      for (std::size_t j = i + 1; j < radii.size(); ++j) EXPECT_GE(p.A(i, j), 0.0);
    }
    EXPECT_GT(p.A(0, 3), 0.0);
  }
}

// Relative errors measured: about 2% at h = 1/32, below 0.1% at h = 1/64.
TEST(Boundary, MatchesDirectQuadrature) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 32));
  const GridField phi = maps::constant(lat, {0.0});
  const std::vector<double> radii{0.3, 0.5, 0.7};
  const auto p = boundary_profile(test_field(lat), phi, Point{}, radii);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const Oracle o = oracle_at(radii[i]);
    EXPECT_NEAR(p.hess[i], o.hess, 0.03 * std::abs(o.hess)) << radii[i];
    EXPECT_NEAR(p.g[i], o.g, 0.03 * std::abs(o.g)) << radii[i];
    EXPECT_NEAR(p.B[i], 2 * o.g, 0.06 * std::abs(o.g)) << radii[i];
    EXPECT_NEAR(p.f[i], o.f, 0.03 * std::abs(o.f)) << radii[i];
    EXPECT_NEAR(p.C[i], -2 * o.f, 0.06 * std::abs(o.f)) << radii[i];
    EXPECT_NEAR(p.sigma1[i], o.sigma1, 0.03 * std::abs(o.sigma1)) << radii[i];
    EXPECT_NEAR(p.sigma2[i], o.sigma2, 0.03 * std::abs(o.sigma2)) << radii[i];
  }
  const double a = half_ball(radii[0], radii[2], [](const double* y) { return pointwise(y).a; });
  EXPECT_NEAR(p.A(0, 2), a, 0.03 * a);
}

TEST(Boundary, RefinementChangesQuantitiesLittle) {
  const std::vector<double> radii{0.3, 0.5, 0.7};
  std::vector<BoundaryProfile> ps;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    auto lat = build_domain(DomainSpec::half_ball(3, 1.0, h));
    ps.push_back(boundary_profile(test_field(lat), maps::constant(lat, {0.0}), Point{}, radii));
  }
  auto close = [](double a, double b) { return std::abs(a - b) <= 0.1 * std::abs(b); };
  for (std::size_t i = 0; i < radii.size(); ++i) {
    EXPECT_TRUE(close(ps[0].hess[i], ps[1].hess[i]));
    EXPECT_TRUE(close(ps[0].B[i], ps[1].B[i]));
    EXPECT_TRUE(close(ps[0].C[i], ps[1].C[i]));
    for (std::size_t j = i + 1; j < radii.size(); ++j) EXPECT_TRUE(close(ps[0].A(i, j), ps[1].A(i, j)));
  }
}

TEST(Boundary, PreconditionErrors) {
  auto half = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  const auto zero = maps::constant(half, {0.0});
  auto linear = sample(half, 1, [](const Point& x, std::span<double> v) { v[0] = x[2]; });
  auto offset = sample(half, 1, [](const Point& x, std::span<double> v) { v[0] = 0.1 + x[0] * x[2] * x[2]; });
  EXPECT_THROW(boundary_quantities(linear, zero, Point{}, 0.3, 0.5), BoundaryDataError);
  EXPECT_THROW(boundary_quantities(offset, zero, Point{}, 0.3, 0.5), BoundaryDataError);
  EXPECT_THROW(boundary_quantities(zero, zero, Point{0, 0, 0.25}, 0.3, 0.5), DomainError);
  EXPECT_THROW(boundary_quantities(zero, zero, Point{}, 0.3, 0.9), ResolutionError);
  auto ball = build_domain(DomainSpec::ball(3, 1.0, 1.0 / 16));
  const auto bz = maps::constant(ball, {0.0});
  EXPECT_THROW(boundary_quantities(bz, bz, Point{}, 0.3, 0.5), DomainError);
}

TEST(Sigma, ZeroFieldAndPositivity) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  const auto zero = maps::constant(lat, {0.0});
  const Sigma s0 = sigma_decomposition(zero, zero, Point{}, 0.5);
  EXPECT_EQ(s0.sigma1, 0.0);
  EXPECT_EQ(s0.sigma2, 0.0);
  EXPECT_GT(sigma_decomposition(test_field(lat), zero, Point{}, 0.5).sigma1, 0.0);
}

TEST(Sigma, RadialFieldsSaturateTheRadialTerm) {
  // For radial v the discrete gradient is radial too: |y·∇v|² = |y|²|∇v|² nodewise.
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  auto v = sample(lat, 1, [](const Point& x, std::span<double> o) { o[0] = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; });
  const GridField g = gradient(v);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    if (!g.valid(i)) continue;
    const Point y = lat->coord(lat->index_of(i));
    double yg = 0, gg = 0, yy = 0;
    for (int d = 0; d < 3; ++d) {
      yg += y[d] * g(i, d);
      gg += g(i, d) * g(i, d);
      yy += y[d] * y[d];
    }
    EXPECT_NEAR(yg * yg, yy * gg, 1e-12);
  }
}

TEST(Fit, ZeroFieldNeedsNoConstant) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  const auto phi = maps::geodesic(lat, 1.0);
  const auto p = boundary_profile(phi, phi, Point{}, {0.3, 0.4, 0.5, 0.6});
  const FitResult f = fit_monotonicity_constant(p);
  EXPECT_TRUE(f.found);
  EXPECT_EQ(f.C, 0.0);
  EXPECT_THROW(fit_monotonicity_constant(boundary_profile(phi, phi, Point{}, {0.3, 0.4, 0.5})), ParameterError);
}

TEST(Fit, BisectionFindsTheThreshold) {
  // A hand-built profile where C = 0 fails; the fitted C makes every margin nonnegative.
  BoundaryProfile p;
  p.radii = {0.2, 0.3, 0.4, 0.5};
  p.hess = {1.0, 0.9, 0.8, 0.7};
  p.B = p.C = p.f = p.g = p.sigma1 = p.sigma2 = std::vector<double>(4, 0.0);
  p.annulus.assign(16, 0.0);
  const FitResult f = fit_monotonicity_constant(p);
  ASSERT_TRUE(f.found);
  EXPECT_GT(f.C, 0.0);
  EXPECT_LT(f.C, 1000.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_GE(monotonicity_margin(p, i, j, f.C), 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) worst = std::min(worst, monotonicity_margin(p, i, j, 0.99 * f.C));
  EXPECT_LT(worst, 0.0);
}

TEST(Fit, SolverProducedHalfBallMap) {
  auto lat = build_domain(DomainSpec::half_ball(5, 1.0, 0.125));
  const GridField phi = sample(lat, 3, [](const Point& x, std::span<double> o) {
    const double t = 1.2 * x[0] + 0.8 * x[1] * x[1] + 0.6 * x[4] * x[2];
    const double s = 0.5 * x[3] + 0.4 * x[4] * x[4];
    o[0] = std::cos(t) * std::cos(s);
    o[1] = std::sin(t) * std::cos(s);
    o[2] = std::sin(s);
  });
  SolveConfig cfg;
  cfg.max_iters = 30;
  const FlowResult fr = minimize(phi, cfg);
  const auto p = boundary_profile(fr.u, phi, Point{}, {0.5, 0.58, 0.66, 0.75});
  EXPECT_GT(p.hess.back(), 0.0);
  const FitResult f = fit_monotonicity_constant(p);
  EXPECT_TRUE(f.found);
  EXPECT_LT(f.C, 1000.0);
}

TEST(Report, CsvSchemaAndMissingInteriorTerms) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  const auto phi = maps::geodesic(lat, 1.0);
  const auto rep = monotonicity_report(phi, &phi, Point{}, {0.3, 0.4, 0.5, 0.6});
  ASSERT_EQ(rep.rows.size(), 6u);
  EXPECT_TRUE(std::isnan(rep.rows[0].A1));
  EXPECT_EQ(rep.rows[0].Abdry, 0.0);
  ASSERT_TRUE(rep.fit.has_value());
  EXPECT_EQ(rep.rows[0].fittedC, 0.0);
  std::ostringstream out;
  write_csv(out, rep);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "r,R,scaledE_r,scaledE_R,A1,A2,Abdry,B_r,B_R,C_r,C_R,f_r,g_r,sigma1,sigma2,fittedC");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 6);
}

TEST(Report, InteriorReportWithoutBoundaryData) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 1.0 / 16));
  const auto u = maps::geodesic(lat, 1.0);
  const auto rep = monotonicity_report(u, nullptr, Point{}, {0.3, 0.5});
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_FALSE(std::isnan(rep.rows[0].A1));
  EXPECT_TRUE(std::isnan(rep.rows[0].B_r));
  EXPECT_FALSE(rep.fit.has_value());
  // Geodesic: |Δu|² = a⁴ = 1, so r^{4-n}|B_r| = (4π/3) r⁴.
  const double target = 4 * kPi / 3 * std::pow(0.5, 4);
  EXPECT_NEAR(rep.scaled_energy[1], target, 0.01 * target);
}
