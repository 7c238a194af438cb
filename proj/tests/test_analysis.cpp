#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "biharm/analysis.hpp"
#include "biharm/calculus.hpp"
#include "biharm/error.hpp"
#include "biharm/maps.hpp"

using namespace biharm;

namespace {

constexpr double kPi = std::numbers::pi;

double norm(const Point& x, int n) {
  double s = 0;
  for (int d = 0; d < n; ++d) s += x[d] * x[d];
  return std::sqrt(s);
}

double bump(double s) { return s < 1.0 ? std::pow(std::cos(0.5 * kPi * s), 4) : 0.0; }

// Volume of the unit ball in R^n.
double ball_volume(int n) { return maps::sphere_area(n) / n; }

// |∇(x/|x|)| = √(n-1)/|x| with the core |x| < 4h set to zero.
GridField radial_gradient_norm(LatticePtr lat) {
  const int n = lat->dim();
  const double core = 4 * lat->h() * (1 - 1e-12);
  return sample(lat, 1, [&](const Point& x, std::span<double> v) {
    const double r = norm(x, n);
    v[0] = r >= core ? std::sqrt(n - 1.0) / r : 0.0;
  });
}

GridField scalar(LatticePtr lat, double (*fn)(const Point&)) {
  return sample(lat, 1, [&](const Point& x, std::span<double> v) { v[0] = fn(x); });
}

}  // namespace

// Morrey --------------------------------------------------------------------

TEST(Morrey, ZeroFieldAndParameterErrors) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  const GridField zero(lat, 1);
  EXPECT_EQ(morrey_norm(zero, {}), 0.0);
  MorreyParams bad;
  bad.p = 0.5;
  EXPECT_THROW(morrey_norm(zero, bad), ParameterError);
  bad = {};
  bad.lambda = 4;
  EXPECT_THROW(morrey_norm(zero, bad), ParameterError);
  bad = {};
  bad.radii = {0.5, 0.25};
  EXPECT_THROW(morrey_norm(zero, bad), ParameterError);
  bad = {};
  bad.radii = {2.0};
  EXPECT_THROW(morrey_norm(zero, bad), ParameterError);  // no ball fits
}

TEST(Morrey, RadialGradientMatchesExcisedRadialIntegrals) {
  // Radially: r^{2-n}∫_{B_r∖B_ρ} (n-1)/|x|² = 4|S⁴|(1 - (ρ/r)³)/3 and
  // r^{4-n}∫_{B_r∖B_ρ} (n-1)²/|x|⁴ = 16|S⁴|(1 - ρ/r) in n = 5; sup at centre 0, r = 1/2.
  const double h = 1.0 / 16, rho = 4 * h, r = 0.5;
  auto lat = build_domain(DomainSpec::ball(5, r, h));
  const auto f = radial_gradient_norm(lat);
  const double area = maps::sphere_area(5);
  MorreyParams p;
  p.stride = 2;
  const auto s22 = morrey_scan(f, p);
  EXPECT_NEAR(s22.value, std::sqrt(4 * area * (1 - std::pow(rho / r, 3)) / 3), 0.03 * s22.value);
  EXPECT_NEAR(s22.best.radius, r, 1e-12);
  EXPECT_NEAR(norm(s22.best.center, 5), 0.0, 1e-12);
  p.p = p.lambda = 4;
  const double m44 = morrey_norm(f, p);
  EXPECT_NEAR(m44, std::pow(16 * area * (1 - rho / r), 0.25), 0.03 * m44);

  // The reported sup is the direct quadrature at the best ball.
  GridField sq(lat, 1);
  for (std::size_t i = 0; i < lat->size(); ++i) sq(i, 0) = f(i, 0) * f(i, 0);
  const double direct = std::sqrt(std::pow(r, -3.0) * integrate(sq, Region{Point{}, r, 0.0}));
  EXPECT_NEAR(s22.value, direct, 1e-10 * direct);
}

TEST(Morrey, DilationScalesAsLambdaOverP) {
  // ‖f(·/s)‖ᵖ = s^λ ‖f‖ᵖ when centres and radii scale with s; here s = 2 on a fixed h.
  const double h = 1.0 / 16;
  auto f = [](const Point& x) { return std::exp(x[0]) * (1 + x[1] * x[1]) + 0.5 * x[2]; };
  auto small = build_domain(DomainSpec::ball(3, 1.0, h));
  auto large = build_domain(DomainSpec::ball(3, 2.0, h));
  const auto f1 = sample(small, 1, [&](const Point& x, std::span<double> v) { v[0] = f(x); });
  const auto f2 = sample(large, 1, [&](const Point& x, std::span<double> v) {
    Point y{};
    for (int d = 0; d < 3; ++d) y[d] = x[d] / 2;
    v[0] = f(y);
  });
  for (auto [p, lambda] : {std::pair{2.0, 2.0}, std::pair{4.0, 3.0}}) {
    MorreyParams a, b;
    a.p = b.p = p;
    a.lambda = b.lambda = lambda;
    a.stride = 2;
    b.stride = 4;
    a.radii = {0.125, 0.25, 0.5, 1.0};
    b.radii = {0.25, 0.5, 1.0, 2.0};
    const double n1 = morrey_norm(f1, a), n2 = morrey_norm(f2, b);
    EXPECT_NEAR(n2 / n1, std::pow(2.0, lambda / p), 0.05 * std::pow(2.0, lambda / p)) << p << " " << lambda;
  }
}

TEST(Morrey, MonotoneUnderScanRefinementAndDomainEnlargement) {
  auto field = [](LatticePtr lat) {
    return sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = 1.0 / (0.05 + std::abs(x[0] - 0.2)); });
  };
  auto lat = build_domain(DomainSpec::ball(3, 0.75, 1.0 / 16));
  const auto f = field(lat);
  MorreyParams coarse;
  coarse.stride = 3;
  coarse.radii = {0.125, 0.5};
  MorreyParams fine = coarse;
  fine.stride = 1;
  fine.radii = {0.0625, 0.125, 0.25, 0.5};
  EXPECT_LE(morrey_norm(f, coarse), morrey_norm(f, fine));
  auto wide = build_domain(DomainSpec::ball(3, 1.0, 1.0 / 16));
  EXPECT_LE(morrey_norm(f, fine), morrey_norm(field(wide), fine) * (1 + 1e-12));
}

TEST(Morrey, InvalidNodesSkipBalls) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  GridField f(lat, 1, 1.0);
  f.set_valid(lat->find(Index{}), false);
  MorreyParams p;
  p.radii = {0.25};
  const auto s = morrey_scan(f, p);
  EXPECT_GT(s.skipped, 0u);
  for (const auto& e : s.entries) EXPECT_GT(norm(e.center, 3), 0.25 - 1e-9);
}

TEST(Morrey, ClipAdmitsBallsCutByTheFlatFace) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  const GridField one(lat, 1, 1.0);
  MorreyParams p;
  p.p = 1;
  p.lambda = 3;
  p.radii = {0.75};
  EXPECT_THROW(morrey_norm(one, p), ParameterError);  // no such ball avoids the face
  p.clip = true;
  // |B_{3/4}(c) ∩ B⁺| is largest for the highest admissible centre, c = (0, 0, 1/4):
  // the ball minus a cap of height 1/2.
  const double R = 0.75, cap = 0.5;
  const double expect = 4 * kPi * R * R * R / 3 - kPi * cap * cap * (3 * R - cap) / 3;
  EXPECT_NEAR(morrey_norm(one, p), expect, 0.02 * expect);
}

TEST(WeakMorrey, ConstantFieldIsValueTimesMeasure) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 1.0 / 16));
  const GridField two(lat, 1, 2.0);
  MorreyParams p;
  p.lambda = 3;
  p.radii = {0.5, 1.0};
  const double direct = 2.0 * std::sqrt(integrate(GridField(lat, 1, 1.0)));
  EXPECT_NEAR(weak_morrey_norm(two, p), direct, 1e-10 * direct);
  // A level set: 1 on |x| < 1/2, 3 elsewhere gives max(3 |outer|^{1/2}, 1 |B|^{1/2}).
  const auto step = sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = norm(x, 3) < 0.5 ? 1.0 : 3.0; });
  const double whole = integrate(GridField(lat, 1, 1.0));
  const double inner = integrate(sample(lat, 1, [](const Point& x, std::span<double> v) {
    v[0] = norm(x, 3) < 0.5 ? 1.0 : 0.0;
  }));
  EXPECT_NEAR(weak_morrey_norm(step, p), 3.0 * std::sqrt(whole - inner), 1e-10);
}

// BMO -------------------------------------------------------------------------

TEST(Bmo, ConstantVanishes) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  EXPECT_NEAR(bmo_seminorm(GridField(lat, 1, 3.5), {}), 0.0, 1e-12);
}

TEST(Bmo, HalfSpaceIndicatorOnTheInterface) {
  // f_B = 1/2 and ∫|f - 1/2| = |B|/2 on a ball centred on {x₁ = 0}: r^{-n}·that = v₅/2.
  auto lat = build_domain(DomainSpec::ball(5, 1.0, 0.125));
  const auto f = sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = x[0] > 0 ? 1.0 : 0.0; });
  MorreyParams p;
  p.radii = {0.5, 1.0};
  p.stride = 4;
  const double target = ball_volume(5) / 2;
  EXPECT_NEAR(target, 8 * kPi * kPi / 30, 1e-12);
  EXPECT_GE(bmo_seminorm(f, p), 0.9 * target);
  EXPECT_LE(bmo_seminorm(f, p), 1.1 * target);
}

TEST(Bmo, LogarithmIsScaleInvariant) {
  const double h = 1.0 / 16;
  auto field = [&](LatticePtr lat) {
    return sample(lat, 1, [&](const Point& x, std::span<double> v) { v[0] = std::log(std::max(norm(x, 3), 4 * h)); });
  };
  MorreyParams a, b;
  a.stride = 2;
  b.stride = 4;
  const double one = bmo_seminorm(field(build_domain(DomainSpec::ball(3, 1.0, h))), a);
  const double two = bmo_seminorm(field(build_domain(DomainSpec::ball(3, 2.0, h))), b);
  EXPECT_GT(one, 0.0);
  EXPECT_NEAR(two / one, 1.0, 0.15);
}

TEST(Bmo, JohnNirenbergRatioOnTheCorpus) {
  auto lat = build_domain(DomainSpec::ball(3, 0.75, 1.0 / 16));
  MorreyParams p;
  p.stride = 2;
  const std::vector<GridField> corpus = {
      maps::geodesic(lat, 2.0), maps::geodesic(lat, 1.0, 2),
      maps::radial_projection(lat, Point{0.03, 0.02, 0.01}),
      sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = std::log(std::max(norm(x, 3), 0.25)); })};
  for (const auto& f : corpus) {
    const double bmo = bmo_seminorm(f, p);
    ASSERT_GT(bmo, 0.0);
    EXPECT_LE(oscillation_moment(f, p, 4.0) / bmo, 20.0);
  }
}

// Riesz -------------------------------------------------------------------------

TEST(Riesz, SelfCoefficientClosedForms) {
  // Five-point Gauss–Legendre on the outer subcubes: about 1e-6 relative.
  for (double a : {0.25, 0.5, 0.75}) {
    const double exact = 2 * std::pow(0.5, a) / a;
    EXPECT_NEAR(riesz_self_coefficient(a, 1), exact, 1e-5 * exact);
  }
  // ∫_{[-1/2,1/2]²} 1/|z| = 4 log(1 + √2).
  EXPECT_NEAR(riesz_self_coefficient(1.0, 2), 4 * std::log(1 + std::sqrt(2.0)), 1e-5 * 3.53);
  EXPECT_THROW(riesz_self_coefficient(2.0, 2), ParameterError);
}

TEST(Riesz, ZeroFieldAndOrderErrors) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.25));
  const GridField zero(lat, 1);
  const auto I = riesz_potential(zero, 1.0);
  for (double v : I.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(riesz_potential(zero, 0.0), ParameterError);
  EXPECT_THROW(riesz_potential(zero, 3.0), ParameterError);
}

TEST(Riesz, IndicatorOfTheUnitBallAtTheCentre) {
  // ∫_{B₁} |y|^{1-n} dy = |S^{n-1}| = 8π²/3 in n = 5.
  auto lat = build_domain(DomainSpec::ball(5, 1.0, 1.0 / 16));
  const auto v = riesz_potential_at(GridField(lat, 1, 1.0), 1.0, Point{});
  EXPECT_NEAR(v[0], 8 * kPi * kPi / 3, 0.03 * 8 * kPi * kPi / 3);
}

TEST(Riesz, LinearToRounding) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  const auto f = scalar(lat, [](const Point& x) { return std::sin(3 * x[0]) + x[1]; });
  const auto g = scalar(lat, [](const Point& x) { return x[2] * x[2] - 0.3; });
  GridField mix(lat, 1);
  for (std::size_t i = 0; i < lat->size(); ++i) mix(i, 0) = 2.5 * f(i, 0) - 1.5 * g(i, 0);
  const auto If = riesz_potential(f, 1.5), Ig = riesz_potential(g, 1.5), Im = riesz_potential(mix, 1.5);
  double scale = 0;
  for (std::size_t i = 0; i < lat->size(); ++i) scale = std::max(scale, std::abs(Im(i, 0)));
  for (std::size_t i = 0; i < lat->size(); ++i) EXPECT_NEAR(Im(i, 0), 2.5 * If(i, 0) - 1.5 * Ig(i, 0), 1e-12 * scale);
}

TEST(Riesz, HomogeneityUnderDilation) {
  // I_α(f(·/s))(s x) = s^α I_α f(x), s = 2, with both fields sampled on the same h.
  const double h = 1.0 / 16, alpha = 1.0;
  auto f = [](const Point& x) { return bump(norm(x, 3) / 0.5) * (1 + x[0]); };
  auto small = build_domain(DomainSpec::ball(3, 1.0, h));
  auto large = build_domain(DomainSpec::ball(3, 2.0, h));
  const auto f1 = sample(small, 1, [&](const Point& x, std::span<double> v) { v[0] = f(x); });
  const auto f2 = sample(large, 1, [&](const Point& x, std::span<double> v) {
    Point y{};
    for (int d = 0; d < 3; ++d) y[d] = x[d] / 2;
    v[0] = f(y);
  });
  for (const Point& x : {Point{}, Point{0.25, 0, 0}, Point{0, 0.375, 0.125}}) {
    Point sx{};
    for (int d = 0; d < 3; ++d) sx[d] = 2 * x[d];
    const double a = riesz_potential_at(f1, alpha, x)[0], b = riesz_potential_at(f2, alpha, sx)[0];
    EXPECT_NEAR(b, 2.0 * a, 0.03 * 2.0 * a);
  }
  // The field-level potential agrees with the pointwise one at nodes.
  const auto I = riesz_potential(f1, alpha);
  const Point x{0.25, 0, 0};
  EXPECT_NEAR(I.at(static_cast<std::size_t>(small->find(Index{4, 0, 0})))[0], riesz_potential_at(f1, alpha, x)[0], 1e-12);
}

TEST(Riesz, DilationInterpolatesAndZerosOutside) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  const auto f = scalar(lat, [](const Point& x) { return 1 + 2 * x[0] - x[1] + 0.5 * x[2]; });
  const auto g = dilate(f, 0.5);  // g(x) = f(2x), exact for affine f inside B_{1/2}
  for (std::size_t i = 0; i < lat->size(); ++i) {
    const Point x = lat->coord(lat->index_of(i));
    if (norm(x, 3) < 0.4) EXPECT_NEAR(g(i, 0), 1 + 4 * x[0] - 2 * x[1] + x[2], 1e-12);
    if (norm(x, 3) > 0.5 + 0.25) EXPECT_EQ(g(i, 0), 0.0);
  }
  EXPECT_THROW(dilate(f, 0.0), ParameterError);
}

// Adams and interpolation ------------------------------------------------------

TEST(Adams, RatiosStayBoundedOverTheScalingFamily) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 1.0 / 16));
  const auto f = sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = norm(x, 3) < 0.5 ? 1.0 : 0.0; });
  MorreyParams source, target;
  source.p = 2;
  source.lambda = 2.5;
  target.p = 4;
  target.lambda = 3;
  source.stride = target.stride = 2;
  const auto check = check_adams(f, source, 1.0, target);
  ASSERT_EQ(check.ratios.size(), 3u);
  for (double r : check.ratios) EXPECT_TRUE(std::isfinite(r) && r > 0);
  EXPECT_LE(check.spread, 3.0);
  EXPECT_THROW(check_adams(GridField(lat, 1), source, 1.0, target), DegenerateError);
}

TEST(Interpolation, ConstantHasNoRatio) {
  auto lat = build_domain(DomainSpec::half_ball(5, 1.0, 0.25));
  MorreyParams scan;
  scan.clip = true;
  const auto c = check_interpolation(maps::constant(lat, {0, 0, 1}), scan);
  EXPECT_EQ(c.lhs, 0.0);
  EXPECT_EQ(c.rhs, 0.0);
  EXPECT_FALSE(c.ratio.has_value());
}

TEST(Interpolation, CorpusRatiosAreStable) {
  const double h = 0.125;
  auto lat = build_domain(DomainSpec::half_ball(5, 1.0, h));
  MorreyParams scan;
  scan.clip = true;
  scan.stride = 2;
  // x/|x| truncated by the grid: its centre sits between nodes, so every sample is finite.
  Point off{};
  for (int d = 0; d < 4; ++d) off[d] = 0.5 * h;
  off[4] = 0.5 + 0.5 * h;
  const std::vector<GridField> corpus = {
      maps::geodesic(lat, 2.0), maps::geodesic(lat, 1.0), maps::geodesic(lat, 3.0, 1),
      maps::radial_projection(lat, off),
      sample(lat, 3, [](const Point& x, std::span<double> v) {
        const double t = 1.2 * x[0] + 0.8 * x[1] * x[1], s = 0.5 * x[3] + 0.4 * x[4] * x[4];
        v[0] = std::cos(t) * std::cos(s);
        v[1] = std::sin(t) * std::cos(s);
        v[2] = std::sin(s);
      })};
  double lo = 1e300, hi = 0;
  for (const auto& u : corpus) {
    const auto c = check_interpolation(u, scan);
    ASSERT_TRUE(c.ratio.has_value());
    EXPECT_NEAR(c.lhs, c.grad44 * c.grad44, 1e-12 * c.lhs);
    lo = std::min(lo, *c.ratio);
    hi = std::max(hi, *c.ratio);
  }
  EXPECT_LE(hi / lo, 5.0);
}

// Singular set -------------------------------------------------------------------

TEST(SingularSet, ConstantAndSmoothMapsFlagNothing) {
  auto lat = build_domain(DomainSpec::ball(5, 0.5, 1.0 / 16));
  const double r = 0.25;
  for (const auto& u : {maps::constant(lat, {1, 0, 0}), maps::geodesic(lat, 1.0), maps::geodesic(lat, 2.0, 4)}) {
    const auto rep = singular_set(u, 1.0, {r}, 2);
    EXPECT_GT(rep.scanned.size(), 0u);
    EXPECT_TRUE(rep.flagged.empty());
    EXPECT_EQ(rep.diameter, 0.0);
  }
}

TEST(SingularSet, GeodesicDensityMatchesClosedForm) {
  // |∇²u|² = |∇u|⁴ = a⁴ for the great-circle map: density 2a⁴|B₁|r⁴ at interior centres.
  // For a = 3 and r = 1/4 this is 3.3, above ε₀² = 1 although the map is smooth.
  auto lat = build_domain(DomainSpec::ball(5, 0.5, 1.0 / 16));
  const double a = 3.0, r = 0.25;
  const auto rep = singular_set(maps::geodesic(lat, a, 1), 1.0, {r}, 2);
  const double model = 2 * std::pow(a, 4) * ball_volume(5) * std::pow(r, 4);
  ASSERT_FALSE(rep.density.empty());
  for (double d : rep.density) EXPECT_NEAR(d, model, 0.05 * model);
  EXPECT_EQ(rep.flagged.size(), rep.scanned.size());
}

TEST(SingularSet, RadialProjectionFlagsTheOrigin) {
  const double h = 1.0 / 16;
  auto lat = build_domain(DomainSpec::ball(5, 0.5, h));
  const auto u = maps::radial_projection(lat);
  const auto rep = singular_set(u, 1.0, {4 * h}, 1);
  EXPECT_EQ(rep.threshold, 1.0);
  auto flagged = [&](const Index& k) {
    const auto idx = static_cast<std::size_t>(lat->find(k));
    return std::find(rep.flagged.begin(), rep.flagged.end(), idx) != rep.flagged.end();
  };
  EXPECT_TRUE(flagged(Index{}));
  for (int d = 0; d < 5; ++d)
    for (int s : {-1, 1}) {
      Index k{};
      k[d] = s;
      EXPECT_TRUE(flagged(k));
    }
  // At 0 and its lattice neighbours the density is far above the threshold.
  for (std::size_t i = 0; i < rep.scanned.size(); ++i)
    if (norm(lat->coord(lat->index_of(rep.scanned[i])), 5) < 1.01 * h) EXPECT_GT(rep.density[i], 400.0);
  // Monotone in ε₀.
  const auto strict = singular_set(u, 15.0, {4 * h}, 1);
  EXPECT_LT(strict.flagged.size(), rep.flagged.size());
  for (auto i : strict.flagged) EXPECT_NE(std::find(rep.flagged.begin(), rep.flagged.end(), i), rep.flagged.end());
}

TEST(SingularSet, DensityDecaysLikeTheFourthPowerAwayFromTheOrigin) {
  // Away from 0 the density of x/|x| at distance d with r = 4h is about 28|B₁| r⁴/d⁴,
  // so it stays above 1 out to d ≈ 14h; a box domain avoids the origin.
  const double h = 1.0 / 16;
  Point origin{}, extents{};
  origin[0] = 5 * h;
  extents[0] = 10 * h;
  for (int d = 1; d < 5; ++d) {
    origin[d] = -5 * h;
    extents[d] = 10 * h;
  }
  auto lat = build_domain(DomainSpec::box(5, origin, extents, h));
  const auto u = maps::radial_projection(lat);
  const auto rep = singular_set(u, 1.0, {4 * h}, 5);
  const Index kc{5, 5, 5, 5, 5};
  ASSERT_NEAR(lat->coord(kc)[0], 10 * h, 1e-12);
  const auto it = std::find(rep.scanned.begin(), rep.scanned.end(), static_cast<std::size_t>(lat->find(kc)));
  ASSERT_NE(it, rep.scanned.end());
  const double dens = rep.density[static_cast<std::size_t>(it - rep.scanned.begin())];
  const double model = 28 * ball_volume(5) * std::pow(0.4, 4);
  EXPECT_NEAR(dens, model, 0.15 * model);
  EXPECT_GT(dens, 1.0);
}

TEST(SingularSet, Errors) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  const auto u = maps::geodesic(lat, 1.0);
  EXPECT_THROW(singular_set(u, 1.0, {0.25}), ResolutionError);
  EXPECT_THROW(singular_set(u, 0.0, {0.5}), ParameterError);
  EXPECT_THROW(singular_set(u, 1.0, {0.75, 0.5}), ParameterError);
}

// Small-energy hypotheses ----------------------------------------------------------

namespace {

GridField face_map(LatticePtr lat) {
  return sample(lat, 3, [](const Point& x, std::span<double> v) {
    const double t = 1.2 * x[0] + 0.8 * x[1] * x[1];
    v[0] = std::cos(t);
    v[1] = std::sin(t);
    v[2] = 0;
  });
}

// φ pushed towards e₃ by x₃² bump(|x|/w): equal to φ to first order on the face.
GridField lifted(const GridField& phi, double amp, double w) {
  const Lattice& lat = phi.lattice();
  GridField u(phi.lattice_ptr(), 3);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const Point x = lat.coord(lat.index_of(i));
    const double s = amp * x[2] * x[2] * bump(norm(x, 3) / w);
    const double a = phi(i, 0), b = phi(i, 1), len = std::sqrt(a * a + b * b + s * s);
    u(i, 0) = a / len;
    u(i, 1) = b / len;
    u(i, 2) = s / len;
  }
  return u;
}

}  // namespace

TEST(SmallEnergy, IdenticalMapsHoldForAnyThreshold) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  const auto phi = face_map(lat);
  const auto rep = check_small_energy_hypotheses(phi, phi, Point{}, 0.75, 1e-6);
  EXPECT_EQ(rep.hypothesis, 0.0);
  EXPECT_TRUE(rep.holds);
  EXPECT_EQ(rep.lower_energy, 0.0);
  EXPECT_EQ(rep.good_energy, 0.0);
  EXPECT_EQ(rep.quartic, 0.0);
  EXPECT_GE(rep.good_radius, 0.375);
  EXPECT_LE(rep.good_radius, 0.75);
}

TEST(SmallEnergy, MatchesIndependentQuadratureAndFailsForLargePerturbations) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 1.0 / 16));
  const auto phi = face_map(lat);
  const auto u = lifted(phi, 2.0, 0.8);
  const double R = 0.75, n = 3;
  const auto rep = check_small_energy_hypotheses(u, phi, Point{}, R, 0.1);
  GridField v(lat, 3);
  for (std::size_t i = 0; i < v.values().size(); ++i) v.values()[i] = u.values()[i] - phi.values()[i];
  const auto g = gradient(v), H = hessian(v);
  auto sq = [](std::span<const double> a) {
    double s = 0;
    for (double x : a) s += x * x;
    return s;
  };
  const double hess = integrate_density(*lat, Region{Point{}, R, 0.0}, [&](std::size_t i, const Index&) { return sq(H.at(i)); });
  const double grad = integrate_density(*lat, Region{Point{}, R, 0.0}, [&](std::size_t i, const Index&) { return sq(g.at(i)); });
  const double hypothesis = std::pow(R, 4 - n) * (hess + grad / (R * R));
  EXPECT_NEAR(rep.hypothesis, hypothesis, 1e-9 * hypothesis);
  EXPECT_EQ(rep.holds, hypothesis <= 0.01);
  EXPECT_FALSE(rep.holds);
  const double quartic = integrate_density(*lat, Region{Point{}, R / 3, 0.0}, [&](std::size_t i, const Index&) {
    return sq(g.at(i)) * sq(g.at(i));
  });
  EXPECT_NEAR(rep.quartic, std::pow(R, 4 - n) * quartic, 1e-9 * rep.quartic + 1e-15);
  EXPECT_GT(rep.good_energy, 0.0);
  EXPECT_TRUE(check_small_energy_hypotheses(u, phi, Point{}, R, 1e3).holds);
  EXPECT_THROW(check_small_energy_hypotheses(u, phi, Point{}, R, 0.0), ParameterError);
}

// CSV ----------------------------------------------------------------------------

TEST(AnalysisCsv, Headers) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  const auto u = maps::geodesic(lat, 1.0);
  MorreyParams p;
  p.radii = {0.5};
  std::stringstream a, b;
  const auto scan = morrey_scan(pointwise_norm(u), p);
  write_csv(a, scan, 3);
  std::string line;
  std::getline(a, line);
  EXPECT_EQ(line, "x0,x1,x2,radius,value");
  std::size_t rows = 0;
  while (std::getline(a, line)) ++rows;
  EXPECT_EQ(rows, scan.entries.size());
  const auto rep = singular_set(u, 1.0, {0.5});
  write_csv(b, rep, *lat);
  std::getline(b, line);
  EXPECT_EQ(line, "x0,x1,x2,density,flagged");
}
