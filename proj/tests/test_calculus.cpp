#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "biharm/calculus.hpp"
#include "biharm/error.hpp"

using namespace biharm;

namespace {

double norm2(const Point& x, int n) {
  double s = 0;
  for (int d = 0; d < n; ++d) s += x[d] * x[d];
  return s;
}

// Random quadratic polynomial q(x) = c + b.x + x^T A x, with exact derivatives.
struct Quadratic {
  int n;
  double c;
  std::vector<double> b, A;
  explicit Quadratic(int n_, std::uint64_t seed) : n(n_), b(n_), A(n_ * n_) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    c = u(rng);
    for (double& v : b) v = u(rng);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) A[i * n + j] = A[j * n + i] = u(rng);
  }
  double operator()(const Point& x) const {
    double s = c;
    for (int i = 0; i < n; ++i) {
      s += b[i] * x[i];
      for (int j = 0; j < n; ++j) s += A[i * n + j] * x[i] * x[j];
    }
    return s;
  }
  double grad(const Point& x, int i) const {
    double s = b[i];
    for (int j = 0; j < n; ++j) s += 2 * A[i * n + j] * x[j];
    return s;
  }
};

}  // namespace

TEST(Gradient, AffineAndConstantExact) {
  auto lat = build_domain(DomainSpec::half_ball(3, 1.0, 0.125));
  auto f = sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = x[0]; });
  const GridField g = gradient(f);
  auto c = sample(lat, 1, [](const Point&, std::span<double> v) { v[0] = 4.2; });
  const GridField gc = gradient(c);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    if (!g.valid(i)) continue;
    EXPECT_NEAR(g(i, 0), 1.0, 1e-12);
    EXPECT_NEAR(g(i, 1), 0.0, 1e-12);
    EXPECT_NEAR(g(i, 2), 0.0, 1e-12);
    for (double v : gc.at(i)) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(Gradient, QuadraticExactEverywhereSupported) {
  const int n = 3;
  Quadratic q(n, 5);
  auto lat = build_domain(DomainSpec::ball(n, 1.0, 0.125));
  auto f = sample(lat, 1, [&](const Point& x, std::span<double> v) { v[0] = q(x); });
  const GridField g = gradient(f);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < lat->size(); ++i) {
    if (!g.valid(i)) continue;
    ++valid;
    const Point x = lat->coord(i);
    for (int k = 0; k < n; ++k) EXPECT_NEAR(g(i, k), q.grad(x, k), 1e-11);
  }
  EXPECT_GT(valid, lat->size() * 9 / 10);
}

TEST(Gradient, SquaredNormOnInterior) {
  auto lat = build_domain(DomainSpec::ball(2, 1.0, 0.1));
  auto f = sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = norm2(x, 2); });
  const GridField g = gradient(f);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    if (lat->node_class(i) != NodeClass::Interior) continue;
    const Point x = lat->coord(i);
    EXPECT_NEAR(g(i, 0), 2 * x[0], 1e-12);
    EXPECT_NEAR(g(i, 1), 2 * x[1], 1e-12);
  }
}

TEST(Gradient, TooSmallGridThrows) {
  auto lat = build_domain(DomainSpec::box(2, {}, {0.1, 1.0}, 0.1), 1.0);
  GridField f(lat, 1);
  EXPECT_THROW(gradient(f), ResolutionError);
}

TEST(SecondOrder, SquaredNormN5) {
  auto lat = build_domain(DomainSpec::ball(5, 1.0, 0.25));
  auto f = sample(lat, 1, [](const Point& x, std::span<double> v) { v[0] = norm2(x, 5); });
  const GridField lap = laplacian(f);
  const GridField bil = bilaplacian(f);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < lat->size(); ++i) {
    if (lap.valid(i)) EXPECT_NEAR(lap(i, 0), 10.0, 1e-10);
    if (bil.valid(i)) {
      ++checked;
      EXPECT_NEAR(bil(i, 0), 0.0, 1e-8);
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(SecondOrder, CubicBiharmonic) {
  for (int n : {2, 3, 4}) {
    auto lat = build_domain(DomainSpec::ball(n, 1.0, 0.125));
    auto f = sample(lat, 1, [&](const Point& x, std::span<double> v) { v[0] = norm2(x, n) * x[0]; });
    const GridField lap = laplacian(f);
    const GridField bil = bilaplacian(f);
    const Stencil st(lat);
    for (std::size_t i = 0; i < lat->size(); ++i) {
      const Index k = lat->index_of(i);
      bool central = true;
      for (int d = 0; d < n; ++d) central = central && st.second_support(k, d) == Support::Central;
      if (central) EXPECT_NEAR(lap(i, 0), (2 * n + 4) * lat->coord(i)[0], 1e-10);
      if (bil.valid(i)) EXPECT_NEAR(bil(i, 0), 0.0, 1e-7);
    }
  }
}

TEST(SecondOrder, RadialProjectionLaplacian) {
  // Δ(x_i/|x|) = -(n-1) x_i/|x|^3 in n = 5, checked at nodes with |x| near 0.5.
  const int n = 5;
  std::vector<double> err;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    // A box around (0.5, 0, 0, 0, 0) keeps the n = 5 lattice small.
    auto lat = build_domain(DomainSpec::box(n, {0.375, -0.125, -0.125, -0.125, -0.125}, {0.25, 0.25, 0.25, 0.25, 0.25}, h), 2.0);
    auto u = sample(lat, 1, [&](const Point& x, std::span<double> v) {
      const double r = std::sqrt(norm2(x, n));
      v[0] = r > 0 ? x[0] / r : 0.0;
    });
    const GridField lap = laplacian(u);
    double worst = 0;
    for (std::size_t i = 0; i < lat->size(); ++i) {
      const Point x = lat->coord(i);
      const double r = std::sqrt(norm2(x, n));
      if (std::abs(r - 0.5) > 0.02 || lat->node_class(i) != NodeClass::Interior) continue;
      worst = std::max(worst, std::abs(lap(i, 0) + (n - 1) * x[0] / (r * r * r)));
    }
    err.push_back(worst);
  }
  EXPECT_LT(err[1], 0.05);
  EXPECT_GT(err[0] / err[1], 3.0);
}

TEST(SecondOrder, HessianSymmetricAndTraceIsLaplacian) {
  const int n = 3;
  auto lat = build_domain(DomainSpec::half_ball(n, 1.0, 0.125));
  auto f = sample(lat, 2, [](const Point& x, std::span<double> v) {
    v[0] = std::sin(x[0] + 2 * x[1]) * std::exp(x[2]);
    v[1] = x[0] * x[1] * x[2];
  });
  const GridField H = hessian(f);
  const GridField lap = laplacian(f);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    if (!H.valid(i) || !lap.valid(i)) continue;
    for (int c = 0; c < 2; ++c) {
      double tr = 0;
      for (int a = 0; a < n; ++a) {
        tr += H(i, (a * n + a) * 2 + c);
        for (int b = 0; b < n; ++b) EXPECT_EQ(H(i, (a * n + b) * 2 + c), H(i, (b * n + a) * 2 + c));
      }
      EXPECT_NEAR(tr, lap(i, c), 1e-12 * (1 + std::abs(tr)));
    }
  }
}

TEST(SecondOrder, HessianExactOnQuadratics) {
  const int n = 3;
  Quadratic q(n, 9);
  auto lat = build_domain(DomainSpec::half_ball(n, 1.0, 0.125));
  auto f = sample(lat, 1, [&](const Point& x, std::span<double> v) { v[0] = q(x); });
  const GridField H = hessian(f);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    if (!H.valid(i)) continue;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) EXPECT_NEAR(H(i, a * n + b), 2 * q.A[a * n + b], 1e-9);
  }
}

TEST(SecondOrder, BilaplacianIsComposedLaplacianBitExact) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  auto f = sample(lat, 2, [](const Point& x, std::span<double> v) {
    v[0] = std::cos(2 * x[0]) * x[1];
    v[1] = std::exp(x[2] - x[0]);
  });
  const GridField bil = bilaplacian(f);
  const GridField lap2 = laplacian(laplacian(f));
  const Stencil st(lat);
  std::vector<double> local(2);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    const Index k = lat->index_of(i);
    EXPECT_EQ(bil.valid(i), st.two_ring(k));
    if (!bil.valid(i)) continue;
    ASSERT_TRUE(st.bilaplacian_at(f.values().data(), 2, i, k, local.data()));
    for (int c = 0; c < 2; ++c) {
      EXPECT_EQ(bil(i, c), lap2(i, c));
      EXPECT_EQ(local[c], bil(i, c));
    }
  }
}

TEST(SecondOrder, InvalidNodesThrowOnRead) {
  auto lat = build_domain(DomainSpec::ball(2, 1.0, 0.125));
  GridField f(lat, 1, 1.0);
  const GridField bil = bilaplacian(f);
  bool found = false;
  for (std::size_t i = 0; i < lat->size(); ++i)
    if (!bil.valid(i)) {
      found = true;
      EXPECT_THROW(bil.checked(i), MaskedOutError);
      break;
    }
  EXPECT_TRUE(found);
}

TEST(IntegrationByParts, DiscreteSymmetry) {
  // |∫ f Δg − ∫ g Δf| is O(h^2) for f, g vanishing near the boundary of a box.
  std::vector<double> defect;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    auto lat = build_domain(DomainSpec::box(2, {}, {1, 1}, h));
    auto bump = [](double t) { return t > 0.2 && t < 0.8 ? std::pow(std::sin((t - 0.2) / 0.6 * M_PI), 4) : 0.0; };
    auto f = sample(lat, 1, [&](const Point& x, std::span<double> v) { v[0] = bump(x[0]) * bump(x[1]); });
    auto g = sample(lat, 1, [&](const Point& x, std::span<double> v) { v[0] = bump(x[0]) * std::cos(3 * x[1]); });
    for (std::size_t i = 0; i < lat->size(); ++i)
      if (lat->coord(i)[1] < 0.1 || lat->coord(i)[1] > 0.9) g(i, 0) = 0.0;
    const GridField lf = laplacian(f), lg = laplacian(g);
    GridField a(lat, 1), b(lat, 1);
    for (std::size_t i = 0; i < lat->size(); ++i) {
      a(i, 0) = f(i, 0) * lg(i, 0);
      b(i, 0) = g(i, 0) * lf(i, 0);
    }
    defect.push_back(std::abs(integrate(a) - integrate(b)));
  }
  EXPECT_LE(defect[1], 1e-10 + 0.5 * defect[0]);
}

TEST(Bochner, ExactOnQuadratics) {
  for (int n : {2, 3, 4}) {
    auto lat = build_domain(DomainSpec::box(n, {}, {1, 1, 1, 1}, n == 4 ? 0.125 : 0.0625));
    std::vector<Quadratic> qs{Quadratic(n, 1), Quadratic(n, 2)};
    auto v = sample(lat, 2, [&](const Point& x, std::span<double> out) {
      out[0] = qs[0](x);
      out[1] = qs[1](x);
    });
    EXPECT_LE(check_bochner(v), 1e-10) << "n=" << n;
  }
}

TEST(Bochner, ConstantIsZero) {
  auto lat = build_domain(DomainSpec::ball(3, 1.0, 0.125));
  GridField v(lat, 3, 0.3);
  EXPECT_EQ(check_bochner(v), 0.0);
}

TEST(Bochner, SecondOrderConvergenceOnSineField) {
  std::vector<double> res;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    auto lat = build_domain(DomainSpec::box(2, {}, {1, 1}, h));
    auto v = sample(lat, 2, [](const Point& x, std::span<double> out) {
      out[0] = 0.0;
      out[1] = std::sin(x[0]);
    });
    res.push_back(check_bochner(v));
  }
  const double ratio = res[0] / res[1];
  EXPECT_GE(ratio, 3.0);
  EXPECT_LE(ratio, 5.0);
}

TEST(Bochner, MutatedStencilBreaksIdentity) {
  auto lat = build_domain(DomainSpec::box(2, {}, {1, 1}, 1.0 / 16));
  Quadratic q(2, 4);
  auto v = sample(lat, 1, [&](const Point& x, std::span<double> out) { out[0] = q(x); });
  StencilConfig broken;
  broken.mutation = 1e-3;
  EXPECT_GT(check_bochner(v, broken), 1e-6);
}
