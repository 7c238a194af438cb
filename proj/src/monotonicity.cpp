#include "biharm/monotonicity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "biharm/calculus.hpp"
#include "biharm/error.hpp"
#include "biharm/parallel.hpp"

namespace biharm {

namespace {

constexpr std::size_t kGrain = 2048;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

double sqr(double x) { return x * x; }

// Ball radii used by a radius list: each ρ, plus ρ ± h/2 for shell integrals.
struct RadiusPlan {
  std::vector<double> all;
  std::vector<std::size_t> ball, lo, hi;
};

std::size_t slot(std::vector<double>& v, double x) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i] - x) < 1e-12) return i;
  v.push_back(x);
  return v.size() - 1;
}

RadiusPlan plan_radii(const std::vector<double>& radii, double h, std::optional<double> extra = {}) {
  std::vector<double> raw;
  if (extra) raw.push_back(*extra);
  for (double r : radii) {
    raw.push_back(r);
    raw.push_back(r - 0.5 * h);
    raw.push_back(r + 0.5 * h);
  }
  std::sort(raw.begin(), raw.end());
  RadiusPlan p;
  for (double r : raw) slot(p.all, r);
  for (double r : radii) {
    p.ball.push_back(slot(p.all, r));
    p.lo.push_back(slot(p.all, r - 0.5 * h));
    p.hi.push_back(slot(p.all, r + 0.5 * h));
  }
  return p;
}

// Ball integrals for arbitrarily many radii; layout [d * m + j].
std::vector<double> integrals(const Lattice& lat, const Point& c, const std::vector<double>& radii,
                              const std::vector<std::vector<double>>& dens) {
  const std::size_t m = radii.size(), nd = dens.size();
  std::vector<std::span<const double>> views(dens.begin(), dens.end());
  std::vector<double> out(nd * m);
  for (std::size_t b = 0; b < m; b += 64) {
    const std::size_t e = std::min(m, b + 64);
    const auto part = ball_integrals(lat, c, std::span<const double>(radii).subspan(b, e - b), views);
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t j = b; j < e; ++j) out[d * m + j] = part[d * (e - b) + (j - b)];
  }
  return out;
}

void check_radii(const Lattice& lat, const std::vector<double>& radii) {
  const double h = lat.h();
  if (radii.empty()) throw ParameterError("empty radius list");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (radii[i] < 4.0 * h * (1.0 - 1e-12)) throw ResolutionError("radius below 4h");
    if (i > 0 && !(radii[i] > radii[i - 1])) throw ParameterError("radii must strictly increase");
  }
}

struct Jet {
  std::vector<double> grad, hess, lap;  // layouts of the calculus kernels
};

// Fills one scalar array per density for nodes near `c`; `body` maps (jet, y, |y|) to values.
template <class Body>
std::vector<std::vector<double>> densities(const GridField& f, const Point& c, double reach, std::size_t count,
                                           bool need_lap, Body body) {
  const Lattice& lat = f.lattice();
  const int n = lat.dim(), L = f.components();
  const Stencil st(f.lattice_ptr());
  std::vector<std::vector<double>> out(count, std::vector<double>(lat.size(), 0.0));
  const double half = 0.5 * lat.h(), reach2 = sqr(reach) * (1.0 + 1e-9);
  parallel_for(lat.size(), kGrain, [&](std::size_t b, std::size_t e) {
    Jet jet;
    jet.grad.resize(static_cast<std::size_t>(n * L));
    jet.hess.resize(static_cast<std::size_t>(n * n * L));
    jet.lap.resize(static_cast<std::size_t>(L));
    std::vector<double> vals(count);
    lat.for_each_range(b, e, [&](std::size_t idx, const Index& k) {
      const Point x = lat.coord(k);
      Point y{};
      double r2 = 0.0, gap2 = 0.0;
      for (int d = 0; d < n; ++d) {
        y[d] = x[d] - c[d];
        r2 += y[d] * y[d];
        gap2 += sqr(std::max(0.0, std::abs(y[d]) - half));
      }
      // Only nodes whose cell meets the outermost ball carry quadrature weight.
      if (gap2 > reach2) return;
      const double rho = std::sqrt(r2);
      const double* v = f.values().data();
      if (!st.gradient_at(v, L, idx, k, jet.grad.data()) || !st.hessian_at(v, L, idx, k, jet.hess.data()))
        throw MaskedOutError("derivatives unsupported inside the integration ball");
      if (need_lap) {
        std::fill(jet.lap.begin(), jet.lap.end(), 0.0);
        st.laplacian_at(v, L, idx, k, jet.lap.data());
      }
      body(jet, y, rho, vals);
      for (std::size_t d = 0; d < count; ++d) out[d][idx] = vals[d];
    });
  });
  return out;
}

// Contractions of a jet against the position vector y.
struct Contractions {
  double grad_sq = 0;   // |∇u|²
  double radial_sq = 0; // |y^i u_i|²
  double euler_sq = 0;  // Σ_j |u_j + y^i u_ij|²
  double y_u_hess = 0;  // y^i u_j · u_ij
  double hess_sq = 0;   // |∇²u|²
};

Contractions contract(const Jet& jet, const Point& y, int n, int L) {
  Contractions c;
  for (int comp = 0; comp < L; ++comp) {
    double yu = 0.0;
    for (int i = 0; i < n; ++i) yu += y[i] * jet.grad[i * L + comp];
    c.radial_sq += yu * yu;
    for (int j = 0; j < n; ++j) {
      const double uj = jet.grad[j * L + comp];
      c.grad_sq += uj * uj;
      double yh = 0.0;
      for (int i = 0; i < n; ++i) {
        const double hij = jet.hess[(i * n + j) * L + comp];
        yh += y[i] * hij;
        c.hess_sq += hij * hij;
      }
      c.euler_sq += (uj + yh) * (uj + yh);
      c.y_u_hess += uj * yh;
    }
  }
  return c;
}

struct InteriorProfile {
  std::vector<double> energy;  // ∫_{B_ρ}|Δu|², core replaced when configured
  std::vector<double> a1_ball; // ∫_{B_ρ} A1 integrand
  std::vector<double> a2_sphere;
  double core_numeric = 0.0;
};

InteriorProfile interior_profile(const GridField& u, const Point& x, const std::vector<double>& radii,
                                 const CoreExcision& core) {
  const Lattice& lat = u.lattice();
  const int n = lat.dim(), L = u.components();
  const double h = lat.h();
  check_radii(lat, radii);
  if (core.radius > 0.0 && core.radius >= radii.front()) throw ParameterError("core radius must lie below the radii");
  const std::optional<double> extra = core.radius > 0.0 ? std::optional<double>(core.radius) : std::nullopt;
  const RadiusPlan plan = plan_radii(radii, h, extra);
  const double nn = n;
  auto dens = densities(u, x, plan.all.back(), 3, true,
                        [&](const Jet& jet, const Point& y, double rho, std::vector<double>& out) {
                          double lap = 0.0;
                          for (double v : jet.lap) lap += v * v;
                          out[0] = lap;
                          if (rho < 1e-12) {
                            out[1] = out[2] = 0.0;
                            return;
                          }
                          const Contractions c = contract(jet, y, n, L);
                          out[1] = 4.0 * (c.euler_sq / std::pow(rho, nn - 2) + (nn - 2) * c.radial_sq / std::pow(rho, nn));
                          out[2] = 2.0 * (-c.y_u_hess / std::pow(rho, nn - 3) + 2.0 * c.radial_sq / std::pow(rho, nn - 1) -
                                          2.0 * c.grad_sq / std::pow(rho, nn - 3));
                        });
  const std::size_t m = plan.all.size();
  const auto I = integrals(lat, x, plan.all, dens);
  InteriorProfile p;
  double core_value = 0.0;
  if (extra) {
    const auto jc = std::find_if(plan.all.begin(), plan.all.end(),
                                 [&](double r) { return std::abs(r - core.radius) < 1e-12; });
    p.core_numeric = I[static_cast<std::size_t>(jc - plan.all.begin())];
    core_value = core.energy ? *core.energy - p.core_numeric : -p.core_numeric;
  }
  for (std::size_t i = 0; i < radii.size(); ++i) {
    p.energy.push_back(I[plan.ball[i]] + core_value);
    p.a1_ball.push_back(I[m + plan.ball[i]]);
    p.a2_sphere.push_back((I[2 * m + plan.hi[i]] - I[2 * m + plan.lo[i]]) / h);
  }
  return p;
}

void require_interior_margin(const Lattice& lat, const Point& x, double R) {
  if (lat.boundary_distance(x) < R + 2.0 * lat.h() * (1.0 - 1e-12))
    throw ResolutionError("ball must stay 2h inside the domain");
}

}  // namespace

InteriorQuantities interior_quantities(const GridField& u, const Point& x, double r, double R,
                                       const CoreExcision& core) {
  const Lattice& lat = u.lattice();
  if (!(R > r)) throw ParameterError("interior quantities need r < R");
  require_interior_margin(lat, x, R);
  const InteriorProfile p = interior_profile(u, x, {r, R}, core);
  const double e = 4.0 - lat.dim();
  InteriorQuantities q;
  q.scaled_r = std::pow(r, e) * p.energy[0];
  q.scaled_R = std::pow(R, e) * p.energy[1];
  q.delta_E = q.scaled_R - q.scaled_r;
  q.A1 = p.a1_ball[1] - p.a1_ball[0];
  q.A2 = p.a2_sphere[1] - p.a2_sphere[0];
  q.core_numeric = p.core_numeric;
  return q;
}

// Boundary -----------------------------------------------------------------

namespace {

GridField difference(const GridField& u, const GridField& phi) {
  u.require_compatible(phi);
  if (u.components() != phi.components()) throw ParameterError("u and phi differ in components");
  GridField v(u.lattice_ptr(), u.components());
  for (std::size_t i = 0; i < v.values().size(); ++i) v.values()[i] = u.values()[i] - phi.values()[i];
  return v;
}

void require_flat_point(const Lattice& lat, const Point& x0) {
  const DomainSpec& s = lat.spec();
  if (s.shape != Shape::HalfBall) throw DomainError("boundary quantities need a half-ball domain");
  if (std::abs(x0[s.n - 1] - s.center[s.n - 1]) > 1e-9 * s.h) throw DomainError("x0 must lie on the flat face");
}

void require_vanishing_on_face(const GridField& v, const GridField& phi, const Point& x0, double rmax) {
  const Lattice& lat = v.lattice();
  const int n = lat.dim(), L = v.components();
  const double h = lat.h();
  double scale = 1.0;
  for (double p : phi.values()) scale = std::max(scale, std::abs(p));
  const double tol = 10.0 * h * h * scale;
  const Stencil st(v.lattice_ptr());
  const int face = 0;  // half-ball indices start on the flat face
  std::vector<double> dn(static_cast<std::size_t>(L));
  Index klo, khi;
  lat.index_box(x0, rmax + h, klo, khi);
  lat.for_each_in_box(klo, khi, [&](std::size_t idx, const Index& k) {
    if (k[n - 1] != face) return;
    for (int c = 0; c < L; ++c)
      if (std::abs(v(idx, c)) > tol) throw BoundaryDataError("u - phi does not vanish on the flat face");
    if (!st.d1(v.values().data(), L, idx, k, n - 1, dn.data())) return;
    for (double d : dn)
      if (std::abs(d) > tol) throw BoundaryDataError("normal derivative of u - phi does not vanish on the flat face");
  });
}

}  // namespace

BoundaryProfile boundary_profile(const GridField& u, const GridField& phi, const Point& x0,
                                 const std::vector<double>& radii) {
  const Lattice& lat = u.lattice();
  const int n = lat.dim(), L = u.components();
  const double h = lat.h();
  require_flat_point(lat, x0);
  check_radii(lat, radii);
  if (lat.curved_clearance(x0) < radii.back() + 2.0 * h * (1.0 - 1e-12))
    throw ResolutionError("largest radius must stay 2h inside the curved boundary");
  const GridField v = difference(u, phi);
  require_vanishing_on_face(v, phi, x0, radii.back());

  const RadiusPlan plan = plan_radii(radii, h);
  const double nn = n;
  // 0 |∇²v|², 1 A integrand, 2 g integrand, 3 <Δv, ∂_r v>, 4 <∇v, ∂_r ∇v>, 5 |∇v|², 6 σ2 integrand.
  auto dens = densities(v, x0, plan.all.back(), 7, true,
                        [&](const Jet& jet, const Point& y, double rho, std::vector<double>& out) {
                          const Contractions c = contract(jet, y, n, L);
                          out[0] = c.hess_sq;
                          out[5] = c.grad_sq;
                          if (rho < 1e-12) {
                            out[1] = out[2] = out[3] = out[4] = out[6] = 0.0;
                            return;
                          }
                          out[1] = 4.0 * (c.euler_sq / std::pow(rho, nn - 2) + (nn - 2) * c.radial_sq / std::pow(rho, nn));
                          out[2] = 2.0 * c.radial_sq / std::pow(rho, nn - 1) - c.y_u_hess / std::pow(rho, nn - 3) -
                                   2.0 * c.grad_sq / std::pow(rho, nn - 3);
                          double p = 0.0;
                          for (int comp = 0; comp < L; ++comp) {
                            double dr = 0.0;
                            for (int i = 0; i < n; ++i) dr += y[i] * jet.grad[i * L + comp];
                            p += jet.lap[comp] * dr / rho;
                          }
                          out[3] = p;
                          out[4] = c.y_u_hess / rho;
                          out[6] = 2.0 * c.y_u_hess + 3.0 * c.grad_sq - 4.0 * c.radial_sq / (rho * rho);
                        });
  const std::size_t m = plan.all.size();
  const auto I = integrals(lat, x0, plan.all, dens);
  auto ball = [&](int d, std::size_t i) { return I[d * m + plan.ball[i]]; };
  auto sphere = [&](int d, std::size_t i) { return (I[d * m + plan.hi[i]] - I[d * m + plan.lo[i]]) / h; };

  BoundaryProfile p;
  p.center = x0;
  p.radii = radii;
  const std::size_t k = radii.size();
  p.annulus.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double r = radii[i];
    const double s4 = std::pow(r, 4.0 - nn), s3 = std::pow(r, 3.0 - nn);
    p.hess.push_back(s4 * ball(0, i));
    const double g = sphere(2, i), pr = sphere(3, i), q = sphere(4, i), gs = sphere(5, i);
    p.g.push_back(g);
    p.B.push_back(2.0 * g);
    p.f.push_back(s4 * (q - pr));
    p.C.push_back(2.0 * s4 * (pr - q));
    p.sigma1.push_back(s4 * ball(0, i) + s3 * gs);
    p.sigma2.push_back(s3 * sphere(6, i));
    for (std::size_t j = i + 1; j < k; ++j) p.annulus[i * k + j] = ball(1, j) - ball(1, i);
  }
  return p;
}

BoundaryQuantities boundary_quantities(const GridField& u, const GridField& phi, const Point& x0, double r,
                                       double R) {
  if (!(R > r)) throw ParameterError("boundary quantities need r < R");
  const BoundaryProfile p = boundary_profile(u, phi, x0, {r, R});
  BoundaryQuantities q;
  q.A = p.A(0, 1);
  q.B_r = p.B[0];
  q.B_R = p.B[1];
  q.C_r = p.C[0];
  q.C_R = p.C[1];
  q.hess_r = p.hess[0];
  q.hess_R = p.hess[1];
  q.f_r = p.f[0];
  q.f_R = p.f[1];
  q.g_r = p.g[0];
  q.g_R = p.g[1];
  return q;
}

Sigma sigma_decomposition(const GridField& u, const GridField& phi, const Point& x0, double r) {
  const BoundaryProfile p = boundary_profile(u, phi, x0, {r});
  return {p.sigma1[0], p.sigma2[0]};
}

double monotonicity_margin(const BoundaryProfile& p, std::size_t i, std::size_t j, double C) {
  // Both sides divided by e^{CR}; the two exponents of the left side share the constant C.
  const double r = p.radii[i], R = p.radii[j];
  const double lhs = std::exp(-C * R) * (p.hess[i] + p.A(i, j)) + std::exp(C * (r - R)) * (p.B[i] + p.C[i]);
  const double rhs = C * R + p.hess[j] + p.B[j] + p.C[j];
  return rhs - lhs;
}

FitResult fit_monotonicity_constant(const BoundaryProfile& p) {
  const std::size_t k = p.radii.size();
  if (k < 4) throw ParameterError("fitting the monotonicity constant needs at least 4 radii");
  auto holds = [&](double C) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j)
        if (monotonicity_margin(p, i, j, C) < 0.0) return false;
    return true;
  };
  if (holds(0.0)) return {true, 0.0};
  double lo = 0.0, hi = 1000.0;
  if (!holds(hi)) return {false, 0.0};
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? hi : lo) = mid;
  }
  return {true, hi};
}

MonotonicityReport monotonicity_report(const GridField& u, const GridField* phi, const Point& center,
                                       const std::vector<double>& radii, const CoreExcision& core) {
  const Lattice& lat = u.lattice();
  const double h = lat.h();
  check_radii(lat, radii);
  if (lat.curved_clearance(center) < radii.back() + 2.0 * h * (1.0 - 1e-12))
    throw ResolutionError("largest radius must stay 2h inside the curved boundary");
  MonotonicityReport rep;
  rep.center = center;
  rep.radii = radii;
  const std::size_t k = radii.size();
  const double e = 4.0 - lat.dim();

  const bool interior = lat.boundary_distance(center) >= radii.back() + 2.0 * h * (1.0 - 1e-12);
  InteriorProfile ip;
  if (interior) {
    ip = interior_profile(u, center, radii, core);
    for (std::size_t i = 0; i < k; ++i) rep.scaled_energy.push_back(std::pow(radii[i], e) * ip.energy[i]);
  } else {
    // Clipped balls: plain quadrature of |Δu|², one-sided stencils near the faces.
    GridField lap = laplacian(u);
    auto dens = std::vector<std::vector<double>>(1, std::vector<double>(lat.size(), 0.0));
    for (std::size_t i = 0; i < lat.size(); ++i) {
      if (!lap.valid(i)) continue;
      double s = 0.0;
      for (double v : lap.at(i)) s += v * v;
      dens[0][i] = s;
    }
    const auto I = integrals(lat, center, radii, dens);
    for (std::size_t i = 0; i < k; ++i) rep.scaled_energy.push_back(std::pow(radii[i], e) * I[i]);
  }
  std::optional<BoundaryProfile> bp;
  if (phi) {
    bp = boundary_profile(u, *phi, center, radii);
    if (k >= 4) rep.fit = fit_monotonicity_constant(*bp);
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      MonotonicityRow row;
      row.r = radii[i];
      row.R = radii[j];
      row.scaledE_r = rep.scaled_energy[i];
      row.scaledE_R = rep.scaled_energy[j];
      row.A1 = interior ? ip.a1_ball[j] - ip.a1_ball[i] : kNaN;
      row.A2 = interior ? ip.a2_sphere[j] - ip.a2_sphere[i] : kNaN;
      if (bp) {
        row.Abdry = bp->A(i, j);
        row.B_r = bp->B[i];
        row.B_R = bp->B[j];
        row.C_r = bp->C[i];
        row.C_R = bp->C[j];
        row.f_r = bp->f[i];
        row.g_r = bp->g[i];
        row.sigma1 = bp->sigma1[i];
        row.sigma2 = bp->sigma2[i];
      } else {
        row.Abdry = row.B_r = row.B_R = row.C_r = row.C_R = row.f_r = row.g_r = row.sigma1 = row.sigma2 = kNaN;
      }
      row.fittedC = rep.fit && rep.fit->found ? rep.fit->C : kNaN;
      rep.rows.push_back(row);
    }
  return rep;
}

void write_csv(std::ostream& out, const MonotonicityReport& rep) {
  out.precision(17);
  out << "r,R,scaledE_r,scaledE_R,A1,A2,Abdry,B_r,B_R,C_r,C_R,f_r,g_r,sigma1,sigma2,fittedC\n";
  for (const auto& w : rep.rows)
    out << w.r << ',' << w.R << ',' << w.scaledE_r << ',' << w.scaledE_R << ',' << w.A1 << ',' << w.A2 << ','
        << w.Abdry << ',' << w.B_r << ',' << w.B_R << ',' << w.C_r << ',' << w.C_R << ',' << w.f_r << ','
        << w.g_r << ',' << w.sigma1 << ',' << w.sigma2 << ',' << w.fittedC << '\n';
}

void write_csv(const std::string& path, const MonotonicityReport& rep) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  write_csv(out, rep);
}

}  // namespace biharm
