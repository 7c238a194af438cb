#include "biharm/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <utility>

#include "biharm/calculus.hpp"
#include "biharm/error.hpp"
#include "biharm/monotonicity.hpp"
#include "biharm/parallel.hpp"

namespace biharm {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

double sqr(double x) { return x * x; }

std::vector<double> scan_radii(const Lattice& lat, const MorreyParams& p) {
  if (!p.radii.empty()) return p.radii;
  const DomainSpec& s = lat.spec();
  double scale = s.radius;
  if (s.shape == Shape::Box) {
    scale = s.extents[0];
    for (int d = 1; d < s.n; ++d) scale = std::min(scale, s.extents[d]);
  }
  return dyadic_radii(s.h, scale);
}

std::vector<std::size_t> scan_centers(const Lattice& lat, int stride) {
  const int n = lat.dim();
  std::vector<std::size_t> out;
  lat.for_each([&](std::size_t idx, const Index& k) {
    for (int d = 0; d < n; ++d)
      if (((k[d] % stride) + stride) % stride != 0) return;
    out.push_back(idx);
  });
  return out;
}

// Largest prefix of the ascending radius list whose balls about c belong to the scan.
std::size_t fitting(const Lattice& lat, const Point& c, const std::vector<double>& radii, bool clip) {
  const double room = clip ? lat.curved_clearance(c) : lat.boundary_distance(c);
  std::size_t m = 0;
  while (m < radii.size() && radii[m] <= room * (1.0 + 1e-12)) ++m;
  return m;
}

// |f|^p per node, NaN where f is tagged invalid.
std::vector<double> power_density(const GridField& f, double p) {
  const int L = f.components();
  std::vector<double> out(f.nodes());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!f.valid(i)) {
      out[i] = kNaN;
      continue;
    }
    double s = 0.0;
    for (int c = 0; c < L; ++c) s += sqr(f(i, c));
    out[i] = p == 2.0 ? s : std::pow(s, 0.5 * p);
  }
  return out;
}

// Shared driver: `local(center, radii_prefix, values)` fills one value per radius,
// NaN marking a skipped ball.
template <class Local>
NormScan run_scan(const Lattice& lat, const MorreyParams& params, Local&& local) {
  params.validate(lat.dim());
  const auto radii = scan_radii(lat, params);
  const auto centers = scan_centers(lat, params.stride);
  std::vector<std::vector<double>> values(centers.size());
  parallel_for(centers.size(), 16, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      const Point c = lat.coord(lat.index_of(centers[t]));
      const std::size_t m = fitting(lat, c, radii, params.clip);
      if (m == 0) continue;
      values[t].assign(m, 0.0);
      local(c, std::vector<double>(radii.begin(), radii.begin() + static_cast<std::ptrdiff_t>(m)), values[t]);
    }
  });
  NormScan scan;
  bool any = false;
  for (std::size_t t = 0; t < centers.size(); ++t) {
    const Point c = lat.coord(lat.index_of(centers[t]));
    for (std::size_t j = 0; j < values[t].size(); ++j) {
      const double v = values[t][j];
      if (std::isnan(v)) {
        ++scan.skipped;
        continue;
      }
      scan.entries.push_back({c, radii[j], v});
      if (!any || v > scan.value) {
        scan.value = v;
        scan.best = scan.entries.back();
        any = true;
      }
    }
  }
  if (!any) throw ParameterError("norm scan contains no admissible ball");
  return scan;
}

struct Weighted {
  std::size_t idx;
  double w;
};

// Nodes of one ball with their weights; false when an invalid node carries weight.
bool gather(const GridField& f, const Point& c, double r, std::vector<Weighted>& out) {
  out.clear();
  bool ok = true;
  visit_ball(f.lattice(), c, r, [&](std::size_t idx, double w) {
    if (!f.valid(idx)) ok = false;
    out.push_back({idx, w});
  });
  return ok;
}

}  // namespace

void MorreyParams::validate(int n) const {
  if (!(p >= 1.0)) throw ParameterError("Morrey exponent p must be >= 1");
  if (!(lambda > 0.0 && lambda <= n)) throw ParameterError("Morrey λ must lie in (0, n]");
  if (stride < 1) throw ParameterError("centre stride must be >= 1");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ParameterError("scan radii must be positive");
    if (i > 0 && !(radii[i] > radii[i - 1])) throw ParameterError("scan radii must increase");
  }
}

std::vector<double> dyadic_radii(double h, double rmax) {
  std::vector<double> out;
  for (double r = h; r <= rmax * (1.0 + 1e-12); r *= 2.0) out.push_back(r);
  return out;
}

GridField pointwise_norm(const GridField& f) {
  GridField out(f.lattice_ptr(), 1);
  for (std::size_t i = 0; i < f.nodes(); ++i) {
    double s = 0.0;
    for (double v : f.at(i)) s += v * v;
    out(i, 0) = std::sqrt(s);
    if (!f.valid(i)) out.set_valid(i, false);
  }
  return out;
}

// Norms --------------------------------------------------------------------

NormScan morrey_scan(const GridField& f, const MorreyParams& params) {
  const Lattice& lat = f.lattice();
  const double n = lat.dim();
  const auto dens = power_density(f, params.p);
  const std::span<const double> view(dens);
  return run_scan(lat, params, [&](const Point& c, const std::vector<double>& radii, std::vector<double>& out) {
    const auto I = ball_integrals(lat, c, radii, std::span<const std::span<const double>>(&view, 1));
    for (std::size_t j = 0; j < radii.size(); ++j)
      out[j] = std::isnan(I[j]) ? kNaN : std::pow(std::pow(radii[j], params.lambda - n) * I[j], 1.0 / params.p);
  });
}

double morrey_norm(const GridField& f, const MorreyParams& params) { return morrey_scan(f, params).value; }

NormScan weak_morrey_scan(const GridField& f, const MorreyParams& params) {
  const Lattice& lat = f.lattice();
  const double n = lat.dim(), cv = lat.cell_volume();
  const GridField mag = pointwise_norm(f);
  return run_scan(lat, params, [&](const Point& c, const std::vector<double>& radii, std::vector<double>& out) {
    std::vector<Weighted> nodes;
    std::vector<std::pair<double, double>> level;  // (|f|, measure)
    for (std::size_t j = 0; j < radii.size(); ++j) {
      if (!gather(mag, c, radii[j], nodes)) {
        out[j] = kNaN;
        continue;
      }
      level.clear();
      for (const auto& q : nodes) level.emplace_back(mag(q.idx, 0), q.w * cv);
      std::sort(level.begin(), level.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      const double scale = std::pow(radii[j], params.lambda - n);
      double mu = 0.0, best = 0.0;
      for (std::size_t i = 0; i < level.size(); ++i) {
        mu += level[i].second;
        // {|f| > t} for t just below a level value holds every node at or above it.
        if (i + 1 < level.size() && level[i + 1].first == level[i].first) continue;
        best = std::max(best, level[i].first * std::pow(scale * mu, 1.0 / params.p));
      }
      out[j] = best;
    }
  });
}

double weak_morrey_norm(const GridField& f, const MorreyParams& params) { return weak_morrey_scan(f, params).value; }

namespace {

// Ball mean of every component and the moment (Σ w |f - mean|^q) / Σ w.
template <class Moment>
NormScan oscillation_scan(const GridField& f, const MorreyParams& params, Moment&& finish) {
  const Lattice& lat = f.lattice();
  const int L = f.components();
  return run_scan(lat, params, [&](const Point& c, const std::vector<double>& radii, std::vector<double>& out) {
    std::vector<Weighted> nodes;
    std::vector<double> mean(static_cast<std::size_t>(L));
    for (std::size_t j = 0; j < radii.size(); ++j) {
      if (!gather(f, c, radii[j], nodes)) {
        out[j] = kNaN;
        continue;
      }
      std::fill(mean.begin(), mean.end(), 0.0);
      double mass = 0.0;
      for (const auto& q : nodes) {
        mass += q.w;
        for (int k = 0; k < L; ++k) mean[k] += q.w * f(q.idx, k);
      }
      for (double& m : mean) m /= mass;
      out[j] = finish(nodes, mean, mass, radii[j]);
    }
  });
}

double deviation(const GridField& f, std::size_t idx, const std::vector<double>& mean) {
  double s = 0.0;
  for (int k = 0; k < f.components(); ++k) s += sqr(f(idx, k) - mean[k]);
  return std::sqrt(s);
}

}  // namespace

NormScan bmo_scan(const GridField& f, const MorreyParams& params) {
  const Lattice& lat = f.lattice();
  const double n = lat.dim(), cv = lat.cell_volume();
  MorreyParams p = params;
  p.p = 1.0;
  p.lambda = n;  // unused by BMO; keeps validation neutral
  return oscillation_scan(f, p, [&](const std::vector<Weighted>& nodes, const std::vector<double>& mean, double,
                                    double r) {
    double dev = 0.0;
    for (const auto& q : nodes) dev += q.w * deviation(f, q.idx, mean);
    return std::pow(r, -n) * dev * cv;
  });
}

double bmo_seminorm(const GridField& f, const MorreyParams& params) { return bmo_scan(f, params).value; }

double oscillation_moment(const GridField& f, const MorreyParams& params, double q) {
  if (!(q >= 1.0)) throw ParameterError("moment exponent must be >= 1");
  MorreyParams p = params;
  p.p = 1.0;
  p.lambda = f.lattice().dim();
  return oscillation_scan(f, p, [&](const std::vector<Weighted>& nodes, const std::vector<double>& mean, double mass,
                                    double) {
           double s = 0.0;
           for (const auto& w : nodes) s += w.w * std::pow(deviation(f, w.idx, mean), q);
           return std::pow(s / mass, 1.0 / q);
         })
      .value;
}

// Riesz potentials -----------------------------------------------------------

double riesz_self_coefficient(double alpha, int n) {
  if (n < 1 || n > kMaxDim) throw ParameterError("dimension out of range");
  if (!(alpha > 0.0 && alpha < n)) throw ParameterError("Riesz order must lie in (0, n)");
  // The central third of the cube scales to 3^{-α} of the whole integral, so
  // c = (integral over the 3ⁿ - 1 outer subcubes) / (1 - 3^{-α}). The outer
  // subcubes stay 1/6 away from the singularity; Gauss–Legendre handles them.
  static const double x5[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
  static const double w5[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                               0.2369268850561891};
  static const double x3[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static const double w3[3] = {0.5555555555555556, 0.8888888888888888, 0.5555555555555556};
  const bool fine = n <= 5;
  const int g = fine ? 5 : 3;
  const double* gx = fine ? x5 : x3;
  const double* gw = fine ? w5 : w3;
  const double third = 1.0 / 3.0, half = 0.5 * third;
  std::array<int, kMaxDim> sub{}, node{};
  double total = 0.0;
  while (true) {
    bool centre = true;
    for (int d = 0; d < n; ++d) centre = centre && sub[d] == 1;
    if (!centre) {
      node.fill(0);
      while (true) {
        double r2 = 0.0, w = 1.0;
        for (int d = 0; d < n; ++d) {
          const double mid = -0.5 + (sub[d] + 0.5) * third;
          r2 += sqr(mid + half * gx[node[d]]);
          w *= half * gw[node[d]];
        }
        total += w * std::pow(r2, 0.5 * (alpha - n));
        int d = n - 1;
        for (; d >= 0; --d) {
          if (++node[d] < g) break;
          node[d] = 0;
        }
        if (d < 0) break;
      }
    }
    int d = n - 1;
    for (; d >= 0; --d) {
      if (++sub[d] < 3) break;
      sub[d] = 0;
    }
    if (d < 0) break;
  }
  return total / (1.0 - std::pow(3.0, -alpha));
}

namespace {

struct Source {
  std::size_t idx;
  Point x;
  std::vector<double> mass;  // f(y) w_y hⁿ per component
};

std::vector<Source> riesz_sources(const GridField& f) {
  const Lattice& lat = f.lattice();
  const auto& w = lat.domain_weights();
  const int L = f.components();
  std::vector<Source> out;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto v = f.at(i);
    if (w[i] <= 0.0 || std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) continue;
    const auto checked = f.checked(i);
    Source s{i, lat.coord(lat.index_of(i)), std::vector<double>(static_cast<std::size_t>(L))};
    for (int c = 0; c < L; ++c) s.mass[c] = checked[c] * w[i] * lat.cell_volume();
    out.push_back(std::move(s));
  }
  return out;
}

void check_order(double alpha, int n) {
  if (!(alpha > 0.0 && alpha < n)) throw ParameterError("Riesz order must lie in (0, n)");
}

}  // namespace

GridField riesz_potential(const GridField& f, double alpha) {
  const Lattice& lat = f.lattice();
  const int n = lat.dim(), L = f.components();
  check_order(alpha, n);
  const double expo = 0.5 * (alpha - n);
  const double self = riesz_self_coefficient(alpha, n) * std::pow(lat.h(), alpha - n);
  const auto sources = riesz_sources(f);
  GridField out(f.lattice_ptr(), L);
  parallel_for(lat.size(), 256, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Point x = lat.coord(lat.index_of(i));
      auto o = out.at(i);
      for (const auto& s : sources) {
        double k;
        if (s.idx == i) {
          k = self;
        } else {
          double r2 = 0.0;
          for (int d = 0; d < n; ++d) r2 += sqr(x[d] - s.x[d]);
          k = std::pow(r2, expo);
        }
        for (int c = 0; c < L; ++c) o[c] += k * s.mass[c];
      }
    }
  });
  return out;
}

std::vector<double> riesz_potential_at(const GridField& f, double alpha, const Point& x) {
  const Lattice& lat = f.lattice();
  const int n = lat.dim(), L = f.components();
  check_order(alpha, n);
  const double expo = 0.5 * (alpha - n), h = lat.h();
  const double self = riesz_self_coefficient(alpha, n) * std::pow(h, alpha - n);
  std::vector<double> out(static_cast<std::size_t>(L), 0.0);
  for (const auto& s : riesz_sources(f)) {
    double r2 = 0.0;
    for (int d = 0; d < n; ++d) r2 += sqr(x[d] - s.x[d]);
    const double k = r2 < sqr(1e-9 * h) ? self : std::pow(r2, expo);
    for (int c = 0; c < L; ++c) out[c] += k * s.mass[c];
  }
  return out;
}

GridField dilate(const GridField& f, double s) {
  if (!(s > 0.0)) throw ParameterError("dilation factor must be positive");
  const Lattice& lat = f.lattice();
  const int n = lat.dim(), L = f.components();
  const Point base = lat.coord(Index{});
  const double h = lat.h();
  GridField out(f.lattice_ptr(), L);
  std::vector<std::uint8_t> ok(lat.size(), 1);
  parallel_for(lat.size(), 1024, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Point x = lat.coord(lat.index_of(i));
      Index k0{};
      Point t{};
      for (int d = 0; d < n; ++d) {
        const double q = (x[d] / s - base[d]) / h;
        const double fl = std::floor(q);
        k0[d] = static_cast<int>(fl);
        t[d] = q - fl;
      }
      auto o = out.at(i);
      for (int corner = 0; corner < (1 << n); ++corner) {
        Index k = k0;
        double w = 1.0;
        for (int d = 0; d < n; ++d) {
          const bool up = (corner >> d) & 1;
          k[d] += up ? 1 : 0;
          w *= up ? t[d] : 1.0 - t[d];
        }
        if (w == 0.0) continue;
        const std::ptrdiff_t j = lat.find(k);
        if (j < 0) continue;
        if (!f.valid(static_cast<std::size_t>(j))) ok[i] = 0;
        for (int c = 0; c < L; ++c) o[c] += w * f(static_cast<std::size_t>(j), c);
      }
    }
  });
  for (std::size_t i = 0; i < ok.size(); ++i)
    if (!ok[i]) out.set_valid(i, false);
  return out;
}

AdamsCheck check_adams(const GridField& f, const MorreyParams& source, double alpha, const MorreyParams& target,
                       const std::vector<double>& scales) {
  if (scales.empty()) throw ParameterError("empty scale family");
  AdamsCheck out;
  out.scales = scales;
  for (double s : scales) {
    const GridField fs = dilate(f, s);
    const double a = morrey_norm(fs, source);
    if (!(a > 0.0)) throw DegenerateError("source Morrey norm vanishes");
    const double b = morrey_norm(riesz_potential(fs, alpha), target);
    out.source_norms.push_back(a);
    out.target_norms.push_back(b);
    out.ratios.push_back(b / a);
  }
  const auto [lo, hi] = std::minmax_element(out.ratios.begin(), out.ratios.end());
  out.spread = *hi / *lo;
  return out;
}

InterpolationCheck check_interpolation(const GridField& u, const MorreyParams& scan) {
  const GridField g = pointwise_norm(gradient(u));
  const GridField H = pointwise_norm(hessian(u));
  auto with = [&](double p, double lambda) {
    MorreyParams m = scan;
    m.p = p;
    m.lambda = lambda;
    return m;
  };
  InterpolationCheck out;
  out.grad22 = morrey_norm(g, with(2, 2));
  out.grad44 = morrey_norm(g, with(4, 4));
  out.hess24 = morrey_norm(H, with(2, 4));
  out.lhs = sqr(out.grad44);
  out.rhs = out.grad22 * (out.hess24 + out.grad44);
  if (out.rhs > 0.0) out.ratio = out.lhs / out.rhs;
  else if (out.lhs > 0.0) throw DegenerateError("interpolation right side vanishes");
  return out;
}

// Singular set and small-energy hypotheses ------------------------------------

namespace {

// Nodewise |∇²f|², |∇f|² and |∇f|⁴ near c (within `reach` of the cell), NaN without support.
struct EnergyDensities {
  std::vector<double> hess_sq, grad_sq, grad_4;
};

EnergyDensities energy_densities(const GridField& f, const Point* c, double reach) {
  const Lattice& lat = f.lattice();
  const int n = lat.dim(), L = f.components();
  const Stencil st(f.lattice_ptr());
  EnergyDensities out{std::vector<double>(lat.size(), 0.0), std::vector<double>(lat.size(), 0.0),
                      std::vector<double>(lat.size(), 0.0)};
  const double half = 0.5 * lat.h(), reach2 = sqr(reach) * (1.0 + 1e-9);
  parallel_for(lat.size(), 2048, [&](std::size_t b, std::size_t e) {
    std::vector<double> grad(static_cast<std::size_t>(n * L)), hess(static_cast<std::size_t>(n * n * L));
    lat.for_each_range(b, e, [&](std::size_t idx, const Index& k) {
      if (c) {
        const Point x = lat.coord(k);
        double gap2 = 0.0;
        for (int d = 0; d < n; ++d) gap2 += sqr(std::max(0.0, std::abs(x[d] - (*c)[d]) - half));
        if (gap2 > reach2) return;
      }
      const double* v = f.values().data();
      if (!st.gradient_at(v, L, idx, k, grad.data()) || !st.hessian_at(v, L, idx, k, hess.data())) {
        out.hess_sq[idx] = out.grad_sq[idx] = out.grad_4[idx] = kNaN;
        return;
      }
      double g = 0.0, hs = 0.0;
      for (double x : grad) g += x * x;
      for (double x : hess) hs += x * x;
      out.hess_sq[idx] = hs;
      out.grad_sq[idx] = g;
      out.grad_4[idx] = g * g;
    });
  });
  return out;
}

}  // namespace

SingularSetReport singular_set(const GridField& u, double eps0, const std::vector<double>& radii, int stride) {
  const Lattice& lat = u.lattice();
  const int n = lat.dim();
  const double h = lat.h();
  if (!(eps0 > 0.0)) throw ParameterError("ε₀ must be positive");
  if (stride < 1) throw ParameterError("centre stride must be >= 1");
  if (radii.empty()) throw ParameterError("empty radius list");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (radii[i] < 4.0 * h * (1.0 - 1e-12)) throw ResolutionError("singular-set radii must be >= 4h");
    if (i > 0 && !(radii[i] > radii[i - 1])) throw ParameterError("radii must increase");
  }
  SingularSetReport rep;
  rep.threshold = eps0 * eps0;
  rep.radii = radii;

  // Nodes without derivative support (rim nodes lacking one-sided stencils) are
  // excised: they contribute nothing and the centres whose balls meet them are counted.
  const EnergyDensities ed = energy_densities(u, nullptr, 0.0);
  std::vector<double> dens(lat.size()), hole(lat.size(), 0.0);
  for (std::size_t i = 0; i < dens.size(); ++i) {
    dens[i] = ed.hess_sq[i] + ed.grad_4[i];
    if (std::isnan(dens[i])) {
      dens[i] = 0.0;
      hole[i] = 1.0;
    }
  }
  const std::array<std::span<const double>, 2> views{std::span<const double>(dens), std::span<const double>(hole)};

  std::vector<std::size_t> centers;
  for (std::size_t idx : scan_centers(lat, stride))
    if (lat.curved_clearance(lat.coord(lat.index_of(idx))) >= radii.back() * (1.0 + 1e-12)) centers.push_back(idx);
  const std::size_t m = radii.size();
  std::vector<double> value(centers.size());
  std::vector<char> cut(centers.size(), 0);
  parallel_for(centers.size(), 64, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      const auto I = ball_integrals(lat, lat.coord(lat.index_of(centers[t])), radii, views);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        best = std::min(best, std::pow(radii[j], 4.0 - n) * I[j]);
        if (I[m + j] > 0.0) cut[t] = 1;
      }
      value[t] = best;
    }
  });
  for (std::size_t t = 0; t < centers.size(); ++t) {
    rep.excised += static_cast<std::size_t>(cut[t]);
    rep.scanned.push_back(centers[t]);
    rep.density.push_back(value[t]);
    if (value[t] >= rep.threshold) rep.flagged.push_back(centers[t]);
  }
  for (std::size_t a = 0; a < rep.flagged.size(); ++a) {
    const Point x = lat.coord(lat.index_of(rep.flagged[a]));
    for (std::size_t b = a + 1; b < rep.flagged.size(); ++b) {
      const Point y = lat.coord(lat.index_of(rep.flagged[b]));
      double d2 = 0.0;
      for (int d = 0; d < n; ++d) d2 += sqr(x[d] - y[d]);
      rep.diameter = std::max(rep.diameter, std::sqrt(d2));
    }
  }
  return rep;
}

SmallEnergyReport check_small_energy_hypotheses(const GridField& u, const GridField& phi, const Point& x0, double R,
                                                double eps0, int samples) {
  const Lattice& lat = u.lattice();
  const double n = lat.dim();
  if (!(eps0 > 0.0)) throw ParameterError("ε₀ must be positive");
  if (samples < 2 || samples > 60) throw ParameterError("good-radius samples must lie in [2, 60]");
  std::vector<double> rho(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) rho[i] = 0.5 * R * (1.0 + static_cast<double>(i) / (samples - 1));
  // Validates x0, the data on the face and the radius constraints.
  const BoundaryProfile prof = boundary_profile(u, phi, x0, rho);
  const std::size_t g = static_cast<std::size_t>(
      std::min_element(prof.sigma1.begin(), prof.sigma1.end()) - prof.sigma1.begin());

  GridField v(u.lattice_ptr(), u.components());
  for (std::size_t i = 0; i < v.values().size(); ++i) v.values()[i] = u.values()[i] - phi.values()[i];
  const EnergyDensities ed = energy_densities(v, &x0, R);
  const std::span<const double> views[3] = {ed.hess_sq, ed.grad_sq, ed.grad_4};
  std::vector<double> radii{R / 3.0, rho[g]};
  if (rho[g] < R) radii.push_back(R);
  const auto I = ball_integrals(lat, x0, radii, views);
  const std::size_t m = radii.size(), iR = m - 1;
  auto at = [&](int d, std::size_t j) { return I[d * m + j]; };
  for (double x : I)
    if (std::isnan(x)) throw MaskedOutError("derivatives unsupported inside the ball");

  SmallEnergyReport rep;
  rep.R = R;
  rep.threshold = eps0 * eps0;
  rep.hypothesis = std::pow(R, 4.0 - n) * (at(0, iR) + at(1, iR) / (R * R));
  rep.holds = rep.hypothesis <= rep.threshold;
  rep.lower_energy = std::pow(R, 4.0 - n) * at(0, 0) + std::pow(R, 2.0 - n) * at(1, 0);
  rep.good_radius = rho[g];
  rep.good_sigma1 = prof.sigma1[g];
  rep.good_energy = std::pow(rho[g], 4.0 - n) * at(0, 1) + std::pow(rho[g], 2.0 - n) * at(1, 1);
  rep.quartic = std::pow(R, 4.0 - n) * at(2, 0);
  return rep;
}

// CSV ----------------------------------------------------------------------

void write_csv(std::ostream& out, const NormScan& scan, int n) {
  out.precision(17);
  for (int d = 0; d < n; ++d) out << 'x' << d << ',';
  out << "radius,value\n";
  for (const auto& e : scan.entries) {
    for (int d = 0; d < n; ++d) out << e.center[d] << ',';
    out << e.radius << ',' << e.value << '\n';
  }
}

void write_csv(const std::string& path, const NormScan& scan, int n) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  write_csv(out, scan, n);
}

void write_csv(std::ostream& out, const SingularSetReport& rep, const Lattice& lat) {
  const int n = lat.dim();
  out.precision(17);
  for (int d = 0; d < n; ++d) out << 'x' << d << ',';
  out << "density,flagged\n";
  for (std::size_t i = 0; i < rep.scanned.size(); ++i) {
    const Point x = lat.coord(lat.index_of(rep.scanned[i]));
    for (int d = 0; d < n; ++d) out << x[d] << ',';
    out << rep.density[i] << ',' << (rep.density[i] >= rep.threshold ? 1 : 0) << '\n';
  }
}

void write_csv(const std::string& path, const SingularSetReport& rep, const Lattice& lat) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  write_csv(out, rep, lat);
}

}  // namespace biharm
