#include "biharm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "biharm/error.hpp"
#include "biharm/manifold.hpp"
#include "biharm/parallel.hpp"

namespace biharm {

namespace {

constexpr std::size_t kGrain = 4096;
constexpr double kUnitDrift = 1e-6;

void require_sphere_valued(const GridField& u, const char* what) {
  for (std::size_t i = 0; i < u.nodes(); ++i) {
    double s = 0.0;
    for (double v : u.at(i)) s += v * v;
    if (std::abs(std::sqrt(s) - 1.0) > kUnitDrift)
      throw ConstraintError(std::string(what) + " is not sphere-valued within 1e-6");
  }
}

}  // namespace

void SolveConfig::validate(double h) const {
  if (tau < 0.0) throw ParameterError("tau must be positive");
  if (tau > std::pow(h, 4) / 16.0 * (1.0 + 1e-12))
    throw ParameterError("tau exceeds the explicit stability bound h^4/16");
  if (max_iters < 0) throw ParameterError("max_iters must be non-negative");
  if (!(tol > 0.0)) throw ParameterError("tol must be positive");
  if (!(lin_tol > 0.0)) throw ParameterError("lin_tol must be positive");
  if (lin_max_iters <= 0) throw ParameterError("lin_max_iters must be positive");
}

// ClampedSystem ------------------------------------------------------------

ClampedSystem::ClampedSystem(LatticePtr lattice) : lattice_(std::move(lattice)) {
  const Lattice& lat = *lattice_;
  const int n = lat.dim();
  const Stencil st(lattice_);
  free_.assign(lat.size(), 0);
  std::vector<std::uint8_t> central(lat.size(), 0);
  lat.for_each([&](std::size_t idx, const Index& k) {
    bool c = true;
    for (int a = 0; a < n && c; ++a) c = st.neighbor(k, a, -1) >= 0 && st.neighbor(k, a, 1) >= 0;
    central[idx] = c;
    free_[idx] = st.two_ring(k);
  });
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (central[i]) central_nodes_.push_back(i);
    if (free_[i]) free_nodes_.push_back(i);
  }
  auto fill = [&](const std::vector<std::size_t>& nodes, std::vector<std::int64_t>& nbrs) {
    nbrs.resize(nodes.size() * 2 * n);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const Index k = lat.index_of(nodes[j]);
      for (int a = 0; a < n; ++a) {
        nbrs[j * 2 * n + 2 * a] = st.neighbor(k, a, -1);
        nbrs[j * 2 * n + 2 * a + 1] = st.neighbor(k, a, 1);
      }
    }
  };
  fill(central_nodes_, central_nbrs_);
  fill(free_nodes_, free_nbrs_);
  const double h4 = std::pow(lat.h(), 4);
  diag_ = (4.0 * n * n + 2.0 * n) / h4;
}

namespace {

// Central Laplacian of node-major data at the listed nodes, written into `out`.
void star_laplacian(const std::vector<std::size_t>& nodes, const std::vector<std::int64_t>& nbrs, int n,
                    double h, const double* f, int L, double* out) {
  const double c = 1.0 / (h * h);
  parallel_for(nodes.size(), kGrain, [&](std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) {
      const std::size_t i = nodes[j];
      const std::int64_t* nb = nbrs.data() + j * 2 * n;
      for (int comp = 0; comp < L; ++comp) {
        const double f0 = f[i * L + comp];
        double acc = 0.0;
        for (int a = 0; a < n; ++a) acc += c * f[nb[2 * a] * L + comp] + (-2.0 * c) * f0 + c * f[nb[2 * a + 1] * L + comp];
        out[i * L + comp] = acc;
      }
    }
  });
}

}  // namespace

void ClampedSystem::apply(const std::vector<double>& x, std::vector<double>& y) const {
  const int n = lattice_->dim();
  thread_local std::vector<double> lap;
  lap.assign(x.size(), 0.0);
  star_laplacian(central_nodes_, central_nbrs_, n, lattice_->h(), x.data(), 1, lap.data());
  y.assign(x.size(), 0.0);
  star_laplacian(free_nodes_, free_nbrs_, n, lattice_->h(), lap.data(), 1, y.data());
}

double ClampedSystem::stencil_energy(const GridField& v) const {
  const int n = lattice_->dim();
  const int L = v.components();
  std::vector<double> lap(v.values().size(), 0.0);
  star_laplacian(central_nodes_, central_nbrs_, n, lattice_->h(), v.values().data(), L, lap.data());
  const double s = parallel_sum(central_nodes_.size(), kGrain, [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t j = b; j < e; ++j)
      for (int c = 0; c < L; ++c) acc += lap[central_nodes_[j] * L + c] * lap[central_nodes_[j] * L + c];
    return acc;
  });
  return s * lattice_->cell_volume();
}

// Linear solve -------------------------------------------------------------

LinearStats solve_clamped(const ClampedSystem& sys, const std::vector<double>& b, std::vector<double>& x,
                          double tol, int max_iters) {
  const auto& nodes = sys.free_nodes();
  const std::size_t N = b.size();
  auto dot = [&](const std::vector<double>& p, const std::vector<double>& q) {
    return parallel_sum(nodes.size(), kGrain, [&](std::size_t lo, std::size_t hi) {
      double s = 0.0;
      for (std::size_t j = lo; j < hi; ++j) s += p[nodes[j]] * q[nodes[j]];
      return s;
    });
  };
  LinearStats stats;
  std::vector<double> xf(N, 0.0), r(N, 0.0), z(N, 0.0), p(N, 0.0), Ap;
  for (std::size_t i : nodes) xf[i] = x[i];
  sys.apply(xf, Ap);
  for (std::size_t i : nodes) r[i] = b[i] - Ap[i];
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    for (std::size_t i : nodes) x[i] = 0.0;
    return stats;
  }
  const double inv_diag = 1.0 / sys.diagonal();
  for (std::size_t i : nodes) p[i] = z[i] = r[i] * inv_diag;
  double rz = dot(r, z);
  double rel = std::sqrt(dot(r, r)) / bnorm;
  stats.history.push_back(rel);
  int it = 0;
  while (rel > tol) {
    if (it >= max_iters) {
      throw SolverError("clamped solve did not reach relative residual " + std::to_string(tol) +
                            " (reached " + std::to_string(rel) + ")",
                        stats.history);
    }
    sys.apply(p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) throw SolverError("clamped operator lost positivity", stats.history);
    const double alpha = rz / pAp;
    for (std::size_t i : nodes) {
      xf[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
      z[i] = r[i] * inv_diag;
    }
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i : nodes) p[i] = z[i] + beta * p[i];
    rel = std::sqrt(dot(r, r)) / bnorm;
    stats.history.push_back(rel);
    ++it;
  }
  for (std::size_t i : nodes) x[i] = xf[i];
  stats.iterations = it;
  stats.relative_residual = rel;
  return stats;
}

// Energies and residual ----------------------------------------------------

double hessian_energy(const GridField& u) {
  const Lattice& lat = u.lattice();
  const Stencil st(u.lattice_ptr());
  const int L = u.components();
  const auto& w = lat.domain_weights();
  const double s = parallel_sum(lat.size(), kGrain, [&](std::size_t b, std::size_t e) {
    std::vector<double> lap(static_cast<std::size_t>(L));
    double acc = 0.0;
    lat.for_each_range(b, e, [&](std::size_t idx, const Index& k) {
      if (w[idx] <= 0.0 || !st.laplacian_at(u.values().data(), L, idx, k, lap.data())) return;
      double q = 0.0;
      for (double v : lap) q += v * v;
      acc += w[idx] * q;
    });
    return acc;
  });
  return s * lat.cell_volume();
}

double hessian_energy(const GridField& u, const Region& region) {
  const Stencil st(u.lattice_ptr());
  const int L = u.components();
  std::vector<double> lap(static_cast<std::size_t>(L));
  return integrate_density(u.lattice(), region, [&](std::size_t idx, const Index& k) {
    if (!st.laplacian_at(u.values().data(), L, idx, k, lap.data()))
      throw MaskedOutError("Laplacian unsupported inside the energy region");
    double q = 0.0;
    for (double v : lap) q += v * v;
    return q;
  });
}

double hessian_frobenius_energy(const GridField& u) {
  // Forward differences D_a^+ D_b^+ on every cell where all four corners exist. On
  // perturbations supported on free nodes this form agrees with E_S by summation by parts.
  const Lattice& lat = u.lattice();
  const int L = u.components();
  const int n = lat.dim();
  const double* v = u.values().data();
  const double s = parallel_sum(lat.size(), kGrain, [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    lat.for_each_range(b, e, [&](std::size_t idx, const Index& k) {
      for (int a = 0; a < n; ++a) {
        Index ka = k;
        ka[a] += 1;
        const std::ptrdiff_t ia = lat.find(ka);
        if (ia < 0) continue;
        for (int c = a; c < n; ++c) {
          Index kc = k, kac = ka;
          kc[c] += 1;
          kac[c] += 1;
          const std::ptrdiff_t ic = lat.find(kc), iac = lat.find(kac);
          if (ic < 0 || iac < 0) continue;
          double q = 0.0;
          for (int m = 0; m < L; ++m) {
            const double d = v[iac * L + m] - v[ia * L + m] - v[ic * L + m] + v[idx * L + m];
            q += d * d;
          }
          acc += (a == c ? 1.0 : 2.0) * q;
        }
      }
    });
    return acc;
  });
  return s * lat.cell_volume() / std::pow(lat.h(), 4);
}

GridField residual(const GridField& u) {
  require_sphere_valued(u, "map");
  const ClampedSystem sys(u.lattice_ptr());
  const int L = u.components();
  GridField out(u.lattice_ptr(), L);
  const Stencil st(u.lattice_ptr());
  parallel_for(u.nodes(), kGrain, [&](std::size_t b, std::size_t e) {
    std::vector<double> d(static_cast<std::size_t>(L));
    u.lattice().for_each_range(b, e, [&](std::size_t idx, const Index& k) {
      if (!sys.is_free(idx)) return;
      st.bilaplacian_at(u.values().data(), L, idx, k, d.data());
      double c = 0.0;
      for (int j = 0; j < L; ++j) c += d[j] * u(idx, j);
      for (int j = 0; j < L; ++j) out(idx, j) = d[j] - c * u(idx, j);
    });
  });
  for (std::size_t i = 0; i < u.nodes(); ++i)
    if (!sys.is_free(i)) out.set_valid(i, false);
  return out;
}

// Gradient flow ------------------------------------------------------------

namespace {

double sup_norm_free(const ClampedSystem& sys, const std::vector<double>& v, int L) {
  double m = 0.0;
  for (std::size_t i : sys.free_nodes()) {
    double s = 0.0;
    for (int c = 0; c < L; ++c) s += v[i * L + c] * v[i * L + c];
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

}  // namespace

FlowResult minimize(const GridField& phi, const SolveConfig& cfg, const std::optional<GridField>& initial) {
  const Lattice& lat = phi.lattice();
  cfg.validate(lat.h());
  require_sphere_valued(phi, "boundary data");
  const ClampedSystem sys(phi.lattice_ptr());
  const int L = phi.components();

  GridField u = initial ? *initial : phi;
  u.require_compatible(phi);
  if (u.components() != L) throw ParameterError("initial guess has the wrong number of components");
  const SphereTarget target(L);
  for (std::size_t i = 0; i < u.nodes(); ++i) {
    if (!sys.is_free(i)) {
      std::copy(phi.at(i).begin(), phi.at(i).end(), u.at(i).begin());
    } else {
      target.project(u.at(i), u.at(i));
    }
  }

  auto tangential_residual = [&](const GridField& v) {
    const GridField r = residual(v);
    return std::vector<double>(r.values());
  };

  FlowResult result;
  double tau = cfg.step_for(lat.h());
  double energy = sys.stencil_energy(u);
  std::vector<double> r = tangential_residual(u);
  double res = sup_norm_free(sys, r, L);
  result.initial_energy = energy;
  result.history.push_back({0, energy, res, tau, true});

  const double tau_floor = std::pow(lat.h(), 4) * 1e-12;
  GridField trial = u;
  int it = 0;
  while (res > cfg.tol && it < cfg.max_iters && tau > tau_floor) {
    ++it;
    for (std::size_t i : sys.free_nodes()) {
      for (int c = 0; c < L; ++c) trial(i, c) = u(i, c) - tau * r[i * L + c];
      target.project(trial.at(i), trial.at(i));
    }
    const double e_new = sys.stencil_energy(trial);
    if (e_new <= energy) {
      std::swap(u, trial);
      energy = e_new;
      r = tangential_residual(u);
      res = sup_norm_free(sys, r, L);
      result.history.push_back({it, energy, res, tau, true});
    } else {
      tau *= 0.5;
      result.history.push_back({it, e_new, res, tau, false});
      for (std::size_t i : sys.free_nodes())
        std::copy(u.at(i).begin(), u.at(i).end(), trial.at(i).begin());
    }
  }
  result.converged = res <= cfg.tol;
  result.iterations = it;
  result.final_energy = energy;
  result.final_residual = res;
  result.u = std::move(u);
  return result;
}

// Clamped extensions and Green functions ----------------------------------

GridField biharmonic_extend(const GridField& clamp, const SolveConfig& cfg, LinearStats* stats) {
  const ClampedSystem sys(clamp.lattice_ptr());
  if (sys.free_count() == 0) throw ResolutionError("domain has no free nodes for the clamped solve");
  const int L = clamp.components();
  const std::size_t N = clamp.nodes();
  GridField out = clamp;
  out.clear_tags();
  LinearStats total;
  std::vector<double> g(N), b(N), Ag, x(N, 0.0);
  for (int c = 0; c < L; ++c) {
    for (std::size_t i = 0; i < N; ++i) g[i] = sys.is_free(i) ? 0.0 : clamp(i, c);
    sys.apply(g, Ag);
    for (std::size_t i = 0; i < N; ++i) b[i] = sys.is_free(i) ? -Ag[i] : 0.0;
    std::fill(x.begin(), x.end(), 0.0);
    const LinearStats s = solve_clamped(sys, b, x, cfg.lin_tol, cfg.lin_max_iters);
    total.iterations += s.iterations;
    total.relative_residual = std::max(total.relative_residual, s.relative_residual);
    total.history.insert(total.history.end(), s.history.begin(), s.history.end());
    for (std::size_t i : sys.free_nodes()) out(i, c) = x[i];
  }
  if (stats) *stats = std::move(total);
  return out;
}

GridField green_function(LatticePtr domain, const Index& source, const SolveConfig& cfg, LinearStats* stats) {
  const ClampedSystem sys(domain);
  const std::ptrdiff_t at = domain->find(source);
  if (at < 0 || !sys.is_free(static_cast<std::size_t>(at)))
    throw DomainError("Green source must be a node with full 2-ring support");
  const std::size_t N = domain->size();
  std::vector<double> b(N, 0.0), x(N, 0.0);
  b[static_cast<std::size_t>(at)] = 1.0 / domain->cell_volume();
  const LinearStats s = solve_clamped(sys, b, x, cfg.lin_tol, cfg.lin_max_iters);
  if (stats) *stats = s;
  GridField G(domain, 1);
  G.values() = std::move(x);
  return G;
}

GreenTable green_table(LatticePtr domain, const std::vector<Index>& sources, const SolveConfig& cfg) {
  GreenTable t;
  t.domain = domain->spec();
  t.sources = sources;
  for (const Index& s : sources) t.values.push_back(green_function(domain, s, cfg));
  return t;
}

DecayFit fit_green_decay(const GridField& G, const Index& source, double r_min, double r_max) {
  const Lattice& lat = G.lattice();
  const Point c = lat.coord(source);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, lo = std::numeric_limits<double>::infinity(), hi = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const Point x = lat.coord(i);
    double d2 = 0.0;
    for (int a = 0; a < lat.dim(); ++a) d2 += (x[a] - c[a]) * (x[a] - c[a]);
    const double r = std::sqrt(d2);
    const double g = std::abs(G(i, 0));
    if (r < r_min || r > r_max || g == 0.0) continue;
    const double lx = std::log(r), ly = std::log(g);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    ++m;
  }
  if (m < 2 || hi - lo < 1e-12) throw DegenerateError("decay fit needs at least two distinct radii");
  DecayFit f;
  f.samples = m;
  const double mm = static_cast<double>(m);
  f.slope = (mm * sxy - sx * sy) / (mm * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / mm;
  return f;
}

// Inner variations ---------------------------------------------------------

void interpolate(const GridField& u, const Point& x, std::span<double> out) {
  const Lattice& lat = u.lattice();
  const DomainSpec& s = lat.spec();
  const int n = s.n;
  const int L = u.components();
  const Point& base = s.shape == Shape::Box ? s.origin : s.center;
  Index k0{};
  Point frac{};
  for (int d = 0; d < n; ++d) {
    const double q = (x[d] - base[d]) / s.h;
    k0[d] = static_cast<int>(std::floor(q));
    frac[d] = q - k0[d];
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    Index k = k0;
    for (int d = 0; d < n; ++d) {
      const bool up = (corner >> d) & 1;
      w *= up ? frac[d] : 1.0 - frac[d];
      k[d] += up ? 1 : 0;
    }
    if (w == 0.0) continue;
    const std::ptrdiff_t idx = lat.find(k);
    if (idx < 0) throw DomainError("interpolation point leaves the lattice");
    for (int c = 0; c < L; ++c) out[c] += w * u(static_cast<std::size_t>(idx), c);
  }
}

double inner_variation_derivative(const GridField& u, const PointFn& Y) {
  const Lattice& lat = u.lattice();
  const int n = lat.dim();
  const int L = u.components();
  const double h = lat.h();
  const double t = h * h;
  const Stencil st(u.lattice_ptr());

  std::vector<std::size_t> support;
  std::vector<Point> shift;
  std::vector<double> y(static_cast<std::size_t>(n));
  lat.for_each([&](std::size_t idx, const Index& k) {
    std::fill(y.begin(), y.end(), 0.0);
    Y(lat.coord(k), y);
    double s = 0.0;
    for (double v : y) s += v * v;
    if (s == 0.0) return;
    if (lat.node_class(idx) != NodeClass::Interior || !st.two_ring(k))
      throw DomainError("variation field touches the boundary layers");
    Point p{};
    for (int d = 0; d < n; ++d) p[d] = y[d];
    support.push_back(idx);
    shift.push_back(p);
  });
  if (support.empty()) return 0.0;

  // Nodes whose Laplacian sees the support.
  std::vector<std::uint8_t> touched(lat.size(), 0);
  for (std::size_t idx : support) {
    touched[idx] = 1;
    const Index k = lat.index_of(idx);
    for (int a = 0; a < n; ++a)
      for (int s : {-1, 1}) {
        const std::ptrdiff_t j = st.neighbor(k, a, s);
        if (j >= 0) touched[static_cast<std::size_t>(j)] = 1;
      }
  }

  auto energy = [&](double sign) {
    GridField v = u;
    std::vector<double> val(static_cast<std::size_t>(L));
    for (std::size_t j = 0; j < support.size(); ++j) {
      Point x = lat.coord(support[j]);
      for (int d = 0; d < n; ++d) x[d] += sign * t * shift[j][d];
      interpolate(u, x, val);
      std::copy(val.begin(), val.end(), v.at(support[j]).begin());
    }
    const auto& w = lat.domain_weights();
    double e = 0.0;
    std::vector<double> lap(static_cast<std::size_t>(L));
    for (std::size_t i = 0; i < lat.size(); ++i) {
      if (!touched[i]) continue;
      const Index k = lat.index_of(i);
      if (!st.laplacian_at(v.values().data(), L, i, k, lap.data()))
        throw DomainError("variation reaches nodes without Laplacian support");
      double q = 0.0;
      for (double z : lap) q += z * z;
      e += w[i] * q;
    }
    return e * lat.cell_volume();
  };
  return (energy(1.0) - energy(-1.0)) / (2.0 * t);
}

void write_csv(std::ostream& out, const FlowResult& result) {
  out << "iteration,energy,residual,tau\n" << std::setprecision(17);
  for (const auto& rec : result.history)
    if (rec.accepted) out << rec.iteration << ',' << rec.energy << ',' << rec.residual << ',' << rec.tau << '\n';
}

void write_csv(const std::string& path, const FlowResult& result) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open '" + path + "' for writing");
  write_csv(out, result);
}

}  // namespace biharm
