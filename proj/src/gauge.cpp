#include "biharm/gauge.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "biharm/calculus.hpp"
#include "biharm/error.hpp"
#include "biharm/manifold.hpp"
#include "biharm/parallel.hpp"
#include "biharm/solver.hpp"

namespace biharm {

namespace {

constexpr int kMaxL = 8;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor, kMaxL, kMaxL>;
using MapC = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MapM = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double sqr(double x) { return x * x; }

// Rotation maximizing tr(Rᵀ M); `ok` is false when M is numerically singular.
Mat project_so(const Mat& M, bool* ok = nullptr) {
  const int l = static_cast<int>(M.rows());
  if (l == 2) {
    // tr(Rᵀ M) = cos t (a + d) + sin t (c - b) for R the rotation by t.
    const double x = M(0, 0) + M(1, 1), y = M(1, 0) - M(0, 1);
    const double r = std::hypot(x, y);
    if (ok) *ok = r > 1e-12 * (M.norm() + 1e-300);
    Mat R(2, 2);
    const double c = r > 0 ? x / r : 1.0, s = r > 0 ? y / r : 0.0;
    R << c, -s, s, c;
    return R;
  }
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (ok) *ok = sv(l - 1) > 1e-10 * (sv(0) + 1e-300);
  Mat D = Mat::Identity(l, l);
  D(l - 1, l - 1) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

// Cayley transform (I - X/2)⁻¹(I + X/2): orthogonal for antisymmetric X.
Mat cayley(const Mat& X) {
  const int l = static_cast<int>(X.rows());
  const Mat I = Mat::Identity(l, l);
  return (I - 0.5 * X).partialPivLu().solve(I + 0.5 * X);
}

Mat node_matrix(const GridField& f, std::size_t idx, int l, int offset = 0) {
  return MapC(f.at(idx).data() + offset, l, l);
}

// Forward edges (x, x + h e_k) with both endpoints valid and their transports.
struct Edges {
  int n = 0, l = 0;
  std::vector<std::ptrdiff_t> fwd, bwd;  // [idx * n + k]
  std::vector<double> V;                 // transport of the forward edge at idx, l*l each
  const double* transport(std::size_t idx, int k) const {
    return V.data() + (idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)) * l * l;
  }
};

Edges build_edges(const ConnectionField& omega) {
  const GridField& w = omega.omega;
  const Lattice& lat = w.lattice();
  const int n = lat.dim(), l = omega.l;
  const double h = lat.h();
  Edges e;
  e.n = n;
  e.l = l;
  e.fwd.assign(lat.size() * n, -1);
  e.bwd.assign(lat.size() * n, -1);
  e.V.assign(lat.size() * n * l * l, 0.0);
  parallel_for(lat.size(), 1024, [&](std::size_t b, std::size_t end) {
    lat.for_each_range(b, end, [&](std::size_t idx, const Index& k) {
      if (!w.valid(idx)) return;
      for (int a = 0; a < n; ++a) {
        Index q = k;
        ++q[a];
        const std::ptrdiff_t j = lat.find(q);
        if (j < 0 || !w.valid(static_cast<std::size_t>(j))) continue;
        const Mat X = -0.5 * h *
                      (node_matrix(w, idx, l, ConnectionField::component(l, a, 0, 0)) +
                       node_matrix(w, static_cast<std::size_t>(j), l, ConnectionField::component(l, a, 0, 0)));
        MapM(e.V.data() + (idx * n + a) * l * l, l, l) = cayley(X);
        e.fwd[idx * n + a] = j;
      }
    });
  });
  // Backward links mirror the forward ones; written serially to stay race-free.
  for (std::size_t idx = 0; idx < lat.size(); ++idx)
    for (int a = 0; a < n; ++a)
      if (const auto j = e.fwd[idx * n + a]; j >= 0) e.bwd[static_cast<std::size_t>(j) * n + a] = static_cast<std::ptrdiff_t>(idx);
  return e;
}

double edge_energy(const Edges& e, const GridField& P, double h) {
  const Lattice& lat = P.lattice();
  const int n = e.n, l = e.l;
  const double sum = parallel_sum(lat.size(), 1024, [&](std::size_t b, std::size_t end) {
    double s = 0.0;
    for (std::size_t idx = b; idx < end; ++idx)
      for (int a = 0; a < n; ++a) {
        const auto j = e.fwd[idx * n + a];
        if (j < 0) continue;
        const Mat D = node_matrix(P, static_cast<std::size_t>(j), l) - node_matrix(P, idx, l) * MapC(e.transport(idx, a), l, l);
        s += D.squaredNorm();
      }
    return s;
  });
  return std::pow(h, lat.dim() - 2) * sum;
}

// Edge connection antisym(P(y) Vᵀ P(x)ᵀ) / h.
Mat edge_connection(const Edges& e, const GridField& P, std::size_t idx, int a, double h) {
  const int l = e.l;
  const auto j = static_cast<std::size_t>(e.fwd[idx * e.n + a]);
  const Mat U = node_matrix(P, j, l) * MapC(e.transport(idx, a), l, l).transpose() * node_matrix(P, idx, l).transpose();
  return (U - U.transpose()) / (2.0 * h);
}

void require_ball(const Lattice& lat) {
  if (lat.spec().shape != Shape::Ball) throw DomainError("the Coulomb gauge is solved on ball domains");
}

}  // namespace

ConnectionField build_omega(const GridField& u) {
  const Lattice& lat = u.lattice();
  const int n = lat.dim(), l = u.components();
  if (l < 2 || l > kMaxL) throw ParameterError("target dimension must lie in [2, 8]");
  const SphereTarget sphere(l);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (!u.valid(i)) continue;
    try {
      sphere.require_unit(u.at(i));
    } catch (const DomainError&) {
      throw ConstraintError("build_omega needs a unit-vector field");
    }
  }
  const GridField g = gradient(u);
  ConnectionField out{GridField(u.lattice_ptr(), n * l * l), l};
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (!g.valid(i) || !u.valid(i)) {
      out.omega.set_valid(i, false);
      continue;
    }
    const auto v = u.at(i);
    const auto d = g.at(i);
    auto o = out.omega.at(i);
    for (int k = 0; k < n; ++k)
      for (int a = 0; a < l; ++a)
        for (int b = a + 1; b < l; ++b) {
          const double w = v[a] * d[k * l + b] - v[b] * d[k * l + a];
          o[ConnectionField::component(l, k, a, b)] = w;
          o[ConnectionField::component(l, k, b, a)] = -w;
        }
  }
  return out;
}

GridField reflect_extend(const GridField& u) {
  const Lattice& half = u.lattice();
  const DomainSpec& s = half.spec();
  if (s.shape != Shape::HalfBall) throw DomainError("reflect_extend expects a half-ball field");
  const int n = s.n;
  auto full = build_domain(DomainSpec::ball(n, s.radius, s.h, s.center));
  GridField out(full, u.components());
  for (std::size_t i = 0; i < full->size(); ++i) {
    Index k = full->index_of(i);
    k[n - 1] = std::abs(k[n - 1]);
    const std::ptrdiff_t j = half.find(k);
    if (j < 0) throw DomainError("reflected node missing from the half-ball lattice");
    const auto src = u.at(static_cast<std::size_t>(j));
    std::copy(src.begin(), src.end(), out.at(i).begin());
    if (!u.valid(static_cast<std::size_t>(j))) out.set_valid(i, false);
  }
  return out;
}

void GaugeConfig::validate() const {
  if (max_sweeps < 1) throw ParameterError("max_sweeps must be >= 1");
  if (!(tol > 0.0)) throw ParameterError("gauge tolerance must be positive");
  if (!(step >= 0.0)) throw ParameterError("gauge step must be >= 0");
}

double gauge_energy(const ConnectionField& omega, const GridField& P) {
  if (!(P.lattice().spec() == omega.omega.lattice().spec())) throw DomainError("frame and connection live on different lattices");
  if (P.components() != omega.l * omega.l) throw ParameterError("frame needs l*l components");
  return edge_energy(build_edges(omega), P, P.lattice().h());
}

FrameField coulomb_gauge(const ConnectionField& omega, const SolveConfig& cfg) {
  GaugeConfig g;
  g.max_sweeps = cfg.max_iters;
  g.tol = cfg.tol;
  return coulomb_gauge(omega, g);
}

FrameField coulomb_gauge(const ConnectionField& omega, const GaugeConfig& cfg) {
  cfg.validate();
  const Lattice& lat = omega.omega.lattice();
  require_ball(lat);
  const int n = lat.dim(), l = omega.l;
  const double h = lat.h();
  const Edges edges = build_edges(omega);

  FrameField fr;
  fr.l = l;
  fr.P = GridField(omega.omega.lattice_ptr(), l * l);
  for (std::size_t i = 0; i < lat.size(); ++i)
    for (int a = 0; a < l; ++a) fr.P(i, a * l + a) = 1.0;

  std::vector<std::size_t> colour[2];
  lat.for_each([&](std::size_t idx, const Index& k) {
    int s = 0;
    for (int d = 0; d < n; ++d) s += k[d];
    colour[((s % 2) + 2) % 2].push_back(idx);
  });

  // Residual Σ_k (A_out - A_in) against the edge-connection scale.
  auto divergence = [&] {
    const auto sums = parallel_sum_vec(lat.size(), 1024, 2, [&](std::size_t b, std::size_t e, std::vector<double>& acc) {
      for (std::size_t idx = b; idx < e; ++idx) {
        Mat r = Mat::Zero(l, l);
        double scale = 0.0;
        for (int a = 0; a < n; ++a) {
          if (edges.fwd[idx * n + a] >= 0) {
            const Mat A = edge_connection(edges, fr.P, idx, a, h);
            r += A;
            scale += A.squaredNorm();
          }
          if (const auto j = edges.bwd[idx * n + a]; j >= 0) {
            const Mat A = edge_connection(edges, fr.P, static_cast<std::size_t>(j), a, h);
            r -= A;
            scale += A.squaredNorm();
          }
        }
        acc[0] += r.squaredNorm();
        acc[1] += scale;
      }
    });
    return sums[1] > 0.0 ? std::sqrt(sums[0] / sums[1]) : 0.0;
  };

  fr.energy.push_back(edge_energy(edges, fr.P, h));
  fr.divergence = divergence();
  fr.converged = fr.divergence <= cfg.tol;
  while (!fr.converged && fr.sweeps < cfg.max_sweeps) {
    for (const auto& nodes : colour) {
      parallel_for(nodes.size(), 256, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
          const std::size_t idx = nodes[t];
          // F restricted to P(x) is -2 tr(P(x)ᵀ M) + const.
          Mat M = Mat::Zero(l, l);
          bool any = false;
          for (int a = 0; a < n; ++a) {
            if (const auto j = edges.fwd[idx * n + a]; j >= 0) {
              M += node_matrix(fr.P, static_cast<std::size_t>(j), l) * MapC(edges.transport(idx, a), l, l).transpose();
              any = true;
            }
            if (const auto j = edges.bwd[idx * n + a]; j >= 0) {
              M += node_matrix(fr.P, static_cast<std::size_t>(j), l) *
                   MapC(edges.transport(static_cast<std::size_t>(j), a), l, l);
              any = true;
            }
          }
          if (!any) continue;
          if (cfg.step > 0.0) M = node_matrix(fr.P, idx, l) + cfg.step * M;
          bool ok = true;
          const Mat R = project_so(M, &ok);
          if (ok) MapM(fr.P.at(idx).data(), l, l) = R;
        }
      });
    }
    ++fr.sweeps;
    fr.energy.push_back(edge_energy(edges, fr.P, h));
    fr.divergence = divergence();
    fr.converged = fr.divergence <= cfg.tol;
  }

  fr.A = GridField(omega.omega.lattice_ptr(), n * l * l);
  for (std::size_t idx = 0; idx < lat.size(); ++idx) {
    for (int a = 0; a < n; ++a) {
      Mat A = Mat::Zero(l, l);
      int count = 0;
      if (edges.fwd[idx * n + a] >= 0) {
        A += edge_connection(edges, fr.P, idx, a, h);
        ++count;
      }
      if (const auto j = edges.bwd[idx * n + a]; j >= 0) {
        A += edge_connection(edges, fr.P, static_cast<std::size_t>(j), a, h);
        ++count;
      }
      if (count == 0) {
        fr.A.set_valid(idx, false);
        continue;
      }
      MapM(fr.A.at(idx).data() + ConnectionField::component(l, a, 0, 0), l, l) = A / count;
    }
    const Mat P = node_matrix(fr.P, idx, l);
    fr.orthogonality = std::max(fr.orthogonality, (P.transpose() * P - Mat::Identity(l, l)).cwiseAbs().maxCoeff());
  }
  return fr;
}

std::vector<double> nearest_rotation(const std::vector<double>& m, int l) {
  if (l < 1 || l > kMaxL || m.size() != static_cast<std::size_t>(l * l)) throw ParameterError("need an l×l matrix");
  if (l == 1) {
    if (m[0] == 0.0) throw DegenerateError("singular average frame");
    return {1.0};
  }
  bool ok = true;
  const Mat R = project_so(MapC(m.data(), l, l), &ok);
  if (!ok) throw DegenerateError("singular average frame has no polar projection");
  return std::vector<double>(R.data(), R.data() + l * l);
}

OscillationReport oscillation_check(const GridField& P, int l, double q, double radius, const MorreyParams& scan) {
  const Lattice& lat = P.lattice();
  if (P.components() != l * l) throw ParameterError("frame needs l*l components");
  if (!(q >= 1.0)) throw ParameterError("moment exponent must be >= 1");
  const Point& c = lat.spec().center;
  OscillationReport rep;
  rep.mean.assign(static_cast<std::size_t>(l * l), 0.0);
  double mass = 0.0;
  visit_ball(lat, c, radius, [&](std::size_t idx, double w) {
    const auto v = P.checked(idx);
    mass += w;
    for (int i = 0; i < l * l; ++i) rep.mean[i] += w * v[i];
  });
  if (!(mass > 0.0)) throw DegenerateError("empty averaging ball");
  for (double& m : rep.mean) m /= mass;
  rep.projection = nearest_rotation(rep.mean, l);
  double dist = 0.0;
  for (int i = 0; i < l * l; ++i) dist += sqr(rep.mean[i] - rep.projection[i]);
  rep.distance = std::sqrt(dist);
  double moment = 0.0;
  visit_ball(lat, c, radius, [&](std::size_t idx, double w) {
    const auto v = P.at(idx);
    double d = 0.0;
    for (int i = 0; i < l * l; ++i) d += sqr(v[i] - rep.projection[i]);
    moment += w * std::pow(d, 0.5 * q);
  });
  rep.lq = std::pow(moment / mass, 1.0 / q);
  rep.bmo = bmo_seminorm(P, scan);
  return rep;
}

void write_frame(const std::string& path, const FrameField& frame) {
  std::vector<std::uint8_t> flags(frame.P.nodes());
  for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = frame.P.valid(i) ? 1 : 0;
  write_binary(path, frame.P, flags);
}

}  // namespace biharm
