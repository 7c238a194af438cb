#include "biharm/calculus.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <vector>

#include "biharm/error.hpp"
#include "biharm/parallel.hpp"

namespace biharm {

namespace {

struct Line {
  int count = 0;
  std::array<int, 4> offset{};
  std::array<double, 4> weight{};
};

Line first_line(Support s, double h) {
  Line l;
  const double c = 0.5 / h;
  switch (s) {
    case Support::Central: l = {2, {-1, 1}, {-c, c}}; break;
    case Support::Forward: l = {3, {0, 1, 2}, {-3 * c, 4 * c, -c}}; break;
    case Support::Backward: l = {3, {0, -1, -2}, {3 * c, -4 * c, c}}; break;
    case Support::None: break;
  }
  return l;
}

Line second_line(Support s, double h, double mutation) {
  Line l;
  const double c = 1.0 / (h * h);
  switch (s) {
    case Support::Central: l = {3, {-1, 0, 1}, {c, -2.0 * (1.0 + mutation) * c, c}}; break;
    case Support::Forward: l = {4, {0, 1, 2, 3}, {2 * c, -5 * c, 4 * c, -c}}; break;
    case Support::Backward: l = {4, {0, -1, -2, -3}, {2 * c, -5 * c, 4 * c, -c}}; break;
    case Support::None: break;
  }
  return l;
}

// Applies a line stencil; returns false if a stencil node is missing.
bool apply_line(const Stencil& st, const Line& line, const double* f, int L, const Index& k, int axis,
                double* out) {
  std::array<std::ptrdiff_t, 4> nb{};
  for (int s = 0; s < line.count; ++s) {
    nb[s] = st.neighbor(k, axis, line.offset[s]);
    if (nb[s] < 0) return false;
  }
  for (int c = 0; c < L; ++c) {
    double acc = 0.0;
    for (int s = 0; s < line.count; ++s) acc += line.weight[s] * f[nb[s] * L + c];
    out[c] = acc;
  }
  return true;
}

template <class Kernel>
GridField apply_field(const GridField& f, int out_components, const Kernel& kernel) {
  const Lattice& lat = f.lattice();
  GridField out(f.lattice_ptr(), out_components);
  std::vector<std::uint8_t> ok(lat.size(), 1);
  parallel_for(lat.size(), 2048, [&](std::size_t b, std::size_t e) {
    lat.for_each_range(b, e, [&](std::size_t idx, const Index& k) {
      if (!kernel(idx, k, out.at(idx).data())) {
        ok[idx] = 0;
        std::fill(out.at(idx).begin(), out.at(idx).end(), 0.0);
      }
    });
  });
  for (std::size_t i = 0; i < ok.size(); ++i)
    if (!ok[i]) out.set_valid(i, false);
  return out;
}

}  // namespace

Stencil::Stencil(LatticePtr lattice, StencilConfig cfg) : lattice_(std::move(lattice)), cfg_(cfg) {
  if (!lattice_) throw ParameterError("stencil needs a lattice");
}

std::ptrdiff_t Stencil::neighbor(const Index& k, int axis, int step) const {
  if (step == 0) return lattice_->find(k);
  Index q = k;
  q[axis] += step;
  return lattice_->find(q);
}

Support Stencil::first_support(const Index& k, int axis) const {
  const bool m1 = neighbor(k, axis, -1) >= 0, p1 = neighbor(k, axis, 1) >= 0;
  if (m1 && p1) return Support::Central;
  if (p1 && neighbor(k, axis, 2) >= 0) return Support::Forward;
  if (m1 && neighbor(k, axis, -2) >= 0) return Support::Backward;
  return Support::None;
}

Support Stencil::second_support(const Index& k, int axis) const {
  const bool m1 = neighbor(k, axis, -1) >= 0, p1 = neighbor(k, axis, 1) >= 0;
  if (m1 && p1) return Support::Central;
  if (p1 && neighbor(k, axis, 2) >= 0 && neighbor(k, axis, 3) >= 0) return Support::Forward;
  if (m1 && neighbor(k, axis, -2) >= 0 && neighbor(k, axis, -3) >= 0) return Support::Backward;
  return Support::None;
}

bool Stencil::two_ring(const Index& k) const {
  const int n = lattice_->dim();
  for (int a = 0; a < n; ++a) {
    for (int s : {-2, 2})
      if (neighbor(k, a, s) < 0) return false;
    for (int sa : {-1, 1}) {
      Index q = k;
      q[a] += sa;
      for (int b = a + 1; b < n; ++b)
        for (int sb : {-1, 1}) {
          Index r = q;
          r[b] += sb;
          if (lattice_->find(r) < 0) return false;
        }
    }
  }
  return true;
}

bool Stencil::d1(const double* f, int L, std::size_t, const Index& k, int axis, double* out) const {
  const Support s = first_support(k, axis);
  if (s == Support::None) return false;
  return apply_line(*this, first_line(s, lattice_->h()), f, L, k, axis, out);
}

bool Stencil::d2(const double* f, int L, std::size_t, const Index& k, int axis, double* out) const {
  const Support s = second_support(k, axis);
  if (s == Support::None) return false;
  return apply_line(*this, second_line(s, lattice_->h(), cfg_.mutation), f, L, k, axis, out);
}

bool Stencil::mixed(const double* f, int L, const Index& k, int a, int b, double* out) const {
  // D_a applied to D_b f, then the same with the roles swapped. When an outer
  // neighbour lacks support across (isolated rim nodes), the other order alone is used.
  thread_local std::vector<double> inner, acc;
  inner.assign(static_cast<std::size_t>(L), 0.0);
  acc.assign(static_cast<std::size_t>(2 * L), 0.0);
  bool ok[2] = {true, true};
  for (int pass = 0; pass < 2; ++pass) {
    const int outer = pass == 0 ? a : b;
    const int in_axis = pass == 0 ? b : a;
    const Support s = first_support(k, outer);
    if (s == Support::None) return false;
    const Line line = first_line(s, lattice_->h());
    for (int j = 0; j < line.count && ok[pass]; ++j) {
      Index q = k;
      q[outer] += line.offset[j];
      const Support si = lattice_->find(q) < 0 ? Support::None : first_support(q, in_axis);
      if (si == Support::None || !apply_line(*this, first_line(si, lattice_->h()), f, L, q, in_axis, inner.data())) {
        ok[pass] = false;
        break;
      }
      for (int c = 0; c < L; ++c) acc[pass * L + c] += line.weight[j] * inner[c];
    }
  }
  if (!ok[0] && !ok[1]) return false;
  for (int c = 0; c < L; ++c) out[c] = ok[0] && ok[1] ? 0.5 * (acc[c] + acc[L + c]) : (ok[0] ? acc[c] : acc[L + c]);
  return true;
}

namespace {
// Indices of k - e_a and k + e_a for every axis; false if one is missing.
bool axis_neighbours(const Stencil& st, const Index& k, int n, std::array<std::ptrdiff_t, 2 * kMaxDim>& nb) {
  for (int a = 0; a < n; ++a) {
    nb[2 * a] = st.neighbor(k, a, -1);
    nb[2 * a + 1] = st.neighbor(k, a, 1);
    if (nb[2 * a] < 0 || nb[2 * a + 1] < 0) return false;
  }
  return true;
}
}  // namespace

// The fast paths below repeat the arithmetic of the general kernels operation for
// operation, so results do not depend on which path a node takes.

bool Stencil::gradient_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const {
  const int n = lattice_->dim();
  std::array<std::ptrdiff_t, 2 * kMaxDim> nb{};
  if (axis_neighbours(*this, k, n, nb)) {
    const double c = 0.5 / lattice_->h();
    for (int a = 0; a < n; ++a)
      for (int comp = 0; comp < L; ++comp) {
        double acc = 0.0;
        acc += -c * f[nb[2 * a] * L + comp];
        acc += c * f[nb[2 * a + 1] * L + comp];
        out[a * L + comp] = acc;
      }
    return true;
  }
  for (int a = 0; a < n; ++a)
    if (!d1(f, L, idx, k, a, out + a * L)) return false;
  return true;
}

bool Stencil::hessian_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const {
  const int n = lattice_->dim();
  std::array<std::ptrdiff_t, 2 * kMaxDim> nb{};
  bool fast = axis_neighbours(*this, k, n, nb);
  // Diagonal neighbours k + s e_a + t e_b, four per pair a < b, order (--, -+, +-, ++).
  std::array<std::ptrdiff_t, 4 * kMaxDim * kMaxDim> diag{};
  for (int a = 0; a < n && fast; ++a)
    for (int b = a + 1; b < n && fast; ++b)
      for (int q = 0; q < 4 && fast; ++q) {
        Index kk = k;
        kk[a] += (q & 2) ? 1 : -1;
        kk[b] += (q & 1) ? 1 : -1;
        const std::ptrdiff_t at = lattice_->find(kk);
        diag[(a * n + b) * 4 + q] = at;
        fast = at >= 0;
      }
  if (fast) {
    const double h = lattice_->h();
    const Line l2 = second_line(Support::Central, h, cfg_.mutation);
    const double c = 0.5 / h;
    for (int a = 0; a < n; ++a) {
      for (int comp = 0; comp < L; ++comp) {
        double acc = 0.0;
        acc += l2.weight[0] * f[nb[2 * a] * L + comp];
        acc += l2.weight[1] * f[idx * L + comp];
        acc += l2.weight[2] * f[nb[2 * a + 1] * L + comp];
        out[(a * n + a) * L + comp] = acc;
      }
      for (int b = a + 1; b < n; ++b) {
        const std::ptrdiff_t* d = &diag[(a * n + b) * 4];
        for (int comp = 0; comp < L; ++comp) {
          const double mm = f[d[0] * L + comp], mp = f[d[1] * L + comp];
          const double pm = f[d[2] * L + comp], pp = f[d[3] * L + comp];
          double in0 = 0.0, in1 = 0.0, acc0 = 0.0, acc1 = 0.0;
          in0 += -c * mm;
          in0 += c * mp;
          acc0 += -c * in0;
          in1 += -c * pm;
          in1 += c * pp;
          acc0 += c * in1;
          double jn0 = 0.0, jn1 = 0.0;
          jn0 += -c * mm;
          jn0 += c * pm;
          acc1 += -c * jn0;
          jn1 += -c * mp;
          jn1 += c * pp;
          acc1 += c * jn1;
          const double v = 0.5 * (acc0 + acc1);
          out[(a * n + b) * L + comp] = v;
          out[(b * n + a) * L + comp] = v;
        }
      }
    }
    return true;
  }
  for (int a = 0; a < n; ++a) {
    if (!d2(f, L, idx, k, a, out + (a * n + a) * L)) return false;
    for (int b = a + 1; b < n; ++b) {
      double* ab = out + (a * n + b) * L;
      if (!mixed(f, L, k, a, b, ab)) return false;
      std::copy(ab, ab + L, out + (b * n + a) * L);
    }
  }
  return true;
}

bool Stencil::laplacian_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const {
  const int n = lattice_->dim();
  std::array<std::ptrdiff_t, 2 * kMaxDim> nb{};
  std::fill(out, out + L, 0.0);
  if (axis_neighbours(*this, k, n, nb)) {
    const Line l2 = second_line(Support::Central, lattice_->h(), cfg_.mutation);
    for (int a = 0; a < n; ++a)
      for (int comp = 0; comp < L; ++comp) {
        double acc = 0.0;
        acc += l2.weight[0] * f[nb[2 * a] * L + comp];
        acc += l2.weight[1] * f[idx * L + comp];
        acc += l2.weight[2] * f[nb[2 * a + 1] * L + comp];
        out[comp] += acc;
      }
    return true;
  }
  thread_local std::vector<double> part;
  part.assign(static_cast<std::size_t>(L), 0.0);
  for (int a = 0; a < n; ++a) {
    if (!d2(f, L, idx, k, a, part.data())) return false;
    for (int c = 0; c < L; ++c) out[c] += part[c];
  }
  return true;
}

bool Stencil::bilaplacian_at(const double* f, int L, std::size_t idx, const Index& k, double* out) const {
  if (!two_ring(k)) return false;
  const int n = lattice_->dim();
  // Gather Δf on the (2n + 1)-node star in a local buffer, then apply Δ once more
  // with the very same kernel so the result equals laplacian(laplacian(f)) bit for bit.
  const std::size_t star = static_cast<std::size_t>(2 * n + 1);
  std::vector<double> buf(star * L);
  std::vector<std::ptrdiff_t> where(star);
  where[0] = static_cast<std::ptrdiff_t>(idx);
  for (int a = 0; a < n; ++a) {
    where[1 + 2 * a] = neighbor(k, a, -1);
    where[2 + 2 * a] = neighbor(k, a, 1);
  }
  for (std::size_t s = 0; s < star; ++s) {
    Index q = k;
    if (s > 0) q[(s - 1) / 2] += (s % 2 == 1) ? -1 : 1;
    if (!laplacian_at(f, L, static_cast<std::size_t>(where[s]), q, buf.data() + s * L)) return false;
  }
  const Line line = second_line(Support::Central, lattice_->h(), cfg_.mutation);
  std::fill(out, out + L, 0.0);
  for (int a = 0; a < n; ++a) {
    const std::size_t pos[3] = {static_cast<std::size_t>(1 + 2 * a), 0, static_cast<std::size_t>(2 + 2 * a)};
    for (int c = 0; c < L; ++c) {
      double acc = 0.0;
      for (int s = 0; s < 3; ++s) acc += line.weight[s] * buf[pos[s] * L + c];
      out[c] += acc;
    }
  }
  return true;
}

void require_nodes_per_axis(const Lattice& lattice, int count) {
  for (int d = 0; d < lattice.dim(); ++d)
    if (lattice.hi(d) - lattice.lo(d) + 1 < count)
      throw ResolutionError("grid has fewer than " + std::to_string(count) + " nodes along an axis");
}

GridField gradient(const GridField& f, const StencilConfig& cfg) {
  require_nodes_per_axis(f.lattice(), 3);
  const Stencil st(f.lattice_ptr(), cfg);
  const int L = f.components();
  const double* data = f.values().data();
  return apply_field(f, f.lattice().dim() * L, [&](std::size_t idx, const Index& k, double* out) {
    return st.gradient_at(data, L, idx, k, out);
  });
}

GridField hessian(const GridField& f, const StencilConfig& cfg) {
  require_nodes_per_axis(f.lattice(), 4);
  const Stencil st(f.lattice_ptr(), cfg);
  const int L = f.components();
  const int n = f.lattice().dim();
  const double* data = f.values().data();
  return apply_field(f, n * n * L, [&](std::size_t idx, const Index& k, double* out) {
    return st.hessian_at(data, L, idx, k, out);
  });
}

GridField laplacian(const GridField& f, const StencilConfig& cfg) {
  require_nodes_per_axis(f.lattice(), 4);
  const Stencil st(f.lattice_ptr(), cfg);
  const int L = f.components();
  const double* data = f.values().data();
  return apply_field(f, L, [&](std::size_t idx, const Index& k, double* out) {
    return st.laplacian_at(data, L, idx, k, out);
  });
}

GridField bilaplacian(const GridField& f, const StencilConfig& cfg) {
  const GridField lap = laplacian(f, cfg);
  const Stencil st(f.lattice_ptr(), cfg);
  const int L = f.components();
  const double* data = lap.values().data();
  return apply_field(f, L, [&](std::size_t idx, const Index& k, double* out) {
    return st.two_ring(k) && st.laplacian_at(data, L, idx, k, out);
  });
}

double check_bochner(const GridField& v, const StencilConfig& cfg) {
  require_nodes_per_axis(v.lattice(), 5);
  const Lattice& lat = v.lattice();
  const int n = lat.dim();
  const int L = v.components();
  const Stencil st(v.lattice_ptr(), cfg);
  const GridField grad = gradient(v, cfg);
  const GridField lap = laplacian(v, cfg);
  GridField grad_sq(v.lattice_ptr(), 1);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    double s = 0.0;
    for (double g : grad.at(i)) s += g * g;
    grad_sq(i, 0) = s;
  }

  std::vector<double> partial_max((lat.size() + 1023) / 1024, 0.0);
  parallel_for(lat.size(), 1024, [&](std::size_t b, std::size_t e) {
    std::vector<double> H(static_cast<std::size_t>(n * n * L)), dlap(static_cast<std::size_t>(n * L));
    double worst = 0.0;
    lat.for_each_range(b, e, [&](std::size_t idx, const Index& k) {
      if (lat.node_class(idx) != NodeClass::Interior || !st.two_ring(k)) return;
      double lap_g = 0.0;
      if (!st.laplacian_at(grad_sq.values().data(), 1, idx, k, &lap_g)) return;
      if (!st.hessian_at(v.values().data(), L, idx, k, H.data())) return;
      if (!st.gradient_at(lap.values().data(), L, idx, k, dlap.data())) return;
      double hess_sq = 0.0;
      for (double x : H) hess_sq += x * x;
      double cross = 0.0;
      const auto g = grad.at(idx);
      for (int i = 0; i < n * L; ++i) cross += dlap[i] * g[i];
      worst = std::max(worst, std::abs(lap_g - 2.0 * hess_sq - 2.0 * cross));
    });
    partial_max[b / 1024] = worst;
  });
  return partial_max.empty() ? 0.0 : *std::max_element(partial_max.begin(), partial_max.end());
}

}  // namespace biharm
