#include "biharm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "biharm/error.hpp"
#include "biharm/parallel.hpp"

namespace biharm {

namespace {

constexpr double kInsideTol = 1e-12;

double sqr(double x) { return x * x; }

bool in_ball(double d2, double r) { return d2 <= r * r * (1.0 + kInsideTol) + 1e-300; }

int ipow3(int n) {
  int p = 1;
  for (int i = 0; i < n; ++i) p *= 3;
  return p;
}

// Cell of node k clipped against the flat constraints of the domain.
struct ClippedCell {
  Point lo{}, hi{};
  double fraction = 0.0;
};

ClippedCell clip_cell(const Lattice& lat, const Index& k) {
  const DomainSpec& s = lat.spec();
  const int n = s.n;
  const double h = s.h;
  const Point x = lat.coord(k);
  ClippedCell cell;
  cell.fraction = 1.0;
  for (int d = 0; d < n; ++d) {
    double a = x[d] - 0.5 * h;
    double b = x[d] + 0.5 * h;
    if (s.shape == Shape::HalfBall && d == n - 1) a = std::max(a, s.center[d]);
    if (s.shape == Shape::Box) {
      a = std::max(a, s.origin[d]);
      b = std::min(b, s.origin[d] + s.extents[d]);
    }
    if (b <= a) {
      cell.fraction = 0.0;
      return cell;
    }
    cell.lo[d] = a;
    cell.hi[d] = b;
    cell.fraction *= (b - a) / h;
  }
  return cell;
}

// 0 = fully outside, 1 = fully inside, 2 = cut.
int ball_status(const ClippedCell& cell, int n, const Point& c, double r) {
  if (!std::isfinite(r)) return 1;
  double dmin = 0.0, dmax = 0.0;
  for (int d = 0; d < n; ++d) {
    const double a = cell.lo[d] - c[d];
    const double b = cell.hi[d] - c[d];
    if (a > 0) dmin += a * a;
    else if (b < 0) dmin += b * b;
    dmax += std::max(a * a, b * b);
  }
  if (in_ball(dmax, r)) return 1;
  if (!in_ball(dmin, r)) return 0;
  return 2;
}

template <class Visit>
void for_each_subpoint(const ClippedCell& cell, int n, Visit&& visit) {
  std::array<std::array<double, 3>, kMaxDim> pts{};
  for (int d = 0; d < n; ++d)
    for (int j = 0; j < 3; ++j) pts[d][j] = cell.lo[d] + (cell.hi[d] - cell.lo[d]) * (j + 0.5) / 3.0;
  std::array<int, kMaxDim> ctr{};
  Point p{};
  const int total = ipow3(n);
  for (int t = 0; t < total; ++t) {
    for (int d = 0; d < n; ++d) p[d] = pts[d][ctr[d]];
    visit(p);
    for (int d = n - 1; d >= 0; --d) {
      if (++ctr[d] < 3) break;
      ctr[d] = 0;
    }
  }
}

// Weights of (B_{radii[i]}(c) ∩ domain) for node k; c == nullptr means "whole domain".
// A stored node owns its whole cell up to the flat faces, so the curved boundary
// enters through node membership only. A query ball that contains the whole
// domain (radius >= cover) is therefore not sub-sampled.
void weights_core(const Lattice& lat, const Index& k, const Point* c, double cover,
                  std::span<const double> radii, std::span<double> out) {
  const int n = lat.dim();
  const ClippedCell cell = clip_cell(lat, k);
  std::fill(out.begin(), out.end(), 0.0);
  if (cell.fraction <= 0.0) return;

  std::array<int, 64> status{};
  bool any_cut = false;
  const double reach = cover - 1e-9 * lat.h();
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (radii[i] <= 0.0) status[i] = 0;
    else if (!c || radii[i] >= reach) status[i] = 1;
    else status[i] = ball_status(cell, n, *c, radii[i]);
    any_cut = any_cut || status[i] == 2;
  }
  if (!any_cut) {
    for (std::size_t i = 0; i < radii.size(); ++i) out[i] = status[i] == 1 ? cell.fraction : 0.0;
    return;
  }
  std::array<int, 64> count{};
  for_each_subpoint(cell, n, [&](const Point& p) {
    double d2 = 0.0;
    for (int d = 0; d < n; ++d) d2 += sqr(p[d] - (*c)[d]);
    for (std::size_t i = 0; i < radii.size(); ++i)
      if (status[i] == 1 || (status[i] == 2 && in_ball(d2, radii[i]))) ++count[i];
  });
  const double inv = cell.fraction / ipow3(n);
  for (std::size_t i = 0; i < radii.size(); ++i) out[i] = count[i] * inv;
}

}  // namespace

std::string to_string(Shape shape) {
  switch (shape) {
    case Shape::Ball: return "ball";
    case Shape::HalfBall: return "half_ball";
    case Shape::Box: return "box";
  }
  return "unknown";
}

Shape shape_from_string(const std::string& name) {
  if (name == "ball") return Shape::Ball;
  if (name == "half_ball" || name == "halfball") return Shape::HalfBall;
  if (name == "box") return Shape::Box;
  throw ParameterError("unknown domain shape '" + name + "'");
}

DomainSpec DomainSpec::ball(int n, double radius, double h, Point center) {
  DomainSpec s;
  s.n = n;
  s.shape = Shape::Ball;
  s.radius = radius;
  s.h = h;
  s.center = center;
  return s;
}

DomainSpec DomainSpec::half_ball(int n, double radius, double h, Point center) {
  DomainSpec s = ball(n, radius, h, center);
  s.shape = Shape::HalfBall;
  return s;
}

DomainSpec DomainSpec::box(int n, Point origin, Point extents, double h) {
  DomainSpec s;
  s.n = n;
  s.shape = Shape::Box;
  s.origin = origin;
  s.extents = extents;
  s.h = h;
  return s;
}

// Lattice ------------------------------------------------------------------

Lattice::Lattice(const DomainSpec& spec, double min_cells_per_radius) : spec_(spec) {
  const int n = spec.n;
  if (n < 1 || n > kMaxDim) throw ParameterError("dimension must lie in [1, 8]");
  if (!(spec.h > 0.0)) throw ParameterError("grid spacing h must be positive");
  cell_volume_ = std::pow(spec.h, n);

  if (spec.shape == Shape::Box) {
    for (int d = 0; d < n; ++d) {
      const double cells = spec.extents[d] / spec.h;
      const double m = std::round(cells);
      if (std::abs(cells - m) > 1e-9 * std::max(1.0, cells))
        throw ParameterError("box extents must be integer multiples of h");
      if (m < min_cells_per_radius)
        throw ResolutionError("box needs at least " + std::to_string(min_cells_per_radius) +
                              " cells per axis");
      lo_[d] = 0;
      hi_[d] = static_cast<int>(m);
    }
  } else {
    if (!(spec.radius > 0.0)) throw ParameterError("radius must be positive");
    if (spec.radius / spec.h < min_cells_per_radius * (1.0 - 1e-12))
      throw ResolutionError("radius/h = " + std::to_string(spec.radius / spec.h) + " is below " +
                            std::to_string(min_cells_per_radius));
    const int N = static_cast<int>(std::floor(spec.radius / spec.h + 1e-9));
    for (int d = 0; d < n; ++d) {
      lo_[d] = -N;
      hi_[d] = N;
    }
    if (spec.shape == Shape::HalfBall) lo_[n - 1] = 0;
  }

  rows_ = 1;
  for (int d = n - 2; d >= 0; --d) {
    row_stride_[d] = rows_;
    rows_ *= static_cast<std::size_t>(hi_[d] - lo_[d] + 1);
  }
  row_start_.assign(rows_ + 1, 0);
  row_lo_.assign(rows_, 0);
  row_hi_.assign(rows_, -1);

  Index k{};
  for (std::size_t r = 0; r < rows_; ++r) {
    std::size_t rem = r;
    for (int d = 0; d < n - 1; ++d) {
      k[d] = lo_[d] + static_cast<int>(rem / row_stride_[d]);
      rem %= row_stride_[d];
    }
    int a = lo_[n - 1], b = hi_[n - 1];
    if (spec.shape != Shape::Box) {
      double s2 = spec.radius * spec.radius;
      for (int d = 0; d < n - 1; ++d) s2 -= sqr(spec.h * k[d]);
      if (s2 < -kInsideTol * spec.radius * spec.radius) {
        a = 1;
        b = 0;
      } else {
        int m = static_cast<int>(std::floor(std::sqrt(std::max(0.0, s2)) / spec.h + 1e-9));
        k[n - 1] = m;
        while (m >= 0 && !inside(coord(k))) k[n - 1] = --m;
        k[n - 1] = m + 1;
        while (inside(coord(k))) k[n - 1] = ++m + 1;
        a = std::max(a, -m);
        b = std::min(b, m);
      }
    }
    row_lo_[r] = a;
    row_hi_[r] = b;
    row_start_[r + 1] = row_start_[r] + static_cast<std::size_t>(std::max(0, b - a + 1));
  }

  classes_.resize(size());
  for_each([&](std::size_t idx, const Index& kk) { classes_[idx] = classify(coord(kk)); });
}

Point Lattice::coord(const Index& k) const {
  Point x{};
  const Point& base = spec_.shape == Shape::Box ? spec_.origin : spec_.center;
  for (int d = 0; d < spec_.n; ++d) x[d] = base[d] + spec_.h * k[d];
  return x;
}

std::size_t Lattice::row_of(const Index& k) const {
  std::size_t r = 0;
  for (int d = 0; d < spec_.n - 1; ++d) r += static_cast<std::size_t>(k[d] - lo_[d]) * row_stride_[d];
  return r;
}

Index Lattice::index_of(std::size_t idx) const {
  const auto it = std::upper_bound(row_start_.begin(), row_start_.end(), idx);
  const std::size_t r = static_cast<std::size_t>(it - row_start_.begin()) - 1;
  Index k{};
  std::size_t rem = r;
  for (int d = 0; d < spec_.n - 1; ++d) {
    k[d] = lo_[d] + static_cast<int>(rem / row_stride_[d]);
    rem %= row_stride_[d];
  }
  k[spec_.n - 1] = row_lo_[r] + static_cast<int>(idx - row_start_[r]);
  return k;
}

std::ptrdiff_t Lattice::find(const Index& k) const {
  const int n = spec_.n;
  for (int d = 0; d < n; ++d)
    if (k[d] < lo_[d] || k[d] > hi_[d]) return -1;
  const std::size_t r = row_of(k);
  if (k[n - 1] < row_lo_[r] || k[n - 1] > row_hi_[r]) return -1;
  return static_cast<std::ptrdiff_t>(row_start_[r] + static_cast<std::size_t>(k[n - 1] - row_lo_[r]));
}

bool Lattice::row_extent(const Index& k, int& lo, int& hi, std::size_t& start) const {
  const int n = spec_.n;
  for (int d = 0; d < n - 1; ++d)
    if (k[d] < lo_[d] || k[d] > hi_[d]) return false;
  const std::size_t r = row_of(k);
  if (row_lo_[r] > row_hi_[r]) return false;
  lo = row_lo_[r];
  hi = row_hi_[r];
  start = row_start_[r];
  return true;
}

bool Lattice::inside(const Point& x) const {
  const DomainSpec& s = spec_;
  const double tol = 1e-9 * s.h;
  if (s.shape == Shape::Box) {
    for (int d = 0; d < s.n; ++d)
      if (x[d] < s.origin[d] - tol || x[d] > s.origin[d] + s.extents[d] + tol) return false;
    return true;
  }
  double d2 = 0.0;
  for (int d = 0; d < s.n; ++d) d2 += sqr(x[d] - s.center[d]);
  if (!in_ball(d2, s.radius)) return false;
  if (s.shape == Shape::HalfBall && x[s.n - 1] < s.center[s.n - 1] - tol) return false;
  return true;
}

NodeClass Lattice::classify(const Point& x) const {
  if (!inside(x)) return NodeClass::Exterior;
  const DomainSpec& s = spec_;
  const double near = s.h * (1.0 - 1e-9);
  if (s.shape == Shape::Box) {
    for (int d = 0; d < s.n; ++d)
      if (x[d] - s.origin[d] < near || s.origin[d] + s.extents[d] - x[d] < near)
        return NodeClass::FlatBoundary;
    return NodeClass::Interior;
  }
  if (s.shape == Shape::HalfBall && x[s.n - 1] - s.center[s.n - 1] < near)
    return NodeClass::FlatBoundary;
  double d2 = 0.0;
  for (int d = 0; d < s.n; ++d) d2 += sqr(x[d] - s.center[d]);
  if (s.radius - std::sqrt(d2) < near) return NodeClass::CurvedBoundary;
  return NodeClass::Interior;
}

void Lattice::for_each(const std::function<void(std::size_t, const Index&)>& fn) const {
  for_each_range(0, size(), fn);
}

void Lattice::for_each_range(std::size_t begin, std::size_t end,
                             const std::function<void(std::size_t, const Index&)>& fn) const {
  if (begin >= end) return;
  const int n = spec_.n;
  Index k = index_of(begin);
  std::size_t r = row_of(k);
  std::size_t idx = begin;
  while (idx < end) {
    for (int last = k[n - 1]; last <= row_hi_[r] && idx < end; ++last, ++idx) {
      k[n - 1] = last;
      fn(idx, k);
    }
    if (idx >= end) break;
    // advance to next non-empty row
    do {
      ++r;
    } while (r < rows_ && row_hi_[r] < row_lo_[r]);
    if (r >= rows_) break;
    std::size_t rem = r;
    for (int d = 0; d < n - 1; ++d) {
      k[d] = lo_[d] + static_cast<int>(rem / row_stride_[d]);
      rem %= row_stride_[d];
    }
    k[n - 1] = row_lo_[r];
  }
}

void Lattice::for_each_in_box(const Index& klo, const Index& khi,
                              const std::function<void(std::size_t, const Index&)>& fn) const {
  const int n = spec_.n;
  Index a{}, b{};
  for (int d = 0; d < n; ++d) {
    a[d] = std::max(klo[d], lo_[d]);
    b[d] = std::min(khi[d], hi_[d]);
    if (a[d] > b[d]) return;
  }
  Index k = a;
  while (true) {
    const std::size_t r = row_of(k);
    const int first = std::max(a[n - 1], row_lo_[r]);
    const int last = std::min(b[n - 1], row_hi_[r]);
    if (first <= last) {
      std::size_t idx = row_start_[r] + static_cast<std::size_t>(first - row_lo_[r]);
      for (int j = first; j <= last; ++j, ++idx) {
        k[n - 1] = j;
        fn(idx, k);
      }
    }
    int d = n - 2;
    for (; d >= 0; --d) {
      if (++k[d] <= b[d]) break;
      k[d] = a[d];
    }
    if (d < 0) break;
  }
}

const std::vector<double>& Lattice::domain_weights() const {
  std::call_once(weights_once_, [this] {
    weights_.assign(size(), 0.0);
    const double inf = std::numeric_limits<double>::infinity();
    parallel_for(size(), 4096, [&](std::size_t b, std::size_t e) {
      for_each_range(b, e, [&](std::size_t idx, const Index& k) {
        double w = 0.0;
        weights_core(*this, k, nullptr, inf, std::span<const double>(&inf, 1), std::span<double>(&w, 1));
        weights_[idx] = w;
      });
    });
  });
  return weights_;
}

void Lattice::index_box(const Point& c, double r, Index& klo, Index& khi) const {
  const Point& base = spec_.shape == Shape::Box ? spec_.origin : spec_.center;
  klo = lo_;
  khi = hi_;
  for (int d = 0; d < spec_.n; ++d) {
    klo[d] = std::max(lo_[d], static_cast<int>(std::floor((c[d] - r - base[d]) / spec_.h)) - 1);
    khi[d] = std::min(hi_[d], static_cast<int>(std::ceil((c[d] + r - base[d]) / spec_.h)) + 1);
  }
}

double Lattice::curved_clearance(const Point& c) const {
  if (spec_.shape == Shape::Box) return std::numeric_limits<double>::infinity();
  double d2 = 0.0;
  for (int d = 0; d < spec_.n; ++d) d2 += sqr(c[d] - spec_.center[d]);
  return spec_.radius - std::sqrt(d2);
}

double Lattice::boundary_distance(const Point& c) const {
  const int n = spec_.n;
  double d = curved_clearance(c);
  if (spec_.shape == Shape::HalfBall) d = std::min(d, c[n - 1] - spec_.center[n - 1]);
  if (spec_.shape == Shape::Box)
    for (int a = 0; a < n; ++a)
      d = std::min({d, c[a] - spec_.origin[a], spec_.origin[a] + spec_.extents[a] - c[a]});
  return d;
}

LatticePtr build_domain(const DomainSpec& spec, double min_cells_per_radius) {
  return std::make_shared<const Lattice>(spec, min_cells_per_radius);
}

// GridField ----------------------------------------------------------------

GridField::GridField(LatticePtr lattice, int components, double fill)
    : lattice_(std::move(lattice)), components_(components) {
  if (!lattice_) throw ParameterError("GridField needs a lattice");
  if (components < 1) throw ParameterError("GridField needs at least one component");
  values_.assign(lattice_->size() * static_cast<std::size_t>(components), fill);
}

std::span<const double> GridField::checked(std::size_t idx) const {
  if (!valid(idx)) throw MaskedOutError("read of a node without stencil support");
  return at(idx);
}

void GridField::set_valid(std::size_t idx, bool ok) {
  if (valid_.empty()) valid_.assign(nodes(), 1);
  valid_[idx] = ok ? 1 : 0;
}

void GridField::require_compatible(const GridField& other) const {
  if (!lattice_ || !other.lattice_ ||
      (lattice_ != other.lattice_ && !(lattice_->spec() == other.lattice_->spec())))
    throw DomainError("fields live on different domains");
}

GridField sample(LatticePtr lattice, int components, const PointFn& fn) {
  GridField f(lattice, components);
  const Lattice& lat = *lattice;
  parallel_for(lat.size(), 4096, [&](std::size_t b, std::size_t e) {
    lat.for_each_range(b, e, [&](std::size_t idx, const Index& k) { fn(lat.coord(k), f.at(idx)); });
  });
  return f;
}

// Quadrature ---------------------------------------------------------------

namespace {
// Radius from which B_r(c) contains every cell of the domain's curved part.
double cover_radius(const Lattice& lattice, const Point& c) {
  const DomainSpec& s = lattice.spec();
  if (s.shape == Shape::Box) return std::numeric_limits<double>::infinity();
  return 2.0 * s.radius - lattice.curved_clearance(c);
}
}  // namespace

double cell_weight(const Lattice& lattice, const Index& k, const Region& region) {
  const double radii[2] = {region.outer, region.inner};
  double w[2];
  weights_core(lattice, k, &region.center, cover_radius(lattice, region.center),
               std::span<const double>(radii, 2), std::span<double>(w, 2));
  return w[0] - w[1];
}

void ball_weights(const Lattice& lattice, const Index& k, const Point& center,
                  std::span<const double> radii, std::span<double> out) {
  if (radii.size() > 64) throw ParameterError("at most 64 radii per weight query");
  weights_core(lattice, k, &center, cover_radius(lattice, center), radii, out);
}

void require_region_inside(const Lattice& lattice, const Region& region) {
  if (lattice.classify(region.center) == NodeClass::Exterior)
    throw DomainError("region centre lies outside the domain");
  const double clearance = lattice.curved_clearance(region.center);
  if (region.outer > clearance * (1.0 + 1e-9) + 1e-12)
    throw DomainError("region of radius " + std::to_string(region.outer) +
                      " leaves the domain (clearance " + std::to_string(clearance) + ")");
}

double integrate_density(const Lattice& lattice, const Region& region,
                         const std::function<double(std::size_t, const Index&)>& density) {
  require_region_inside(lattice, region);
  Index klo, khi;
  lattice.index_box(region.center, region.outer, klo, khi);
  double sum = 0.0;
  lattice.for_each_in_box(klo, khi, [&](std::size_t idx, const Index& k) {
    const double w = cell_weight(lattice, k, region);
    if (w > 0.0) sum += w * density(idx, k);
  });
  return sum * lattice.cell_volume();
}

namespace {
void require_scalar(const GridField& f) {
  if (f.components() != 1) throw ParameterError("quadrature expects a scalar field");
}
}  // namespace

double integrate(const GridField& f) {
  require_scalar(f);
  const Lattice& lat = f.lattice();
  const auto& w = lat.domain_weights();
  const double sum = parallel_sum(lat.size(), 8192, [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      if (w[i] <= 0.0) continue;
      s += w[i] * f.checked(i)[0];
    }
    return s;
  });
  return sum * lat.cell_volume();
}

double integrate(const GridField& f, const Region& region) {
  require_scalar(f);
  return integrate_density(f.lattice(), region,
                           [&](std::size_t idx, const Index&) { return f.checked(idx)[0]; });
}

double sphere_integrate(const GridField& f, const Point& center, double rho) {
  const double h = f.lattice().h();
  if (rho < 2.0 * h * (1.0 - 1e-12)) throw ResolutionError("sphere radius below 2h");
  return integrate(f, Region{center, rho + 0.5 * h, rho - 0.5 * h}) / h;
}

// Ball stencils ------------------------------------------------------------

const BallStencil& ball_stencil(int n, double h, double radius) {
  static std::mutex mutex;
  static std::map<std::pair<int, long long>, std::unique_ptr<BallStencil>> cache;
  const double m = radius / h;
  const auto key = std::make_pair(n, std::llround(m * 1e6));
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;

  auto st = std::make_unique<BallStencil>();
  st->n = n;
  st->radius = radius;
  const int reach = static_cast<int>(std::floor(m + 0.5 + 1e-9));
  // Unit lattice: node offsets o, cells o ± 1/2, ball of radius m about 0.
  Index o{};
  for (int d = 0; d < n - 1; ++d) o[d] = -reach;
  Point zero{};
  std::unordered_map<std::uint64_t, int> memo;
  while (true) {
    double pre_min = 0.0, pre_max = 0.0;
    for (int d = 0; d < n - 1; ++d) {
      const double a = std::abs(o[d]) - 0.5, b = std::abs(o[d]) + 0.5;
      pre_min += a > 0 ? a * a : 0.0;
      pre_max += b * b;
    }
    int run_lo = 1, run_hi = 0;
    for (int j = -reach; j <= reach; ++j) {
      const double a = std::abs(j) - 0.5, b = std::abs(j) + 0.5;
      const double dmin = pre_min + (a > 0 ? a * a : 0.0);
      const double dmax = pre_max + b * b;
      if (in_ball(dmax, m)) {
        if (run_lo > run_hi) run_lo = j;
        run_hi = j;
        continue;
      }
      if (!in_ball(dmin, m)) continue;
      // Cut fractions depend only on the sorted absolute offsets (hyperoctahedral symmetry).
      Index sorted{};
      for (int d = 0; d < n - 1; ++d) sorted[d] = std::abs(o[d]);
      sorted[n - 1] = std::abs(j);
      std::sort(sorted.begin(), sorted.begin() + n);
      std::uint64_t key = 0;
      for (int d = 0; d < n; ++d) key = key * static_cast<std::uint64_t>(reach + 1) + static_cast<std::uint64_t>(sorted[d]);
      if (auto hit = memo.find(key); hit != memo.end()) {
        if (hit->second > 0) {
          BallStencil::Cut cut;
          cut.offset = o;
          cut.offset[n - 1] = j;
          cut.weight = static_cast<double>(hit->second) / ipow3(n);
          st->cuts.push_back(cut);
        }
        continue;
      }
      ClippedCell cell;
      cell.fraction = 1.0;
      for (int d = 0; d < n - 1; ++d) {
        cell.lo[d] = o[d] - 0.5;
        cell.hi[d] = o[d] + 0.5;
      }
      cell.lo[n - 1] = j - 0.5;
      cell.hi[n - 1] = j + 0.5;
      int count = 0;
      for_each_subpoint(cell, n, [&](const Point& p) {
        double d2 = 0.0;
        for (int d = 0; d < n; ++d) d2 += sqr(p[d] - zero[d]);
        if (in_ball(d2, m)) ++count;
      });
      memo.emplace(key, count);
      if (count > 0) {
        BallStencil::Cut cut;
        cut.offset = o;
        cut.offset[n - 1] = j;
        cut.weight = static_cast<double>(count) / ipow3(n);
        st->cuts.push_back(cut);
      }
    }
    if (run_lo <= run_hi) st->runs.push_back({o, run_lo, run_hi});
    int d = n - 2;
    for (; d >= 0; --d) {
      if (++o[d] <= reach) break;
      o[d] = -reach;
    }
    if (d < 0) break;
  }
  auto [pos, ok] = cache.emplace(key, std::move(st));
  return *pos->second;
}

namespace {
// Full runs go to run(start, count), cut nodes to cut(idx, weight); unstored nodes are skipped.
template <class Cut, class Run>
void for_each_stencil_node(const Lattice& lattice, const Index& k, const BallStencil& stencil, Cut&& cut, Run&& run) {
  const int n = lattice.dim();
  Index q{};
  int lo = 0, hi = 0;
  std::size_t start = 0;
  for (const auto& r : stencil.runs) {
    for (int d = 0; d < n - 1; ++d) q[d] = k[d] + r.prefix[d];
    if (!lattice.row_extent(q, lo, hi, start)) continue;
    const int a = std::max(lo, k[n - 1] + r.lo), b = std::min(hi, k[n - 1] + r.hi);
    if (a <= b) run(start + static_cast<std::size_t>(a - lo), b - a + 1);
  }
  for (const auto& c : stencil.cuts) {
    for (int d = 0; d < n; ++d) q[d] = k[d] + c.offset[d];
    const std::ptrdiff_t idx = lattice.find(q);
    if (idx >= 0) cut(static_cast<std::size_t>(idx), c.weight);
  }
}
}  // namespace

const BallStencil& face_ball_stencil(int n, double h, double radius, int depth) {
  static std::mutex mutex;
  static std::map<std::tuple<int, long long, int>, std::unique_ptr<BallStencil>> cache;
  const double m = radius / h;
  const auto key = std::make_tuple(n, std::llround(m * 1e6), depth);
  const BallStencil& full = ball_stencil(n, h, radius);
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;

  auto st = std::make_unique<BallStencil>();
  st->n = n;
  st->radius = radius;
  const int face = -depth;
  auto face_cut = [&](const Index& offset, bool whole) {
    BallStencil::Cut cut;
    cut.offset = offset;
    if (whole) {
      cut.weight = 0.5;
    } else {
      // Upper half of the cell, sub-sampled like a clipped cell of the lattice.
      ClippedCell cell;
      cell.fraction = 0.5;
      for (int d = 0; d < n; ++d) {
        cell.lo[d] = offset[d] - 0.5;
        cell.hi[d] = offset[d] + 0.5;
      }
      cell.lo[n - 1] = face;
      int count = 0;
      for_each_subpoint(cell, n, [&](const Point& p) {
        double d2 = 0.0;
        for (int d = 0; d < n; ++d) d2 += sqr(p[d]);
        if (in_ball(d2, m)) ++count;
      });
      cut.weight = 0.5 * count / ipow3(n);
    }
    if (cut.weight > 0.0) st->cuts.push_back(cut);
  };
  for (const auto& r : full.runs) {
    if (r.hi < face) continue;
    BallStencil::Run run = r;
    if (run.lo <= face) {
      Index o = r.prefix;
      o[n - 1] = face;
      face_cut(o, true);
      run.lo = face + 1;
    }
    if (run.lo <= run.hi) st->runs.push_back(run);
  }
  for (const auto& c : full.cuts) {
    if (c.offset[n - 1] > face) st->cuts.push_back(c);
    else if (c.offset[n - 1] == face) face_cut(c.offset, false);
  }
  return *cache.emplace(key, std::move(st)).first->second;
}

namespace {
// Cached stencil giving the quadrature of B_radius(c) ∩ domain, or nullptr.
const BallStencil* stencil_for(const Lattice& lattice, const Point& c, double radius, Index& kc) {
  const DomainSpec& s = lattice.spec();
  const int n = s.n;
  const double h = s.h;
  const Point& base = s.shape == Shape::Box ? s.origin : s.center;
  for (int d = 0; d < n; ++d) {
    const double q = (c[d] - base[d]) / h;
    kc[d] = static_cast<int>(std::lround(q));
    if (std::abs(q - kc[d]) >= 1e-9) return nullptr;
  }
  if (lattice.find(kc) < 0) return nullptr;
  const int reach = static_cast<int>(std::floor(radius / h + 0.5 + 1e-9));
  if (s.shape == Shape::Box) {
    for (int d = 0; d < n; ++d)
      if (kc[d] <= reach || (kc[d] + reach + 0.5) * h > s.extents[d] + 1e-12) return nullptr;
    return &ball_stencil(n, h, radius);
  }
  if (!(radius < cover_radius(lattice, c) * (1.0 - 1e-9))) return nullptr;
  if (s.shape == Shape::HalfBall && kc[n - 1] < reach) return &face_ball_stencil(n, h, radius, kc[n - 1]);
  return &ball_stencil(n, h, radius);
}
}  // namespace

bool stencil_applies(const Lattice& lattice, const Point& c, double radius) {
  Index kc{};
  return stencil_for(lattice, c, radius, kc) != nullptr;
}

double stencil_integral(const Lattice& lattice, const Index& k, const BallStencil& stencil,
                        std::span<const double> scalar) {
  double sum = 0.0;
  for_each_stencil_node(lattice, k, stencil, [&](std::size_t idx, double w) { sum += w * scalar[idx]; },
                        [&](std::size_t start, int count) {
                          double s = 0.0;
                          for (int j = 0; j < count; ++j) s += scalar[start + static_cast<std::size_t>(j)];
                          sum += s;
                        });
  return sum * lattice.cell_volume();
}

std::vector<double> ball_integrals(const Lattice& lattice, const Point& center, std::span<const double> radii,
                                   std::span<const std::span<const double>> densities) {
  const std::size_t m = radii.size(), nd = densities.size();
  if (m == 0 || m > 64) throw ParameterError("ball_integrals takes 1..64 radii");
  for (std::size_t j = 1; j < m; ++j)
    if (!(radii[j] > radii[j - 1])) throw ParameterError("radii must increase");
  for (const auto& d : densities)
    if (d.size() != lattice.size()) throw ParameterError("density length differs from the lattice");
  const double rmax = radii[m - 1];
  require_region_inside(lattice, Region{center, rmax, 0.0});
  std::vector<double> out(nd * m, 0.0);
  if (nd == 0) return out;

  // Radii served by cached stencils come first (applicability is monotone in the radius).
  Index kc{};
  std::size_t cached = 0;
  for (; cached < m; ++cached) {
    const BallStencil* st = stencil_for(lattice, center, radii[cached], kc);
    if (!st) break;
    for (std::size_t d = 0; d < nd; ++d) out[d * m + cached] = stencil_integral(lattice, kc, *st, densities[d]);
  }
  if (cached == m) return out;
  const std::span<const double> rest = radii.subspan(cached);
  const std::size_t mr = rest.size();

  // General path: per-node weights for the remaining radii from one sub-sampling.
  Index klo, khi;
  lattice.index_box(center, rmax, klo, khi);
  std::vector<std::size_t> nodes;
  lattice.for_each_in_box(klo, khi, [&](std::size_t idx, const Index&) { nodes.push_back(idx); });
  const auto sums = parallel_sum_vec(nodes.size(), 1024, nd * mr, [&](std::size_t b, std::size_t e, std::vector<double>& acc) {
    std::vector<double> w(mr);
    for (std::size_t t = b; t < e; ++t) {
      const std::size_t idx = nodes[t];
      ball_weights(lattice, lattice.index_of(idx), center, rest, w);
      for (std::size_t j = 0; j < mr; ++j) {
        if (w[j] == 0.0) continue;
        for (std::size_t d = 0; d < nd; ++d) acc[d * mr + j] += w[j] * densities[d][idx];
      }
    }
  });
  for (std::size_t d = 0; d < nd; ++d)
    for (std::size_t j = 0; j < mr; ++j) out[d * m + cached + j] = sums[d * mr + j] * lattice.cell_volume();
  return out;
}

void visit_ball(const Lattice& lattice, const Point& center, double radius,
                const std::function<void(std::size_t, double)>& fn) {
  require_region_inside(lattice, Region{center, radius, 0.0});
  Index kc{};
  if (const BallStencil* st = stencil_for(lattice, center, radius, kc)) {
    for_each_stencil_node(lattice, kc, *st, fn, [&](std::size_t start, int count) {
      for (int j = 0; j < count; ++j) fn(start + static_cast<std::size_t>(j), 1.0);
    });
    return;
  }
  Index klo, khi;
  lattice.index_box(center, radius, klo, khi);
  double w = 0.0;
  lattice.for_each_in_box(klo, khi, [&](std::size_t idx, const Index& k) {
    ball_weights(lattice, k, center, std::span<const double>(&radius, 1), std::span<double>(&w, 1));
    if (w > 0.0) fn(idx, w);
  });
}

}  // namespace biharm
