#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace biharm {

inline constexpr int kMaxDim = 8;
using Point = std::array<double, kMaxDim>;
using Index = std::array<int, kMaxDim>;

enum class Shape : std::uint32_t { Ball = 0, HalfBall = 1, Box = 2 };

enum class NodeClass : std::uint8_t {
  Interior = 0,
  FlatBoundary = 1,
  CurvedBoundary = 2,
  Exterior = 3,
};

std::string to_string(Shape shape);
Shape shape_from_string(const std::string& name);

/// Geometry of a computational region on a uniform node-centred lattice.
///
/// Ball and HalfBall put a node on `center`; the half-ball keeps x_n >= center_n,
/// so its flat face T lies on {x_n = center_n}. Box spans origin + [0, extents]
/// with nodes on both end faces.
struct DomainSpec {
  int n = 2;
  Shape shape = Shape::Ball;
  Point center{};
  double radius = 1.0;
  Point origin{};
  Point extents{};
  double h = 0.1;

  static DomainSpec ball(int n, double radius, double h, Point center = {});
  static DomainSpec half_ball(int n, double radius, double h, Point center = {});
  static DomainSpec box(int n, Point origin, Point extents, double h);

  bool operator==(const DomainSpec&) const = default;
};

/// Ball region B_outer(center) minus the closed ball B_inner(center); inner = 0 means none.
struct Region {
  Point center{};
  double outer = 0.0;
  double inner = 0.0;
};

/// Node set of a DomainSpec, stored row by row along the last axis.
///
/// Only non-exterior nodes are stored. Storage order is lexicographic in the
/// integer index (last axis fastest), which is also the serialization order.
class Lattice {
 public:
  explicit Lattice(const DomainSpec& spec, double min_cells_per_radius = 4.0);

  const DomainSpec& spec() const { return spec_; }
  int dim() const { return spec_.n; }
  double h() const { return spec_.h; }
  double cell_volume() const { return cell_volume_; }
  std::size_t size() const { return row_start_.back(); }

  int lo(int axis) const { return lo_[axis]; }
  int hi(int axis) const { return hi_[axis]; }

  Point coord(const Index& k) const;
  Point coord(std::size_t idx) const { return coord(index_of(idx)); }
  Index index_of(std::size_t idx) const;
  /// Storage index of lattice index k, or -1 when k is not a domain node.
  std::ptrdiff_t find(const Index& k) const;
  NodeClass node_class(std::size_t idx) const { return classes_[idx]; }
  /// Geometric classification of an arbitrary point.
  NodeClass classify(const Point& x) const;
  bool inside(const Point& x) const;

  /// Calls fn(idx, k) for every stored node in storage order.
  void for_each(const std::function<void(std::size_t, const Index&)>& fn) const;
  /// Calls fn(idx, k) for stored nodes with idx in [begin, end).
  void for_each_range(std::size_t begin, std::size_t end,
                      const std::function<void(std::size_t, const Index&)>& fn) const;
  /// Calls fn(idx, k) for stored nodes whose index lies in the box [klo, khi].
  void for_each_in_box(const Index& klo, const Index& khi,
                       const std::function<void(std::size_t, const Index&)>& fn) const;

  /// Whole-domain quadrature weight of each node (cell fraction inside the domain).
  const std::vector<double>& domain_weights() const;

  /// Index box covering a coordinate ball, clamped to the lattice bounds.
  void index_box(const Point& c, double r, Index& klo, Index& khi) const;

  /// Stored part [lo, hi] of the last-axis row through k (last entry of k ignored) and the
  /// storage index of its first node; false for empty rows or rows outside the bounds.
  bool row_extent(const Index& k, int& lo, int& hi, std::size_t& start) const;

  /// Distance from a point to the curved part of the boundary (infinite for Box).
  double curved_clearance(const Point& c) const;
  /// Distance from a point to the whole boundary, flat faces included.
  double boundary_distance(const Point& c) const;

 private:
  std::size_t row_of(const Index& k) const;

  DomainSpec spec_;
  double cell_volume_ = 0.0;
  Index lo_{}, hi_{};
  std::array<std::size_t, kMaxDim> row_stride_{};
  std::size_t rows_ = 0;
  std::vector<std::size_t> row_start_;
  std::vector<int> row_lo_, row_hi_;
  std::vector<NodeClass> classes_;
  mutable std::once_flag weights_once_;
  mutable std::vector<double> weights_;
};

using LatticePtr = std::shared_ptr<const Lattice>;

/// Builds the node classification for a domain; enforces radius/h >= min_cells.
LatticePtr build_domain(const DomainSpec& spec, double min_cells_per_radius = 4.0);

/// L-component field on a lattice, node-major. Derived fields may carry
/// per-node validity tags; reading an invalid node through checked() throws.
class GridField {
 public:
  GridField() = default;
  GridField(LatticePtr lattice, int components, double fill = 0.0);

  const Lattice& lattice() const { return *lattice_; }
  const LatticePtr& lattice_ptr() const { return lattice_; }
  int components() const { return components_; }
  std::size_t nodes() const { return lattice_ ? lattice_->size() : 0; }

  double& operator()(std::size_t idx, int c) { return values_[idx * components_ + c]; }
  double operator()(std::size_t idx, int c) const { return values_[idx * components_ + c]; }
  std::span<double> at(std::size_t idx) {
    return {values_.data() + idx * components_, static_cast<std::size_t>(components_)};
  }
  std::span<const double> at(std::size_t idx) const {
    return {values_.data() + idx * components_, static_cast<std::size_t>(components_)};
  }
  std::span<const double> checked(std::size_t idx) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool has_tags() const { return !valid_.empty(); }
  bool valid(std::size_t idx) const { return valid_.empty() || valid_[idx] != 0; }
  void set_valid(std::size_t idx, bool ok);
  void clear_tags() { valid_.clear(); }
  const std::vector<std::uint8_t>& tags() const { return valid_; }

  /// Throws DomainError unless both fields live on identical domains.
  void require_compatible(const GridField& other) const;

 private:
  LatticePtr lattice_;
  int components_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> valid_;
};

using PointFn = std::function<void(const Point&, std::span<double>)>;

/// Samples fn at every node.
GridField sample(LatticePtr lattice, int components, const PointFn& fn);

/// Cell weight of node k for region (fraction of its cell inside region and domain).
double cell_weight(const Lattice& lattice, const Index& k, const Region& region);

/// Weights of B_rho(center) ∩ domain for ascending radii, sharing one sub-sampling.
void ball_weights(const Lattice& lattice, const Index& k, const Point& center,
                  std::span<const double> radii, std::span<double> out);

/// ∫_{region ∩ domain} density, with density evaluated only at nodes of nonzero weight.
double integrate_density(const Lattice& lattice, const Region& region,
                         const std::function<double(std::size_t, const Index&)>& density);

/// Quadrature of a scalar field over the whole domain.
double integrate(const GridField& f);
/// Quadrature of a scalar field over region ∩ domain.
double integrate(const GridField& f, const Region& region);
/// Shell-averaged surface integral over ∂B_rho(center) ∩ domain.
double sphere_integrate(const GridField& f, const Point& center, double rho);

/// ∫_{B_rho(center) ∩ domain} of each density (one value per node) for ascending radii.
/// Layout [d * radii.size() + j]. Node-centred unclipped balls use cached stencils.
std::vector<double> ball_integrals(const Lattice& lattice, const Point& center, std::span<const double> radii,
                                   std::span<const std::span<const double>> densities);

/// Calls fn(idx, w) for every node whose cell meets B_radius(center) ∩ domain, w the cell
/// fraction (multiply by cell_volume for measure). Visiting order is deterministic.
void visit_ball(const Lattice& lattice, const Point& center, double radius,
                const std::function<void(std::size_t, double)>& fn);

/// Throws DomainError when the region crosses the curved boundary of the domain.
void require_region_inside(const Lattice& lattice, const Region& region);

/// Full-weight rows and cut nodes of a node-centred ball B_{m h}; offsets relative to the centre.
struct BallStencil {
  struct Run {
    Index prefix{};
    int lo = 0, hi = 0;
  };
  struct Cut {
    Index offset{};
    double weight = 0.0;
  };
  int n = 0;
  double radius = 0.0;
  std::vector<Run> runs;
  std::vector<Cut> cuts;
};

/// Stencil of B_radius(0) on an unclipped lattice of spacing h (cached per (n, radius/h)).
const BallStencil& ball_stencil(int n, double h, double radius);

/// Stencil of B_radius(0) ∩ {y_n >= -depth h}: nodes of the row at -depth lie on a flat
/// face and own only the upper half of their cells.
const BallStencil& face_ball_stencil(int n, double h, double radius, int depth);

/// ∫_{B_radius(node k) ∩ domain} f through the cached stencil. Stencil nodes that are not
/// stored lie outside the domain and contribute nothing; valid when stencil_applies holds.
double stencil_integral(const Lattice& lattice, const Index& k, const BallStencil& stencil,
                        std::span<const double> scalar);

/// True when a cached stencil gives the quadrature of B_radius(c) ∩ domain: c is a node,
/// the ball does not cover the whole domain (whose boundary cells then count in full)
/// and only the half-ball face, if any, cuts it.
bool stencil_applies(const Lattice& lattice, const Point& c, double radius);

// Serialization ------------------------------------------------------------

/// Little-endian binary layout: magic "BHGF", version, n, L, h, shape tag,
/// centre/origin, radius, extents, node count, flag-block length, values, flags.
void write_binary(std::ostream& out, const GridField& f,
                  std::span<const std::uint8_t> flags = {});
void write_binary(const std::string& path, const GridField& f,
                  std::span<const std::uint8_t> flags = {});
GridField read_binary(std::istream& in, std::vector<std::uint8_t>* flags = nullptr);
GridField read_binary(const std::string& path, std::vector<std::uint8_t>* flags = nullptr);

/// CSV with one node per row: x0..x{n-1}, mask, v0..v{L-1}.
void write_csv(std::ostream& out, const GridField& f);
void write_csv(const std::string& path, const GridField& f);

}  // namespace biharm
