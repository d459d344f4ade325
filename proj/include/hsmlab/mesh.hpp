#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hsmlab {

/// Where the singular set K of a Hardy-type potential lives.
enum class SingularSet {
  none,
  cylinder_y0,     ///< K = R^n x {0}: the y-block of the coordinates vanishes
  point_origin,    ///< K = {0}
  domain_boundary  ///< K = boundary of the box
};

std::string to_string(SingularSet set);
SingularSet singular_set_from_string(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Coordinate split x = (z, y) with z in R^n and y in R^m; y are the last m axes.
struct Split {
  int n = 0;
  int m = 0;
};

class GridDomain;
using DomainPtr = std::shared_ptr<const GridDomain>;

/// Cell-centered tensor grid on a box, with an active-node mask.
///
/// Nodes are ordered lexicographically (axis 0 slowest). Active nodes are the
/// degrees of freedom; inactive nodes hold zero. The box boundary is a
/// homogeneous Dirichlet face half a cell beyond the outermost nodes.
///
/// The discrete energies sum a stencil term over "centers": every active node
/// (center index == active index) followed by every inactive node adjacent to
/// an active one. Neighbor codes are center indices, kMirror for the
/// antisymmetric ghost beyond the box, or kZero for an inactive node that is
/// not a center.
class GridDomain {
 public:
  static constexpr std::int32_t kMirror = -1;
  static constexpr std::int32_t kZero = -2;

  int dim() const { return static_cast<int>(extents_.size()); }
  Split split() const { return split_; }
  const std::vector<Interval>& extents() const { return extents_; }
  const std::vector<int>& resolution() const { return resolution_; }
  const std::vector<double>& spacing() const { return spacing_; }
  SingularSet singular_set() const { return singular_set_; }
  /// Nodes closer to K than this many spacings normal to K are inactive (0: only nodes on K).
  double dirichlet_layer() const { return dirichlet_layer_; }

  std::size_t node_count() const { return node_count_; }
  std::size_t active_count() const { return active_nodes_.size(); }
  double cell_volume() const { return cell_volume_; }
  double max_spacing() const;

  bool is_active(std::size_t grid) const { return active_index_[grid] >= 0; }
  std::int64_t active_index(std::size_t grid) const { return active_index_[grid]; }
  std::size_t grid_index(std::size_t active) const { return active_nodes_[active]; }

  double coordinate(std::size_t grid, int axis) const;
  void coordinates(std::size_t grid, std::span<double> out) const;
  std::vector<double> active_coordinates(std::size_t active) const;
  void multi_index(std::size_t grid, std::span<int> out) const;
  std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }

  std::size_t center_count() const { return centers_.size(); }
  std::size_t center_grid_index(std::size_t center) const { return centers_[center]; }
  /// dir: 0 = minus neighbor, 1 = plus neighbor.
  std::int32_t neighbor(std::size_t center, int axis, int dir) const {
    return neighbors_[center * 2 * static_cast<std::size_t>(dim()) + 2 * static_cast<std::size_t>(axis) +
                      static_cast<std::size_t>(dir)];
  }

  /// dist(x, K) for the configured singular set; +inf when there is none.
  double distance_to_singular_set(std::span<const double> x) const;

  /// Same grid with the mask narrowed to nodes where keep(x) holds.
  DomainPtr restricted(const std::function<bool(std::span<const double>)>& keep) const;

  /// Same extents, resolution, split, singular set, and mask.
  bool same_layout(const GridDomain& other) const;

 private:
  friend DomainPtr build_grid(std::vector<Interval>, std::vector<int>, Split, SingularSet, double);
  GridDomain() = default;
  void finalize(const std::vector<char>& mask);

  std::vector<Interval> extents_;
  std::vector<int> resolution_;
  std::vector<double> spacing_;
  std::vector<std::size_t> strides_;
  Split split_;
  SingularSet singular_set_ = SingularSet::none;
  double dirichlet_layer_ = 0.0;
  std::size_t node_count_ = 0;
  double cell_volume_ = 0.0;
  std::vector<std::int64_t> active_index_;
  std::vector<std::size_t> active_nodes_;
  std::vector<std::size_t> centers_;
  std::vector<std::int32_t> neighbors_;
};

/// Builds a cell-centered grid. Nodes at zero distance from K are inactive, and so
/// are nodes with dist(x, K) < dirichlet_layer * h, h the largest spacing normal
/// to K (the y-axes for cylinder_y0, every axis otherwise). A layer of 1 imposes
/// u = 0 on K for functionals whose energy space requires it (p > m).
/// Throws std::invalid_argument on a bad split, resolution < 2, an empty extent,
/// or a negative layer.
DomainPtr build_grid(std::vector<Interval> extents, std::vector<int> resolution, Split split,
                     SingularSet singular_set, double dirichlet_layer = 0.0);

/// Cube [lo, hi]^dim with the same resolution on every axis.
DomainPtr build_cube(int dim, double lo, double hi, int resolution, Split split, SingularSet singular_set,
                     double dirichlet_layer = 0.0);

using PointFunction = std::function<double(std::span<const double>)>;
using GradientFunction = std::function<void(std::span<const double>, std::span<double>)>;

/// Real values on the active nodes, optionally with an exact gradient per node.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(DomainPtr domain, std::vector<double> values,
              std::optional<std::vector<double>> exact_gradient = std::nullopt);

  static ScalarField zeros(DomainPtr domain);
  static ScalarField constant(DomainPtr domain, double value);
  static ScalarField sample(DomainPtr domain, const PointFunction& f);
  static ScalarField sample(DomainPtr domain, const PointFunction& f, const GradientFunction& grad);

  const DomainPtr& domain() const { return domain_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool has_exact_gradient() const { return exact_gradient_.has_value(); }
  /// Row-major active x dim.
  const std::vector<double>& exact_gradient() const { return *exact_gradient_; }
  void drop_exact_gradient() { exact_gradient_.reset(); }

  ScalarField abs() const;
  ScalarField scaled(double factor) const;
  bool is_nonnegative() const;

 private:
  DomainPtr domain_;
  std::vector<double> values_;
  std::optional<std::vector<double>> exact_gradient_;
};

/// a*f + b*g; exact gradients combine when both fields carry them.
ScalarField linear_combination(double a, const ScalarField& f, double b, const ScalarField& g);

/// Per-node vectors in R^dim, same indexing as ScalarField.
struct VectorField {
  DomainPtr domain;
  std::vector<double> data;

  std::span<const double> at(std::size_t active) const {
    const auto d = static_cast<std::size_t>(domain->dim());
    return {data.data() + active * d, d};
  }
};

/// Nodewise gradient: central differences inside the mask, second-order
/// one-sided stencils at mask edges; exact gradients are returned verbatim.
VectorField gradient(const DomainPtr& domain, const ScalarField& field);

/// Midpoint rule over active cells.
double integrate(const DomainPtr& domain, const ScalarField& field);
double integrate(const DomainPtr& domain, std::span<const double> values);

/// dist(x, K) at every active node. Throws if the domain has no singular set.
ScalarField distance_field(const DomainPtr& domain);

/// Integral of weight * |u|^q (no outer power). Throws on q < 1 or a negative weight.
double lp_norm(const DomainPtr& domain, const ScalarField& field, double q, const ScalarField& weight);

/// Throws std::invalid_argument unless field lives on a grid with domain's layout.
void require_same_domain(const DomainPtr& domain, const ScalarField& field);

/// CSV dump: header records (dimension, split, singular set, extents,
/// resolution) followed by "grid_index,value" rows for active nodes in
/// lexicographic order.
void write_field_csv(std::ostream& out, const ScalarField& field);
ScalarField read_field_csv(std::istream& in);

}  // namespace hsmlab
