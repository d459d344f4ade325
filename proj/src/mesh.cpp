#include "hsmlab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "hsmlab/parallel.hpp"

namespace hsmlab {

std::string to_string(SingularSet set) {
  switch (set) {
    case SingularSet::none: return "none";
    case SingularSet::cylinder_y0: return "cylinder_y0";
    case SingularSet::point_origin: return "point_origin";
    case SingularSet::domain_boundary: return "domain_boundary";
  }
  return "none";
}

SingularSet singular_set_from_string(std::string_view name) {
  if (name == "none") return SingularSet::none;
  if (name == "cylinder_y0") return SingularSet::cylinder_y0;
  if (name == "point_origin") return SingularSet::point_origin;
  if (name == "domain_boundary") return SingularSet::domain_boundary;
  throw std::invalid_argument("unknown singular set '" + std::string(name) + "'");
}

double GridDomain::max_spacing() const { return *std::max_element(spacing_.begin(), spacing_.end()); }

double GridDomain::coordinate(std::size_t grid, int axis) const {
  const auto a = static_cast<std::size_t>(axis);
  const auto i = (grid / strides_[a]) % static_cast<std::size_t>(resolution_[a]);
  return extents_[a].lo + (static_cast<double>(i) + 0.5) * spacing_[a];
}

void GridDomain::coordinates(std::size_t grid, std::span<double> out) const {
  for (int k = 0; k < dim(); ++k) out[static_cast<std::size_t>(k)] = coordinate(grid, k);
}

std::vector<double> GridDomain::active_coordinates(std::size_t active) const {
  std::vector<double> x(static_cast<std::size_t>(dim()));
  coordinates(grid_index(active), x);
  return x;
}

void GridDomain::multi_index(std::size_t grid, std::span<int> out) const {
  for (std::size_t a = 0; a < extents_.size(); ++a)
    out[a] = static_cast<int>((grid / strides_[a]) % static_cast<std::size_t>(resolution_[a]));
}

double GridDomain::distance_to_singular_set(std::span<const double> x) const {
  switch (singular_set_) {
    case SingularSet::none: return std::numeric_limits<double>::infinity();
    case SingularSet::point_origin: {
      double s = 0.0;
      for (double v : x) s += v * v;
      return std::sqrt(s);
    }
    case SingularSet::cylinder_y0: {
      double s = 0.0;
      for (int k = split_.n; k < dim(); ++k) s += x[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
      return std::sqrt(s);
    }
    case SingularSet::domain_boundary: {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < extents_.size(); ++k)
        d = std::min({d, x[k] - extents_[k].lo, extents_[k].hi - x[k]});
      return d;
    }
  }
  return std::numeric_limits<double>::infinity();
}

void GridDomain::finalize(const std::vector<char>& mask) {
  const auto d = static_cast<std::size_t>(dim());
  active_index_.assign(node_count_, -1);
  active_nodes_.clear();
  for (std::size_t g = 0; g < node_count_; ++g) {
    if (mask[g]) {
      active_index_[g] = static_cast<std::int64_t>(active_nodes_.size());
      active_nodes_.push_back(g);
    }
  }

  std::vector<int> idx(d);
  auto for_each_neighbor = [&](std::size_t g, auto&& fn) {
    multi_index(g, idx);
    for (std::size_t a = 0; a < d; ++a) {
      for (int dir = 0; dir < 2; ++dir) {
        const int j = idx[a] + (dir == 0 ? -1 : 1);
        if (j < 0 || j >= resolution_[a]) {
          fn(a, dir, std::nullopt);
        } else {
          fn(a, dir, std::optional<std::size_t>(dir == 0 ? g - strides_[a] : g + strides_[a]));
        }
      }
    }
  };

  // Centers: active nodes, then inactive nodes touching an active node.
  centers_ = active_nodes_;
  std::vector<std::int64_t> center_of(node_count_, -1);
  for (std::size_t c = 0; c < centers_.size(); ++c) center_of[centers_[c]] = static_cast<std::int64_t>(c);
  for (std::size_t g = 0; g < node_count_; ++g) {
    if (mask[g]) continue;
    bool touches = false;
    for_each_neighbor(g, [&](std::size_t, int, std::optional<std::size_t> nb) {
      if (nb && mask[*nb]) touches = true;
    });
    if (touches) {
      center_of[g] = static_cast<std::int64_t>(centers_.size());
      centers_.push_back(g);
    }
  }

  neighbors_.assign(centers_.size() * 2 * d, kZero);
  for (std::size_t c = 0; c < centers_.size(); ++c) {
    for_each_neighbor(centers_[c], [&](std::size_t a, int dir, std::optional<std::size_t> nb) {
      std::int32_t code = kMirror;
      if (nb) code = center_of[*nb] >= 0 ? static_cast<std::int32_t>(center_of[*nb]) : kZero;
      neighbors_[c * 2 * d + 2 * a + static_cast<std::size_t>(dir)] = code;
    });
  }
}

DomainPtr GridDomain::restricted(const std::function<bool(std::span<const double>)>& keep) const {
  auto out = std::shared_ptr<GridDomain>(new GridDomain(*this));
  std::vector<char> mask(node_count_, 0);
  std::vector<double> x(static_cast<std::size_t>(dim()));
  for (std::size_t g = 0; g < node_count_; ++g) {
    if (!is_active(g)) continue;
    coordinates(g, x);
    mask[g] = keep(x) ? 1 : 0;
  }
  out->finalize(mask);
  return out;
}

bool GridDomain::same_layout(const GridDomain& other) const {
  if (this == &other) return true;
  if (dim() != other.dim() || resolution_ != other.resolution_ || split_.n != other.split_.n ||
      split_.m != other.split_.m || singular_set_ != other.singular_set_ ||
      active_nodes_ != other.active_nodes_)
    return false;
  for (std::size_t k = 0; k < extents_.size(); ++k)
    if (extents_[k].lo != other.extents_[k].lo || extents_[k].hi != other.extents_[k].hi) return false;
  return true;
}

DomainPtr build_grid(std::vector<Interval> extents, std::vector<int> resolution, Split split,
                     SingularSet singular_set, double dirichlet_layer) {
  const int dim = static_cast<int>(extents.size());
  if (dim < 1) throw std::invalid_argument("grid needs at least one axis");
  if (resolution.size() != extents.size())
    throw std::invalid_argument("resolution and extents have different lengths");
  if (split.n < 0 || split.m < 0 || split.n + split.m != dim)
    throw std::invalid_argument("split (n, m) must satisfy n + m = N");
  if (singular_set == SingularSet::cylinder_y0 && split.m < 1)
    throw std::invalid_argument("cylinder_y0 needs m >= 1");
  for (int k = 0; k < dim; ++k) {
    const auto a = static_cast<std::size_t>(k);
    if (resolution[a] < 2) throw std::invalid_argument("resolution must be >= 2 on every axis");
    if (!(extents[a].hi > extents[a].lo)) throw std::invalid_argument("zero-volume extent");
  }
  if (!(dirichlet_layer >= 0.0)) throw std::invalid_argument("dirichlet layer must be >= 0");

  auto g = std::shared_ptr<GridDomain>(new GridDomain());
  g->extents_ = std::move(extents);
  g->resolution_ = std::move(resolution);
  g->split_ = split;
  g->singular_set_ = singular_set;
  g->dirichlet_layer_ = singular_set == SingularSet::none ? 0.0 : dirichlet_layer;
  g->spacing_.resize(static_cast<std::size_t>(dim));
  g->strides_.resize(static_cast<std::size_t>(dim));
  g->cell_volume_ = 1.0;
  std::size_t stride = 1;
  for (int k = dim - 1; k >= 0; --k) {
    const auto a = static_cast<std::size_t>(k);
    g->spacing_[a] = (g->extents_[a].hi - g->extents_[a].lo) / g->resolution_[a];
    g->cell_volume_ *= g->spacing_[a];
    g->strides_[a] = stride;
    stride *= static_cast<std::size_t>(g->resolution_[a]);
  }
  g->node_count_ = stride;

  // Without a layer a node is dropped only when it sits on K (odd resolutions through 0).
  std::vector<char> mask(g->node_count_, 1);
  if (singular_set != SingularSet::none) {
    // the layer is measured in the spacing normal to K (the y-axes for a cylinder)
    double h_normal = g->max_spacing();
    if (singular_set == SingularSet::cylinder_y0)
      h_normal = *std::max_element(g->spacing_.begin() + split.n, g->spacing_.end());
    const double eps = std::max(1e-12 * g->max_spacing(), g->dirichlet_layer_ * (1.0 - 1e-12) * h_normal);
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (std::size_t n = 0; n < g->node_count_; ++n) {
      g->coordinates(n, x);
      if (g->distance_to_singular_set(x) <= eps) mask[n] = 0;
    }
  }
  g->finalize(mask);
  return g;
}

DomainPtr build_cube(int dim, double lo, double hi, int resolution, Split split, SingularSet singular_set,
                     double dirichlet_layer) {
  return build_grid(std::vector<Interval>(static_cast<std::size_t>(dim), Interval{lo, hi}),
                    std::vector<int>(static_cast<std::size_t>(dim), resolution), split, singular_set,
                    dirichlet_layer);
}

// ---------------------------------------------------------------------------
// ScalarField

ScalarField::ScalarField(DomainPtr domain, std::vector<double> values,
                         std::optional<std::vector<double>> exact_gradient)
    : domain_(std::move(domain)), values_(std::move(values)), exact_gradient_(std::move(exact_gradient)) {
  if (!domain_) throw std::invalid_argument("field needs a domain");
  if (values_.size() != domain_->active_count())
    throw std::invalid_argument("field length does not match the active-node count");
  if (exact_gradient_ &&
      exact_gradient_->size() != values_.size() * static_cast<std::size_t>(domain_->dim()))
    throw std::invalid_argument("exact gradient has the wrong length");
}

ScalarField ScalarField::zeros(DomainPtr domain) { return constant(std::move(domain), 0.0); }

ScalarField ScalarField::constant(DomainPtr domain, double value) {
  const auto n = domain->active_count();
  const auto d = static_cast<std::size_t>(domain->dim());
  return ScalarField(std::move(domain), std::vector<double>(n, value), std::vector<double>(n * d, 0.0));
}

ScalarField ScalarField::sample(DomainPtr domain, const PointFunction& f) {
  std::vector<double> v(domain->active_count());
  std::vector<double> x(static_cast<std::size_t>(domain->dim()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    domain->coordinates(domain->grid_index(i), x);
    v[i] = f(x);
  }
  return ScalarField(std::move(domain), std::move(v));
}

ScalarField ScalarField::sample(DomainPtr domain, const PointFunction& f, const GradientFunction& grad) {
  const auto n = domain->active_count();
  const auto d = static_cast<std::size_t>(domain->dim());
  std::vector<double> v(n), gv(n * d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    domain->coordinates(domain->grid_index(i), x);
    v[i] = f(x);
    grad(x, std::span<double>(gv.data() + i * d, d));
  }
  return ScalarField(std::move(domain), std::move(v), std::move(gv));
}

ScalarField ScalarField::abs() const {
  std::vector<double> v(values_.size());
  std::optional<std::vector<double>> g;
  if (exact_gradient_) g = std::vector<double>(exact_gradient_->size());
  const auto d = static_cast<std::size_t>(domain_->dim());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::abs(values_[i]);
    if (g) {
      const double s = values_[i] < 0.0 ? -1.0 : 1.0;
      for (std::size_t k = 0; k < d; ++k) (*g)[i * d + k] = s * (*exact_gradient_)[i * d + k];
    }
  }
  return ScalarField(domain_, std::move(v), std::move(g));
}

ScalarField ScalarField::scaled(double factor) const {
  std::vector<double> v(values_);
  for (double& x : v) x *= factor;
  std::optional<std::vector<double>> g = exact_gradient_;
  if (g)
    for (double& x : *g) x *= factor;
  return ScalarField(domain_, std::move(v), std::move(g));
}

bool ScalarField::is_nonnegative() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return x >= 0.0; });
}

ScalarField linear_combination(double a, const ScalarField& f, double b, const ScalarField& g) {
  require_same_domain(f.domain(), g);
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * f[i] + b * g[i];
  std::optional<std::vector<double>> grad;
  if (f.has_exact_gradient() && g.has_exact_gradient()) {
    const auto& gf = f.exact_gradient();
    const auto& gg = g.exact_gradient();
    grad = std::vector<double>(gf.size());
    for (std::size_t i = 0; i < gf.size(); ++i) (*grad)[i] = a * gf[i] + b * gg[i];
  }
  return ScalarField(f.domain(), std::move(v), std::move(grad));
}

void require_same_domain(const DomainPtr& domain, const ScalarField& field) {
  if (!domain || !field.domain()) throw std::invalid_argument("missing domain");
  if (!domain->same_layout(*field.domain())) throw std::invalid_argument("field/domain mismatch");
}

// ---------------------------------------------------------------------------
// Operations

VectorField gradient(const DomainPtr& domain, const ScalarField& field) {
  require_same_domain(domain, field);
  const auto d = static_cast<std::size_t>(domain->dim());
  const auto n = domain->active_count();
  VectorField out{domain, std::vector<double>(n * d, 0.0)};
  if (field.has_exact_gradient()) {
    out.data = field.exact_gradient();
    return out;
  }
  const auto vals = field.values();
  parallel::for_chunks(n, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<int> idx(d);
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t g = domain->grid_index(i);
      domain->multi_index(g, idx);
      for (std::size_t a = 0; a < d; ++a) {
        const double h = domain->spacing()[a];
        const std::size_t s = domain->stride(static_cast<int>(a));
        const int res = domain->resolution()[a];
        // Active neighbor value at offset k along axis a, if any.
        auto value_at = [&](int k) -> std::optional<double> {
          const int j = idx[a] + k;
          if (j < 0 || j >= res) return std::nullopt;
          const std::size_t gn = static_cast<std::size_t>(static_cast<std::int64_t>(g) + k * static_cast<std::int64_t>(s));
          const auto ai = domain->active_index(gn);
          if (ai < 0) return std::nullopt;
          return vals[static_cast<std::size_t>(ai)];
        };
        const double u0 = vals[i];
        const auto up = value_at(1);
        const auto um = value_at(-1);
        double gk = 0.0;
        if (up && um) {
          gk = (*up - *um) / (2.0 * h);
        } else if (up) {
          const auto up2 = value_at(2);
          gk = up2 ? (-3.0 * u0 + 4.0 * *up - *up2) / (2.0 * h) : (*up - u0) / h;
        } else if (um) {
          const auto um2 = value_at(-2);
          gk = um2 ? (3.0 * u0 - 4.0 * *um + *um2) / (2.0 * h) : (u0 - *um) / h;
        }
        out.data[i * d + a] = gk;
      }
    }
  });
  return out;
}

double integrate(const DomainPtr& domain, std::span<const double> values) {
  if (values.size() != domain->active_count()) throw std::invalid_argument("field/domain mismatch");
  const double s = parallel::sum(values.size(), [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += values[i];
    return acc;
  });
  return s * domain->cell_volume();
}

double integrate(const DomainPtr& domain, const ScalarField& field) {
  require_same_domain(domain, field);
  return integrate(domain, field.values());
}

ScalarField distance_field(const DomainPtr& domain) {
  if (domain->singular_set() == SingularSet::none)
    throw std::invalid_argument("distance_field needs a singular set");
  const GridDomain& g = *domain;
  return ScalarField::sample(domain, [&g](std::span<const double> x) { return g.distance_to_singular_set(x); });
}

double lp_norm(const DomainPtr& domain, const ScalarField& field, double q, const ScalarField& weight) {
  require_same_domain(domain, field);
  require_same_domain(domain, weight);
  if (!(q >= 1.0)) throw std::invalid_argument("lp_norm needs q >= 1");
  if (!weight.is_nonnegative()) throw std::invalid_argument("lp_norm weight has a negative node");
  const auto u = field.values();
  const auto w = weight.values();
  const double s = parallel::sum(u.size(), [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += w[i] * std::pow(std::abs(u[i]), q);
    return acc;
  });
  return s * domain->cell_volume();
}

// ---------------------------------------------------------------------------
// CSV dump

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

void write_field_csv(std::ostream& out, const ScalarField& field) {
  const GridDomain& g = *field.domain();
  out << std::setprecision(17);
  out << "# hsmlab-field v1\n";
  out << "dimension," << g.dim() << "\n";
  out << "split," << g.split().n << "," << g.split().m << "\n";
  out << "singular_set," << to_string(g.singular_set()) << "\n";
  if (g.dirichlet_layer() > 0.0) out << "dirichlet_layer," << g.dirichlet_layer() << "\n";
  out << "extents";
  for (const auto& e : g.extents()) out << "," << e.lo << "," << e.hi;
  out << "\nresolution";
  for (int r : g.resolution()) out << "," << r;
  out << "\nactive," << g.active_count() << "\n";
  for (std::size_t i = 0; i < field.size(); ++i) out << g.grid_index(i) << "," << field[i] << "\n";
}

ScalarField read_field_csv(std::istream& in) {
  std::string line;
  int dim = 0;
  Split split;
  SingularSet set = SingularSet::none;
  std::vector<Interval> extents;
  std::vector<int> res;
  std::size_t active = 0;
  double layer = 0.0;
  bool header_done = false;
  while (!header_done && std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv(line);
    if (f.empty()) continue;
    if (f[0] == "dimension") {
      dim = std::stoi(f.at(1));
    } else if (f[0] == "split") {
      split = {std::stoi(f.at(1)), std::stoi(f.at(2))};
    } else if (f[0] == "singular_set") {
      set = singular_set_from_string(f.at(1));
    } else if (f[0] == "dirichlet_layer") {
      layer = std::stod(f.at(1));
    } else if (f[0] == "extents") {
      for (std::size_t k = 1; k + 1 < f.size(); k += 2) extents.push_back({std::stod(f[k]), std::stod(f[k + 1])});
    } else if (f[0] == "resolution") {
      for (std::size_t k = 1; k < f.size(); ++k) res.push_back(std::stoi(f[k]));
    } else if (f[0] == "active") {
      active = static_cast<std::size_t>(std::stoull(f.at(1)));
      header_done = true;
    } else {
      throw std::invalid_argument("unexpected field header record '" + f[0] + "'");
    }
  }
  if (!header_done || static_cast<int>(extents.size()) != dim)
    throw std::invalid_argument("incomplete field header");
  auto domain = build_grid(extents, res, split, set, layer);
  std::vector<char> keep(domain->node_count(), 0);
  std::vector<std::pair<std::size_t, double>> rows;
  rows.reserve(active);
  while (rows.size() < active && std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const auto gidx = static_cast<std::size_t>(std::stoull(f.at(0)));
    if (gidx >= domain->node_count() || !domain->is_active(gidx))
      throw std::invalid_argument("field row refers to a node outside the grid mask");
    keep[gidx] = 1;
    rows.emplace_back(gidx, std::stod(f.at(1)));
  }
  if (rows.size() != active) throw std::invalid_argument("truncated field dump");
  DomainPtr d = domain;
  if (active != domain->active_count()) {
    const GridDomain& base = *domain;
    std::vector<double> x(static_cast<std::size_t>(dim));
    // Rebuild the narrowed mask from the listed nodes.
    std::vector<char> listed = keep;
    d = base.restricted([&](std::span<const double> xs) {
      std::size_t gidx = 0;
      for (int k = 0; k < dim; ++k) {
        const auto a = static_cast<std::size_t>(k);
        const auto i = static_cast<std::size_t>(std::floor((xs[a] - base.extents()[a].lo) / base.spacing()[a]));
        gidx += i * base.stride(k);
      }
      return listed[gidx] != 0;
    });
  }
  std::vector<double> values(d->active_count());
  for (const auto& [gidx, v] : rows) values[static_cast<std::size_t>(d->active_index(gidx))] = v;
  return ScalarField(d, std::move(values));
}

}  // namespace hsmlab
