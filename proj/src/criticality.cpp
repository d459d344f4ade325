#include "hsmlab/criticality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hsmlab/parallel.hpp"
#include "hsmlab/solvers.hpp"

namespace hsmlab {

std::string to_string(Classification c) {
  switch (c) {
    case Classification::critical: return "critical";
    case Classification::subcritical: return "subcritical";
    case Classification::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

bool ProbeBox::contains(std::span<const double> x) const {
  for (std::size_t k = 0; k < center.size(); ++k)
    if (std::abs(x[k] - center[k]) > half_width) return false;
  return true;
}

ProbeBox default_probe_box(const GridDomain& g) {
  ProbeBox b;
  double side = std::numeric_limits<double>::infinity();
  for (const auto& e : g.extents()) {
    b.center.push_back(0.5 * (e.lo + e.hi));
    side = std::min(side, e.hi - e.lo);
  }
  const double h = g.max_spacing();
  b.half_width = std::max(1.0, std::floor(0.25 * side / h + 1e-9)) * h;
  return b;
}

std::vector<DomainPtr> expanding_domains(const GridDomain& g, const std::vector<double>& factors) {
  std::vector<DomainPtr> out;
  for (double f : factors) {
    if (!(f >= 1.0)) throw std::invalid_argument("expansion factors must be >= 1");
    std::vector<Interval> ext;
    std::vector<int> res;
    for (int k = 0; k < g.dim(); ++k) {
      const auto a = static_cast<std::size_t>(k);
      const auto& e = g.extents()[a];
      const double c = 0.5 * (e.lo + e.hi);
      const double half = 0.5 * (e.hi - e.lo) * f;
      const double r = g.resolution()[a] * f;
      // nested grids need the added margin to be a whole number of cells
      const double margin = 0.5 * (r - g.resolution()[a]);
      if (std::abs(r - std::round(r)) > 1e-9 || std::abs(margin - std::round(margin)) > 1e-9)
        throw std::invalid_argument("expansion factor does not give a nested grid");
      ext.push_back({c - half, c + half});
      res.push_back(static_cast<int>(std::lround(r)));
    }
    out.push_back(build_grid(std::move(ext), std::move(res), g.split(), g.singular_set(), g.dirichlet_layer()));
  }
  return out;
}

namespace {

std::optional<double> aitken_limit(double a, double b, double c) {
  const double d1 = b - a;
  const double d2 = c - b;
  if (d1 == 0.0) return d2 == 0.0 ? std::optional<double>(c) : std::nullopt;
  const double rho = d2 / d1;
  if (!(rho >= 0.0 && rho < 1.0)) return std::nullopt;
  return c + d2 * rho / (1.0 - rho);
}

}  // namespace

ProbeVerdict classify_probe(std::span<const double> values, const ProbeOptions& options) {
  if (values.size() < 3) throw std::invalid_argument("classification needs at least three probe values");
  const std::size_t n = values.size();
  ProbeVerdict v;
  v.threshold = options.threshold_factor * values.front();
  v.limit = aitken_limit(values[n - 3], values[n - 2], values[n - 1]);
  bool decreasing = true;
  for (std::size_t i = 1; i < n; ++i) decreasing = decreasing && values[i] < values[i - 1];
  const double last = values.back();
  if (last < v.threshold && decreasing)
    v.classification = Classification::critical;
  else if (v.limit && *v.limit >= v.threshold && last - *v.limit <= options.stabilization_fraction * last)
    v.classification = Classification::subcritical;
  else
    v.classification = Classification::inconclusive;
  return v;
}

CriticalityReport ground_state_probe(const FunctionalSpec& spec, const std::optional<ProbeBox>& box,
                                     const std::vector<DomainPtr>& domains, const ProbeOptions& options) {
  spec.validate();
  if (domains.size() < 3) throw std::invalid_argument("criticality probe needs at least three domains");
  const GridDomain& first = *domains.front();
  CriticalityReport report;
  report.box = box ? *box : default_probe_box(first);
  const ProbeBox& b = report.box;
  if (b.center.size() != static_cast<std::size_t>(first.dim())) throw std::invalid_argument("box dimension mismatch");
  for (int k = 0; k < first.dim(); ++k) {
    const auto& e = first.extents()[static_cast<std::size_t>(k)];
    const double c = b.center[static_cast<std::size_t>(k)];
    if (!(b.half_width > 0.0 && c - b.half_width > e.lo && c + b.half_width < e.hi))
      throw std::invalid_argument("box B is not strictly inside the smallest domain");
  }

  if (spec.p == 2.0) {
    // the largest domain is the binding one
    const auto e = min_eigenvalue(spec.on(domains.back()), 0.0);
    if (e.value < -1e-9) throw std::invalid_argument("base functional has a negative min-eigenvalue");
  }

  struct Stage {
    ProbeValue value;
    ScalarField minimizer;
  };
  std::vector<Stage> stages(domains.size());
  parallel::run_tasks(domains.size(), [&](std::size_t i) {
    const DomainPtr& d = domains[i];
    const FunctionalSpec s = spec.on(d);
    QuotientProblem pr;
    pr.domain = d;
    pr.p = spec.p;
    pr.q = spec.p;
    const auto v = total_potential(s);
    pr.potential.assign(v.values().begin(), v.values().end());
    pr.weight.assign(d->active_count(), 0.0);
    bool any = false;
    std::vector<double> x(static_cast<std::size_t>(d->dim()));
    for (std::size_t j = 0; j < pr.weight.size(); ++j) {
      d->coordinates(d->grid_index(j), x);
      if (b.contains(x)) {
        pr.weight[j] = 1.0;
        any = true;
      }
    }
    if (!any) throw std::invalid_argument("box B holds no active node");
    auto r = minimize_quotient(pr, options.solver, bubble_profile(*d, spec.p));
    double side = 0.0;
    for (const auto& e : d->extents()) side = std::max(side, e.hi - e.lo);
    stages[i].value = {side, d->resolution(), r.quotient_value, r.iterations};
    stages[i].minimizer = std::move(r.minimizer);
  });

  for (const auto& s : stages) report.probe_values.push_back(s.value);
  std::vector<double> curve;
  for (const auto& v : report.probe_values) curve.push_back(v.infimum);
  const auto verdict = classify_probe(curve, options);
  report.classification = verdict.classification;
  report.decision_threshold = verdict.threshold;
  report.extrapolated_limit = verdict.limit;

  // Normalize so that ∫_B |u|^p = 1.
  ScalarField u = stages.back().minimizer;
  const GridDomain& g = *domains.back();
  std::vector<double> x(static_cast<std::size_t>(g.dim()));
  double mass = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    g.coordinates(g.grid_index(j), x);
    if (b.contains(x)) mass += std::pow(std::abs(u[j]), spec.p);
  }
  mass *= g.cell_volume();
  if (mass > 0.0) u = u.scaled(std::pow(mass, -1.0 / spec.p));
  try {
    const auto fit = power_law_fit(u, b.center, 1.5 * g.max_spacing(), b.half_width);
    report.fit_exponent = fit.exponent;
    report.fit_r2 = fit.r2;
  } catch (const std::invalid_argument&) {
    // too few nodes or a sign change on the window: no fit
  }
  report.fitted_ground_state = std::move(u);
  return report;
}

PowerLawFit power_law_fit(const ScalarField& field, std::span<const double> center, double r_min, double r_max) {
  const GridDomain& g = *field.domain();
  if (center.size() != static_cast<std::size_t>(g.dim())) throw std::invalid_argument("center dimension mismatch");
  std::vector<double> x(static_cast<std::size_t>(g.dim()));
  std::vector<double> lx, ly;
  for (std::size_t j = 0; j < field.size(); ++j) {
    g.coordinates(g.grid_index(j), x);
    double r2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) r2 += (x[k] - center[k]) * (x[k] - center[k]);
    const double r = std::sqrt(r2);
    if (!(r > r_min && r <= r_max)) continue;
    if (!(field[j] > 0.0)) throw std::invalid_argument("field is not positive on the fit window");
    lx.push_back(std::log(r));
    ly.push_back(std::log(field[j]));
  }
  if (lx.size() < 8) throw std::invalid_argument("power-law fit needs at least 8 nodes in the window");
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit window holds a single radius");
  PowerLawFit out;
  out.exponent = sxy / sxx;
  out.r2 = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  out.nodes = lx.size();
  return out;
}

}  // namespace hsmlab
