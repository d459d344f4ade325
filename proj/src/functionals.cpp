#include "hsmlab/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hsmlab/operators.hpp"
#include "hsmlab/parallel.hpp"

namespace hsmlab {

namespace {

void require_layout(const std::optional<ScalarField>& table, const DomainPtr& domain, const char* what) {
  if (!table) throw std::invalid_argument(std::string(what) + ": tabulated kind without a field");
  if (!table->domain()->same_layout(*domain))
    throw std::invalid_argument(std::string(what) + ": tabulated field lives on a different grid");
}

double box_distance(const GridDomain& g, std::span<const double> x, int axis) {
  double d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < g.dim(); ++k) {
    if (axis >= 0 && k != axis) continue;
    const auto& e = g.extents()[static_cast<std::size_t>(k)];
    d = std::min({d, x[static_cast<std::size_t>(k)] - e.lo, e.hi - x[static_cast<std::size_t>(k)]});
  }
  return d;
}

double sum_abs_pow(std::span<const double> u, std::span<const double> w, double q) {
  return parallel::sum(u.size(), [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double a = std::abs(u[i]);
      if (a == 0.0) continue;
      acc += (w.empty() ? 1.0 : w[i]) * (q == 2.0 ? a * a : std::pow(a, q));
    }
    return acc;
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Kind names

std::string to_string(ProfileSpec::Kind kind) {
  switch (kind) {
    case ProfileSpec::Kind::zero: return "zero";
    case ProfileSpec::Kind::constant: return "constant";
    case ProfileSpec::Kind::affine: return "affine";
    case ProfileSpec::Kind::dist_power: return "dist_power";
    case ProfileSpec::Kind::gaussian: return "gaussian";
    case ProfileSpec::Kind::bump: return "bump";
    case ProfileSpec::Kind::tabulated: return "tabulated";
  }
  return "zero";
}

ProfileSpec::Kind profile_kind_from_string(const std::string& name) {
  for (auto k : {ProfileSpec::Kind::zero, ProfileSpec::Kind::constant, ProfileSpec::Kind::affine,
                 ProfileSpec::Kind::dist_power, ProfileSpec::Kind::gaussian, ProfileSpec::Kind::bump,
                 ProfileSpec::Kind::tabulated})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown profile kind '" + name + "'");
}

std::string to_string(PotentialSpec::Kind kind) {
  switch (kind) {
    case PotentialSpec::Kind::zero: return "zero";
    case PotentialSpec::Kind::hardy_cylinder: return "hardy_cylinder";
    case PotentialSpec::Kind::hardy_point: return "hardy_point";
    case PotentialSpec::Kind::hardy_boundary: return "hardy_boundary";
    case PotentialSpec::Kind::constant: return "constant";
    case PotentialSpec::Kind::tabulated: return "tabulated";
  }
  return "zero";
}

PotentialSpec::Kind potential_kind_from_string(const std::string& name) {
  for (auto k : {PotentialSpec::Kind::zero, PotentialSpec::Kind::hardy_cylinder, PotentialSpec::Kind::hardy_point,
                 PotentialSpec::Kind::hardy_boundary, PotentialSpec::Kind::constant, PotentialSpec::Kind::tabulated})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown potential kind '" + name + "'");
}

std::string to_string(WeightSpec::Kind kind) {
  switch (kind) {
    case WeightSpec::Kind::constant: return "constant";
    case WeightSpec::Kind::ft_log: return "ft_log";
    case WeightSpec::Kind::tabulated: return "tabulated";
  }
  return "constant";
}

WeightSpec::Kind weight_kind_from_string(const std::string& name) {
  for (auto k : {WeightSpec::Kind::constant, WeightSpec::Kind::ft_log, WeightSpec::Kind::tabulated})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown weight kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// Profiles

ScalarField ProfileSpec::evaluate(const DomainPtr& domain) const {
  const GridDomain& g = *domain;
  const auto dim = static_cast<std::size_t>(g.dim());
  switch (kind) {
    case Kind::zero: return ScalarField::zeros(domain);
    case Kind::constant: return ScalarField::constant(domain, value);
    case Kind::affine: {
      if (coefficients.size() != dim + 1)
        throw std::invalid_argument("affine profile needs N+1 coefficients");
      const auto& c = coefficients;
      return ScalarField::sample(
          domain,
          [&c, dim](std::span<const double> x) {
            double s = c[0];
            for (std::size_t k = 0; k < dim; ++k) s += c[k + 1] * x[k];
            return s;
          },
          [&c, dim](std::span<const double>, std::span<double> gr) {
            for (std::size_t k = 0; k < dim; ++k) gr[k] = c[k + 1];
          });
    }
    case Kind::dist_power: {
      if (axis >= g.dim()) throw std::invalid_argument("dist_power axis out of range");
      return ScalarField::sample(domain, [&](std::span<const double> x) {
        return value * std::pow(box_distance(g, x, axis), exponent);
      });
    }
    case Kind::gaussian: {
      if (center.size() != dim) throw std::invalid_argument("gaussian profile needs an N-dimensional center");
      if (!(width > 0.0)) throw std::invalid_argument("gaussian width must be positive");
      const double amp = value;
      const double s2 = width * width;
      const auto& c0 = center;
      auto f = [&c0, amp, s2, dim](std::span<const double> x) {
        double r2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) r2 += (x[k] - c0[k]) * (x[k] - c0[k]);
        return amp * std::exp(-0.5 * r2 / s2);
      };
      return ScalarField::sample(domain, f, [&c0, s2, dim, f](std::span<const double> x, std::span<double> gr) {
        const double v = f(x);
        for (std::size_t k = 0; k < dim; ++k) gr[k] = -v * (x[k] - c0[k]) / s2;
      });
    }
    case Kind::bump: {
      if (center.size() != dim) throw std::invalid_argument("bump profile needs an N-dimensional center");
      if (!(width > 0.0)) throw std::invalid_argument("bump width must be positive");
      if (!(exponent >= 2.0)) throw std::invalid_argument("bump exponent must be >= 2");
      const double amp = value;
      const double r2w = width * width;
      const double e = exponent;
      const auto& c0 = center;
      auto t_of = [&c0, r2w, dim](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += (x[k] - c0[k]) * (x[k] - c0[k]);
        return s / r2w;
      };
      return ScalarField::sample(
          domain,
          [amp, e, t_of](std::span<const double> x) {
            const double t = t_of(x);
            return t < 1.0 ? amp * std::pow(1.0 - t, e) : 0.0;
          },
          [&c0, amp, e, r2w, dim, t_of](std::span<const double> x, std::span<double> gr) {
            const double t = t_of(x);
            const double f = t < 1.0 ? -2.0 * e * amp * std::pow(1.0 - t, e - 1.0) / r2w : 0.0;
            for (std::size_t k = 0; k < dim; ++k) gr[k] = f * (x[k] - c0[k]);
          });
    }
    case Kind::tabulated:
      require_layout(table, domain, "profile");
      return *table;
  }
  return ScalarField::zeros(domain);
}

// ---------------------------------------------------------------------------
// Spec

void FunctionalSpec::validate() const {
  if (!domain) throw std::invalid_argument("functional has no domain");
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("p must be a finite real > 1");
  const GridDomain& g = *domain;
  switch (potential.kind) {
    case PotentialSpec::Kind::hardy_cylinder:
      if (g.singular_set() != SingularSet::cylinder_y0)
        throw std::invalid_argument("hardy_cylinder needs singular_set = cylinder_y0");
      if (potential.m != g.split().m)
        throw std::invalid_argument("hardy_cylinder m does not match the domain split");
      break;
    case PotentialSpec::Kind::hardy_point:
      if (g.singular_set() != SingularSet::point_origin)
        throw std::invalid_argument("hardy_point needs singular_set = point_origin");
      break;
    case PotentialSpec::Kind::hardy_boundary:
      if (g.singular_set() != SingularSet::domain_boundary)
        throw std::invalid_argument("hardy_boundary needs singular_set = domain_boundary");
      break;
    case PotentialSpec::Kind::tabulated:
      require_layout(potential.table, domain, "potential");
      for (double v : potential.table->values())
        if (!std::isfinite(v)) throw std::invalid_argument("tabulated potential is not finite");
      break;
    default: break;
  }
  switch (weight.kind) {
    case WeightSpec::Kind::constant:
      if (!(weight.value > 0.0)) throw std::invalid_argument("constant weight must be positive");
      break;
    case WeightSpec::Kind::ft_log:
      if (g.dim() <= 2) throw std::invalid_argument("ft_log weight needs N > 2");
      if (!(weight.radius > 0.0)) throw std::invalid_argument("ft_log weight needs D > 0");
      break;
    case WeightSpec::Kind::tabulated:
      require_layout(weight.table, domain, "weight");
      for (double v : weight.table->values())
        if (!(v > 0.0)) throw std::invalid_argument("tabulated weight must be positive at active nodes");
      break;
  }
  if (poincare_psi && poincare_psi->kind == ProfileSpec::Kind::tabulated)
    require_layout(poincare_psi->table, domain, "poincare psi");
  if (perturbation && perturbation->profile.kind == ProfileSpec::Kind::tabulated)
    require_layout(perturbation->profile.table, domain, "perturbation");
}

FunctionalSpec FunctionalSpec::on(DomainPtr other) const {
  FunctionalSpec out = *this;
  out.domain = std::move(other);
  out.validate();
  return out;
}

FunctionalSpec FunctionalSpec::with_lambda(double lambda) const {
  if (!perturbation) throw std::invalid_argument("functional has no perturbation");
  FunctionalSpec out = *this;
  out.perturbation->lambda = lambda;
  return out;
}

// ---------------------------------------------------------------------------
// Scalars

double critical_exponent(int N, double p) {
  if (!(p > 1.0)) throw std::invalid_argument("critical exponent needs p > 1");
  if (p >= N) throw std::invalid_argument("critical exponent needs p < N");
  return p * N / (N - p);
}

double hardy_constant(int m, double p) {
  if (m < 1 || !(p > 1.0)) throw std::invalid_argument("hardy constant needs m >= 1 and p > 1");
  return std::pow(std::abs((m - p) / p), p);
}

double ft_weight(double r, double D, int N) {
  if (N <= 2) throw std::invalid_argument("ft weight needs N > 2");
  if (!(r > 0.0) || !(r < D)) throw std::invalid_argument("ft weight needs 0 < r < D");
  const double x = 1.0 / std::abs(std::log(r / D));
  return std::pow(x, 1.0 + static_cast<double>(N) / (N - 2));
}

// ---------------------------------------------------------------------------
// Fields

ScalarField potential_field(const FunctionalSpec& spec) {
  const auto& pot = spec.potential;
  const DomainPtr& d = spec.domain;
  switch (pot.kind) {
    case PotentialSpec::Kind::zero: return ScalarField::zeros(d);
    case PotentialSpec::Kind::constant: return ScalarField::constant(d, pot.coefficient);
    case PotentialSpec::Kind::tabulated: require_layout(pot.table, d, "potential"); return *pot.table;
    default: break;
  }
  const GridDomain& g = *d;
  const double c = pot.coefficient;
  const double p = spec.p;
  return ScalarField::sample(d, [&g, c, p](std::span<const double> x) {
    return -c * std::pow(g.distance_to_singular_set(x), -p);
  });
}

ScalarField total_potential(const FunctionalSpec& spec) {
  ScalarField v = potential_field(spec);
  v.drop_exact_gradient();
  if (!spec.perturbation || spec.perturbation->lambda == 0.0) return v;
  const ScalarField vt = spec.perturbation->profile.evaluate(spec.domain);
  auto& out = v.mutable_values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += spec.perturbation->lambda * vt[i];
  return v;
}

ScalarField weight_field(const FunctionalSpec& spec) {
  const auto& w = spec.weight;
  const DomainPtr& d = spec.domain;
  switch (w.kind) {
    case WeightSpec::Kind::constant: return ScalarField::constant(d, w.value);
    case WeightSpec::Kind::tabulated: require_layout(w.table, d, "weight"); return *w.table;
    case WeightSpec::Kind::ft_log: break;
  }
  const int N = d->dim();
  const double expo = w.exponent.value_or(1.0 + static_cast<double>(N) / (N - 2));
  const double D = w.radius;
  return ScalarField::sample(d, [D, expo](std::span<const double> x) {
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    const double r = std::sqrt(r2);
    if (!(r < D)) throw std::invalid_argument("ft_log weight: D must exceed |x| on the domain");
    return std::pow(1.0 / std::abs(std::log(r / D)), expo);
  });
}

// ---------------------------------------------------------------------------
// Functionals

double gradient_term(const FunctionalSpec& spec, const ScalarField& u) {
  require_same_domain(spec.domain, u);
  if (!u.has_exact_gradient()) return ops::gradient_energy(*spec.domain, u.values(), spec.p);
  const auto& gr = u.exact_gradient();
  const auto d = static_cast<std::size_t>(spec.domain->dim());
  const double p = spec.p;
  const double s = parallel::sum(u.size(), [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += gr[i * d + k] * gr[i * d + k];
      if (sq > 0.0) acc += p == 2.0 ? sq : std::pow(sq, 0.5 * p);
    }
    return acc;
  });
  return s * spec.domain->cell_volume();
}

double evaluate_Q(const FunctionalSpec& spec, const ScalarField& u) {
  require_same_domain(spec.domain, u);
  const double grad = gradient_term(spec, u);
  const ScalarField v = total_potential(spec);
  return grad + sum_abs_pow(u.values(), v.values(), spec.p) * spec.domain->cell_volume();
}

double sobolev_rhs(const FunctionalSpec& spec, const ScalarField& u) {
  require_same_domain(spec.domain, u);
  const double ps = critical_exponent(spec.domain->dim(), spec.p);
  const ScalarField w = weight_field(spec);
  const double integral = sum_abs_pow(u.values(), w.values(), ps) * spec.domain->cell_volume();
  return std::pow(integral, spec.p / ps);
}

double poincare_term(const FunctionalSpec& spec, const ScalarField& u) {
  require_same_domain(spec.domain, u);
  if (!spec.poincare_psi) throw std::invalid_argument("functional has no Poincare psi");
  const ScalarField psi = spec.poincare_psi->evaluate(spec.domain);
  const double s = ops::dot(psi.values(), u.values()) * spec.domain->cell_volume();
  return std::pow(std::abs(s), spec.p);
}

double perturbation_admissibility(const FunctionalSpec& spec) {
  if (spec.p != 2.0) throw std::invalid_argument("perturbation admissibility is defined for p = 2");
  if (!spec.perturbation) throw std::invalid_argument("functional has no perturbation");
  const int N = spec.domain->dim();
  const ScalarField vt = spec.perturbation->profile.evaluate(spec.domain);
  const ScalarField w = weight_field(spec);
  const double a = 0.5 * N;
  const double b = 0.5 * (2 - N);
  const auto vv = vt.values();
  const auto wv = w.values();
  const double s = parallel::sum(vv.size(), [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double x = std::abs(vv[i]);
      if (x != 0.0) acc += std::pow(x, a) * std::pow(wv[i], b);
    }
    return acc;
  });
  return s * spec.domain->cell_volume();
}

QuotientValue evaluate_quotient(const FunctionalSpec& spec, const ScalarField& u) {
  QuotientValue q;
  q.numerator = evaluate_Q(spec, u);
  if (spec.poincare_psi) {
    q.poincare_contribution = spec.poincare_constant * poincare_term(spec, u);
    q.numerator += q.poincare_contribution;
  }
  q.denominator = sobolev_rhs(spec, u);
  q.quotient = q.denominator > 0.0 ? q.numerator / q.denominator : std::numeric_limits<double>::infinity();
  return q;
}

}  // namespace hsmlab
