#include "hsmlab/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "hsmlab/operators.hpp"

namespace hsmlab {

namespace {

constexpr double kSignThreshold = 1e-9;

std::vector<double> to_vector(const ScalarField& f) { return {f.values().begin(), f.values().end()}; }

bool is_best_constant(const FunctionalSpec& spec) {
  const auto& pot = spec.potential;
  const int N = spec.domain->dim();
  if (pot.kind == PotentialSpec::Kind::hardy_cylinder)
    return std::abs(pot.coefficient - hardy_constant(pot.m, spec.p)) <= 1e-12;
  if (pot.kind == PotentialSpec::Kind::hardy_point)
    return std::abs(pot.coefficient - hardy_constant(N, spec.p)) <= 1e-12;
  return false;
}

}  // namespace

EigenPair min_eigenvalue(const FunctionalSpec& spec, double lambda, const EigenOptions& options) {
  spec.validate();
  if (spec.p != 2.0) throw std::invalid_argument("min_eigenvalue needs p = 2");
  const FunctionalSpec s = spec.perturbation ? spec.with_lambda(lambda) : spec;
  const ScalarField v = total_potential(s);
  auto res = smallest_eigenpair(*spec.domain, v.values(), options);
  if (!res.converged)
    throw std::runtime_error("min_eigenvalue did not converge (residual " + std::to_string(res.residual) + " after " +
                             std::to_string(res.iterations) + " iterations)");
  EigenPair out;
  out.value = res.value;
  out.vector = ScalarField(spec.domain, std::move(res.vector));
  out.iterations = res.iterations;
  out.residual = res.residual;
  out.converged = true;
  return out;
}

IntervalS compute_interval_S(const FunctionalSpec& spec, Interval bracket, double tol) {
  spec.validate();
  if (spec.p != 2.0) throw std::invalid_argument("interval S needs p = 2");
  if (!spec.perturbation) throw std::invalid_argument("interval S needs a perturbation");
  if (!(bracket.lo <= 0.0 && bracket.hi >= 0.0)) throw std::invalid_argument("bracket must contain 0");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");

  std::map<double, double> curve;
  std::optional<std::vector<double>> warm;
  const ScalarField vt = spec.perturbation->profile.evaluate(spec.domain);
  const ScalarField v0 = potential_field(spec);
  auto eig = [&](double lambda) {
    std::vector<double> pot(v0.size());
    for (std::size_t i = 0; i < pot.size(); ++i) pot[i] = v0[i] + lambda * vt[i];
    auto res = smallest_eigenpair(*spec.domain, pot, {}, warm);
    if (!res.converged) throw std::runtime_error("min_eigenvalue did not converge at lambda = " + std::to_string(lambda));
    warm = res.vector;
    curve[lambda] = res.value;
    return res;
  };

  IntervalS out;
  out.tolerance = tol;
  const auto base = eig(0.0);
  out.base_eigenvalue = base.value;
  if (base.value < -tol)
    throw std::invalid_argument("base functional is not nonnegative (min eigenvalue " + std::to_string(base.value) + ")");

  auto side = [&](double end, double& endpoint, bool& bounded, double& endpoint_mu,
                  std::optional<ScalarField>& ground) {
    warm.reset();
    const auto at_end = eig(end);
    if (at_end.value >= -kSignThreshold) {
      endpoint = end;
      bounded = false;
      endpoint_mu = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    double good = 0.0;
    double bad = end;
    warm = base.vector;
    while (std::abs(bad - good) > tol) {
      const double mid = 0.5 * (good + bad);
      if (eig(mid).value >= -kSignThreshold)
        good = mid;
      else
        bad = mid;
    }
    endpoint = 0.5 * (good + bad);
    bounded = true;
    const auto at = eig(endpoint);
    endpoint_mu = at.value;
    ground = ScalarField(spec.domain, at.vector);
  };
  side(bracket.hi, out.upper, out.bounded_above, out.upper_eigenvalue, out.upper_ground_state);
  side(bracket.lo, out.lower, out.bounded_below, out.lower_eigenvalue, out.lower_ground_state);
  out.curve.assign(curve.begin(), curve.end());
  return out;
}

std::vector<double> bubble_profile(const GridDomain& g, double p) {
  const int N = g.dim();
  std::vector<double> c(static_cast<std::size_t>(N)), x(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    const auto& e = g.extents()[static_cast<std::size_t>(k)];
    c[static_cast<std::size_t>(k)] = 0.5 * (e.lo + e.hi);
  }
  std::vector<double> out(g.active_count());
  const double expo = (p - N) / p;
  for (std::size_t i = 0; i < out.size(); ++i) {
    g.coordinates(g.grid_index(i), x);
    double r2 = 0.0;
    for (int k = 0; k < N; ++k) r2 += (x[static_cast<std::size_t>(k)] - c[static_cast<std::size_t>(k)]) *
                                      (x[static_cast<std::size_t>(k)] - c[static_cast<std::size_t>(k)]);
    out[i] = std::pow(1.0 + r2, expo);
  }
  return out;
}

MinimizationResult minimize_hsm_quotient(const FunctionalSpec& spec, const SolverOptions& options) {
  spec.validate();
  const int N = spec.domain->dim();
  QuotientProblem pr;
  pr.domain = spec.domain;
  pr.p = spec.p;
  pr.q = critical_exponent(N, spec.p);
  pr.potential = to_vector(total_potential(spec));
  if (spec.poincare_psi) {
    pr.psi = to_vector(spec.poincare_psi->evaluate(spec.domain));
    pr.poincare_constant = spec.poincare_constant;
  }
  pr.weight = to_vector(weight_field(spec));
  return minimize_quotient(pr, options, bubble_profile(*spec.domain, spec.p));
}

MinimizationResult minimize_hardy_quotient(const FunctionalSpec& spec, const SolverOptions& options) {
  spec.validate();
  if (spec.domain->singular_set() == SingularSet::none) throw std::invalid_argument("Hardy quotient needs a singular set");
  QuotientProblem pr;
  pr.domain = spec.domain;
  pr.p = spec.p;
  pr.q = spec.p;
  const ScalarField d = distance_field(spec.domain);
  pr.weight.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) pr.weight[i] = std::pow(d[i], -spec.p);
  return minimize_quotient(pr, options, bubble_profile(*spec.domain, spec.p));
}

ScalarField solve_positive_solution(const FunctionalSpec& spec, const PointFunction& boundary_value) {
  spec.validate();
  const GridDomain& g = *spec.domain;
  const int N = g.dim();
  const double p = spec.p;
  if (is_best_constant(spec)) {
    const bool cyl = spec.potential.kind == PotentialSpec::Kind::hardy_cylinder;
    const int m = cyl ? spec.potential.m : N;
    const int first = cyl ? g.split().n : 0;
    const double a = (p - m) / p;
    auto norm_y = [first, N](std::span<const double> x) {
      double s = 0.0;
      for (int k = first; k < N; ++k) s += x[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
      return std::sqrt(s);
    };
    return ScalarField::sample(
        spec.domain, [a, norm_y](std::span<const double> x) { return std::pow(norm_y(x), a); },
        [a, norm_y, first, N](std::span<const double> x, std::span<double> gr) {
          const double r = norm_y(x);
          const double f = a * std::pow(r, a - 2.0);
          for (int k = 0; k < N; ++k)
            gr[static_cast<std::size_t>(k)] = k < first ? 0.0 : f * x[static_cast<std::size_t>(k)];
        });
  }
  const bool unperturbed = !spec.perturbation || spec.perturbation->lambda == 0.0 ||
                           spec.perturbation->profile.kind == ProfileSpec::Kind::zero;
  if (spec.potential.kind == PotentialSpec::Kind::zero && unperturbed && !boundary_value)
    return ScalarField::sample(
        spec.domain, [](std::span<const double>) { return 1.0; },
        [](std::span<const double>, std::span<double> gr) { std::fill(gr.begin(), gr.end(), 0.0); });
  if (p != 2.0) throw std::invalid_argument("positive solutions for p != 2 exist only for the closed-form kinds");

  const ScalarField v = total_potential(spec);
  const std::size_t n = g.active_count();
  std::vector<double> rhs(n, 0.0), x(static_cast<std::size_t>(N));
  for (std::size_t j = 0; j < n; ++j) {
    for (int k = 0; k < N; ++k) {
      for (int dir = 0; dir < 2; ++dir) {
        if (g.neighbor(j, k, dir) != GridDomain::kMirror) continue;
        g.coordinates(g.grid_index(j), x);
        const auto& e = g.extents()[static_cast<std::size_t>(k)];
        x[static_cast<std::size_t>(k)] = dir == 0 ? e.lo : e.hi;
        const double h = g.spacing()[static_cast<std::size_t>(k)];
        rhs[j] += 2.0 * (boundary_value ? boundary_value(x) : 1.0) / (h * h);
      }
    }
  }
  const ops::LinearMap a = [&](std::span<const double> in, std::span<double> out) {
    ops::apply_operator(g, v.values(), in, out);
  };
  const auto diag = ops::operator_diagonal(g, v.values());
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) inv[i] = diag[i] > 0.0 ? 1.0 / diag[i] : 1.0;
  std::vector<double> sol(n, 1.0);
  const auto cg = ops::conjugate_gradient(a, rhs, sol, inv, 1e-12, 20000);
  if (!cg.converged) throw std::runtime_error("positive-solution solve did not converge (operator may be indefinite)");
  for (std::size_t i = 0; i < n; ++i)
    if (!(sol[i] > 0.0))
      throw std::runtime_error("positive-solution solve produced a nonpositive node; the functional is likely supercritical");
  return ScalarField(spec.domain, std::move(sol));
}

CknCheck verify_ckn_equivalence(const FunctionalSpec& spec, const ScalarField& u) {
  spec.validate();
  require_same_domain(spec.domain, u);
  if (spec.p != 2.0) throw std::invalid_argument("CKN check needs p = 2");
  if (spec.potential.kind != PotentialSpec::Kind::hardy_cylinder || !is_best_constant(spec))
    throw std::invalid_argument("CKN check needs the best-constant hardy_cylinder functional");
  const GridDomain& g = *spec.domain;
  const int N = g.dim();
  const int m = spec.potential.m;
  const int first = g.split().n;
  const double margin = 2.0 * g.max_spacing();
  std::vector<double> x(static_cast<std::size_t>(N));
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] == 0.0) continue;
    g.coordinates(g.grid_index(i), x);
    if (g.distance_to_singular_set(x) < margin)
      throw std::invalid_argument("field is supported within two cells of the singular set");
  }

  auto norm_y = [&](std::span<const double> p) {
    double s = 0.0;
    for (int k = first; k < N; ++k) s += p[static_cast<std::size_t>(k)] * p[static_cast<std::size_t>(k)];
    return std::sqrt(s);
  };
  const double a = 0.5 * (m - 2);  // v = |y|^a u
  CknCheck out;
  out.lhs = evaluate_Q(spec, u);
  const double vol = g.cell_volume();
  if (u.has_exact_gradient()) {
    const auto& gu = u.exact_gradient();
    const auto d = static_cast<std::size_t>(N);
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      g.coordinates(g.grid_index(i), x);
      const double r = norm_y(x);
      const double ra = std::pow(r, a);
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        double gk = ra * gu[i * d + k];
        if (static_cast<int>(k) >= first) gk += u[i] * a * std::pow(r, a - 2.0) * x[k];
        sq += gk * gk;
      }
      acc += std::pow(r, 2.0 - m) * sq;
    }
    out.rhs = acc * vol;
  } else {
    std::vector<double> v(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (u[i] == 0.0) continue;
      g.coordinates(g.grid_index(i), x);
      v[i] = std::pow(norm_y(x), a) * u[i];
    }
    std::vector<double> w(g.center_count());
    for (std::size_t c = 0; c < w.size(); ++c) {
      g.coordinates(g.center_grid_index(c), x);
      const double r = norm_y(x);
      w[c] = r > 0.0 ? std::pow(r, 2.0 - m) : 0.0;
    }
    out.rhs = ops::weighted_quadratic_energy(g, v, w);
  }
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

}  // namespace hsmlab
