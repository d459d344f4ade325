#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "hsmlab/functionals.hpp"
#include "hsmlab/quotient.hpp"

namespace hsmlab {

struct EigenPair {
  double value = 0.0;
  ScalarField vector;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Smallest eigenvalue of Q_λ relative to the (unit-volume) mass matrix,
/// p = 2 only. Throws std::runtime_error on non-convergence.
EigenPair min_eigenvalue(const FunctionalSpec& spec, double lambda, const EigenOptions& options = {});

struct IntervalS {
  double lower = 0.0;
  double upper = 0.0;
  bool bounded_below = false;
  bool bounded_above = false;
  /// min-eigenvalue at each finite endpoint (NaN for an unbounded side).
  double lower_eigenvalue = 0.0;
  double upper_eigenvalue = 0.0;
  double tolerance = 0.0;
  double base_eigenvalue = 0.0;
  std::optional<ScalarField> lower_ground_state;
  std::optional<ScalarField> upper_ground_state;
  /// Every (λ, μ_min(λ)) evaluated, sorted by λ.
  std::vector<std::pair<double, double>> curve;
};

/// Nonnegativity interval of λ ↦ Q + λ∫Ṽ|u|² within bracket = [a, b] ∋ 0, by
/// bisection on the sign of min_eigenvalue (threshold ±1e-9). Throws if the
/// base eigenvalue is below -tol or the bracket does not contain 0.
IntervalS compute_interval_S(const FunctionalSpec& spec, Interval bracket, double tol = 1e-6);

/// Aubin-Talenti-type start profile (1 + |x - center|^2)^{(p-N)/p}, center = box center.
std::vector<double> bubble_profile(const GridDomain& g, double p);

/// inf Q(u) / sobolev_rhs(u) (plus the Poincaré penalty when ψ is set).
MinimizationResult minimize_hsm_quotient(const FunctionalSpec& spec, const SolverOptions& options = {});

/// inf ∫|∇u|^p / ∫|u|^p dist(x,K)^{-p}; the potential of spec is ignored.
MinimizationResult minimize_hardy_quotient(const FunctionalSpec& spec, const SolverOptions& options = {});

/// Positive solution of Q'(v) = 0. Closed form for hardy_cylinder / hardy_point
/// at the best constant, v = 1 for V = 0 without data; otherwise (p = 2) the discrete Dirichlet problem with
/// boundary values taken from boundary_value on the box faces. Throws
/// std::runtime_error if the result has a nonpositive node.
ScalarField solve_positive_solution(const FunctionalSpec& spec, const PointFunction& boundary_value = {});

struct CknCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

/// lhs = evaluate_Q(u) with the Hardy potential, rhs = ∫|y|^{2-m}|∇v|² with
/// v = |y|^{(m-2)/2}u. Exact gradients are used when u carries them, else
/// the stencil energy weighted by |y|^{2-m} at each stencil center. Throws if
/// u is nonzero within two cells of K or the spec is not the best-constant
/// cylindrical functional with p = 2.
CknCheck verify_ckn_equivalence(const FunctionalSpec& spec, const ScalarField& u);

}  // namespace hsmlab
