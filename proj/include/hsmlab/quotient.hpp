#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <span>
#include <vector>

#include "hsmlab/mesh.hpp"

namespace hsmlab {

/// R(u) = [E_p(u) + ∫V|u|^p + C|∫ψu|^p] / (∫ω|u|^q)^{p/q} on a fixed grid.
///
/// E_p is the stencil energy of operators.hpp. Empty potential / psi mean
/// "absent". The weight ω must be nonnegative and not identically zero.
struct QuotientProblem {
  DomainPtr domain;
  double p = 2.0;
  std::vector<double> potential;
  std::vector<double> psi;
  double poincare_constant = 0.0;
  std::vector<double> weight;
  double q = 2.0;
};

/// Value of R at u (+inf when the denominator vanishes).
double quotient_value(const QuotientProblem& problem, std::span<const double> u);

struct SolverOptions {
  int restarts = 8;
  double tol = 1e-8;  ///< relative quotient change over `window` iterations
  int window = 10;
  int max_iterations = 10000;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

struct MinimizationResult {
  double quotient_value = 0.0;
  ScalarField minimizer;
  int iterations = 0;
  double residual = 0.0;
  int restarts_used = 0;
  bool converged = false;
  int best_restart = 0;
  std::string method;
  std::vector<double> restart_values;  ///< final value of each restart, in restart order
};

/// Best of `options.restarts` local minimizations of R. Restart 0 starts from
/// `bubble_start` when given (else a random field); the others from seeded
/// random positive fields. The descent is a projected, preconditioned
/// gradient method with Armijo backtracking; for p = 2 the quadratic
/// numerator is exploited (Rayleigh-Ritz for q = 2, normalized inverse
/// iteration for q != 2). Throws std::runtime_error if every restart fails.
MinimizationResult minimize_quotient(const QuotientProblem& problem, const SolverOptions& options,
                                     const std::optional<std::vector<double>>& bubble_start = std::nullopt);

/// Same problem, one start, forcing the generic descent (used to cross-check
/// the p = 2 fast paths).
MinimizationResult minimize_quotient_descent(const QuotientProblem& problem, std::vector<double> start,
                                             const SolverOptions& options);

/// Smallest eigenpair of (-Lap_h + diag(potential)) x = mu x (mass = identity
/// per unit volume) by shifted inverse iteration with Rayleigh-Ritz
/// acceleration and CG inner solves.
struct EigenOptions {
  double tol = 1e-10;  ///< residual |Ax - mu x| <= tol * max |diag(A)| * |x|
  int max_iterations = 5000;
  double inner_tol = 1e-10;
  int inner_max_iterations = 2000;
};

struct EigenResult {
  double value = 0.0;
  std::vector<double> vector;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

EigenResult smallest_eigenpair(const GridDomain& g, std::span<const double> potential, const EigenOptions& options,
                               std::optional<std::vector<double>> start = std::nullopt);

/// Fixes the sign so the largest-magnitude entry is positive.
void normalize_sign(std::span<double> v);

/// Deterministic uniform (0, 1] stream keyed by (seed, stream).
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, std::uint64_t stream);
  double next();
  std::uint64_t next_u64();

 private:
  std::mt19937_64 engine_;
};

}  // namespace hsmlab
