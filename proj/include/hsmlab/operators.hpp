#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hsmlab/mesh.hpp"

/// Discrete energies and the linear algebra built on them.
///
/// The p-energy of a grid function u is
///   E_p(u) = vol * sum_centers 2^-N sum_{s in {-,+}^N} ( sum_k D_{k,s_k}u^2 )^{p/2}
/// with one-sided differences D_{k,+}u = (u_{+k} - u)/h_k, D_{k,-}u = (u - u_{-k})/h_k.
/// Inactive nodes hold zero and the box face is an antisymmetric ghost. For
/// p = 2 this is the standard (2N+1)-point Dirichlet form.
namespace hsmlab::ops {

using LinearMap = std::function<void(std::span<const double>, std::span<double>)>;

/// E_p(u) as above (u indexed by active node).
double gradient_energy(const GridDomain& g, std::span<const double> u, double p);

/// E_2 with the stencil term of each center multiplied by center_weight[center].
double weighted_quadratic_energy(const GridDomain& g, std::span<const double> u, std::span<const double> center_weight);

/// dE_p/du, written to out (active indexing).
void gradient_energy_derivative(const GridDomain& g, std::span<const double> u, double p, std::span<double> out);

/// y = (-Lap_h + diag(potential)) x in per-volume units, so that
/// x.(A x) * vol = E_2(x) + vol * sum potential x^2. potential may be empty.
void apply_operator(const GridDomain& g, std::span<const double> potential, std::span<const double> x,
                    std::span<double> y);

/// Diagonal of the operator above.
std::vector<double> operator_diagonal(const GridDomain& g, std::span<const double> potential);

/// Deterministic chunked dot product.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

struct CgResult {
  int iterations = 0;
  double residual = 0.0;  ///< final |r| / |b|
  bool converged = false;
};

/// Preconditioned conjugate gradients for an SPD map. x holds the initial
/// guess and receives the solution. inv_diag may be empty (no preconditioner).
CgResult conjugate_gradient(const LinearMap& a, std::span<const double> b, std::span<double> x,
                            std::span<const double> inv_diag, double rel_tol, int max_iterations);

}  // namespace hsmlab::ops
