#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsmlab/mesh.hpp"

namespace hsmlab {

/// A scalar profile that can be resampled on any grid (perturbations Ṽ,
/// Poincaré functionals ψ, custom weights).
struct ProfileSpec {
  enum class Kind {
    zero,
    constant,    ///< value
    affine,      ///< coefficients[0] + sum_k coefficients[k+1] x_k
    dist_power,  ///< value * d(x)^exponent, d = distance to the box faces (all axes, or only `axis`)
    gaussian,    ///< value * exp(-|x - center|^2 / (2 width^2)), with exact gradient
    bump,        ///< value * (1 - |x - center|^2 / width^2)_+^exponent, with exact gradient (exponent >= 2)
    tabulated    ///< a fixed field; only valid on a grid with the same layout
  };
  Kind kind = Kind::zero;
  double value = 0.0;
  std::vector<double> coefficients;
  std::vector<double> center;
  double width = 1.0;
  double exponent = 0.0;
  int axis = -1;
  std::optional<ScalarField> table;

  ScalarField evaluate(const DomainPtr& domain) const;
};

std::string to_string(ProfileSpec::Kind kind);
ProfileSpec::Kind profile_kind_from_string(const std::string& name);

struct PotentialSpec {
  enum class Kind { zero, hardy_cylinder, hardy_point, hardy_boundary, constant, tabulated };
  Kind kind = Kind::zero;
  int m = 0;                 ///< codimension of K for hardy_cylinder
  double coefficient = 0.0;  ///< c for hardy kinds, M for constant
  std::optional<ScalarField> table;

  static PotentialSpec zero() { return {}; }
  static PotentialSpec hardy_cylinder(int m, double c) { return {Kind::hardy_cylinder, m, c, std::nullopt}; }
  static PotentialSpec hardy_point(double c) { return {Kind::hardy_point, 0, c, std::nullopt}; }
  static PotentialSpec hardy_boundary(double c) { return {Kind::hardy_boundary, 0, c, std::nullopt}; }
  static PotentialSpec constant(double value) { return {Kind::constant, 0, value, std::nullopt}; }
  static PotentialSpec tabulated(ScalarField f) { return {Kind::tabulated, 0, 0.0, std::move(f)}; }

  bool is_hardy() const {
    return kind == Kind::hardy_cylinder || kind == Kind::hardy_point || kind == Kind::hardy_boundary;
  }
};

std::string to_string(PotentialSpec::Kind kind);
PotentialSpec::Kind potential_kind_from_string(const std::string& name);

struct WeightSpec {
  enum class Kind { constant, ft_log, tabulated };
  Kind kind = Kind::constant;
  double value = 1.0;                   ///< constant level
  double radius = 0.0;                  ///< D for ft_log
  std::optional<double> exponent;       ///< ft_log power; default 1 + N/(N-2)
  std::optional<ScalarField> table;

  static WeightSpec constant(double value = 1.0) { return {Kind::constant, value, 0.0, std::nullopt, std::nullopt}; }
  static WeightSpec ft_log(double radius, std::optional<double> exponent = std::nullopt) {
    return {Kind::ft_log, 1.0, radius, exponent, std::nullopt};
  }
};

std::string to_string(WeightSpec::Kind kind);
WeightSpec::Kind weight_kind_from_string(const std::string& name);

struct Perturbation {
  ProfileSpec profile;  ///< Ṽ
  double lambda = 0.0;
};

/// Everything needed to evaluate Q, Q_λ and the HSM / HSMP right-hand sides.
struct FunctionalSpec {
  DomainPtr domain;
  double p = 2.0;
  PotentialSpec potential;
  WeightSpec weight;
  std::optional<ProfileSpec> poincare_psi;
  double poincare_constant = 1.0;
  std::optional<Perturbation> perturbation;

  /// Throws std::invalid_argument on p <= 1, a hardy kind that does not
  /// match the domain's singular set, or a tabulated field on another grid.
  void validate() const;

  /// Same functional on another grid (tabulated parts must match its layout).
  FunctionalSpec on(DomainPtr other) const;

  /// Copy with the perturbation strength replaced.
  FunctionalSpec with_lambda(double lambda) const;
};

struct QuotientValue {
  double numerator = 0.0;    ///< Q(u) + C |∫ψu|^p
  double denominator = 0.0;  ///< (∫W|u|^{p*})^{p/p*}
  double quotient = 0.0;
  double poincare_contribution = 0.0;
};

/// p* = pN/(N-p). Throws when p <= 1 or p >= N.
double critical_exponent(int N, double p);

/// |(m-p)/p|^p.
double hardy_constant(int m, double p);

/// X(r/D)^{1+N/(N-2)} with X(s) = 1/|log s|. Throws unless 0 < r < D and N > 2.
double ft_weight(double r, double D, int N);

/// V at the active nodes (without the perturbation).
ScalarField potential_field(const FunctionalSpec& spec);
/// V + λṼ.
ScalarField total_potential(const FunctionalSpec& spec);
ScalarField weight_field(const FunctionalSpec& spec);

/// ∫|∇u|^p: midpoint rule on exact gradients when u carries them, otherwise
/// the discrete stencil energy.
double gradient_term(const FunctionalSpec& spec, const ScalarField& u);

/// ∫(|∇u|^p + V|u|^p) + λ∫Ṽ|u|^p.
double evaluate_Q(const FunctionalSpec& spec, const ScalarField& u);

/// (∫W|u|^{p*})^{p/p*}.
double sobolev_rhs(const FunctionalSpec& spec, const ScalarField& u);

/// |∫ψu|^p. Throws if the spec has no ψ.
double poincare_term(const FunctionalSpec& spec, const ScalarField& u);

/// ∫|Ṽ|^{N/2} W^{(2-N)/2}. p = 2 only.
double perturbation_admissibility(const FunctionalSpec& spec);

/// Q (+ C|∫ψu|^p when ψ is present) over sobolev_rhs.
QuotientValue evaluate_quotient(const FunctionalSpec& spec, const ScalarField& u);

}  // namespace hsmlab
