#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsmlab/functionals.hpp"
#include "hsmlab/quotient.hpp"

namespace hsmlab {

enum class Classification { critical, subcritical, inconclusive };

std::string to_string(Classification c);

/// Axis-aligned box |x_k - center_k| <= half_width (the normalization set B).
struct ProbeBox {
  std::vector<double> center;
  double half_width = 0.0;

  bool contains(std::span<const double> x) const;
};

struct ProbeValue {
  double side = 0.0;  ///< longest box side of the stage domain
  std::vector<int> resolution;
  double infimum = 0.0;  ///< inf Q(u) subject to ∫_B |u|^p = 1
  int iterations = 0;
};

struct CriticalityReport {
  Classification classification = Classification::inconclusive;
  std::vector<ProbeValue> probe_values;
  std::optional<ScalarField> fitted_ground_state;  ///< last-stage minimizer, ∫_B |u|^p = 1
  std::optional<double> fit_exponent;
  std::optional<double> fit_r2;
  std::optional<double> extrapolated_limit;  ///< Aitken limit of the last three probe values
  double decision_threshold = 0.0;
  ProbeBox box;
};

struct ProbeOptions {
  SolverOptions solver;
  double threshold_factor = 1e-3;  ///< threshold = factor * first probe value
  /// A trend that stalls above the threshold counts as "stabilized" when the
  /// last value is within this fraction of the extrapolated limit.
  double stabilization_fraction = 0.25;
};

struct ProbeVerdict {
  Classification classification = Classification::inconclusive;
  double threshold = 0.0;
  std::optional<double> limit;
};

/// Classification rule of ground_state_probe applied to a probe curve
/// (at least three values, domains in expanding order).
ProbeVerdict classify_probe(std::span<const double> values, const ProbeOptions& options = {});

/// Largest grid-aligned centered box of half the smallest side of g.
ProbeBox default_probe_box(const GridDomain& g);

/// The box of g scaled about its center by each factor at fixed spacing
/// (resolution scaled by the same factor). Throws unless every factor gives
/// an integer resolution and the grids are nested.
std::vector<DomainPtr> expanding_domains(const GridDomain& g, const std::vector<double>& factors);

/// Minimizes Q on each domain subject to ∫_B |u|^p = 1 and classifies the
/// curve. critical: final value < threshold and strictly decreasing.
/// subcritical: Aitken limit >= threshold and the last value within
/// stabilization_fraction of it. inconclusive otherwise. Throws if fewer
/// than three domains are given, B is not strictly inside the first domain,
/// or (p = 2) the min-eigenvalue on the largest domain is negative.
CriticalityReport ground_state_probe(const FunctionalSpec& spec, const std::optional<ProbeBox>& box,
                                     const std::vector<DomainPtr>& domains, const ProbeOptions& options = {});

struct PowerLawFit {
  double exponent = 0.0;
  double r2 = 0.0;
  std::size_t nodes = 0;
};

/// Least-squares slope of log(field) against log|x - center| over nodes with
/// r_min < |x - center| <= r_max. Throws if fewer than 8 nodes qualify or the
/// field is nonpositive on the window.
PowerLawFit power_law_fit(const ScalarField& field, std::span<const double> center, double r_min, double r_max);

}  // namespace hsmlab
