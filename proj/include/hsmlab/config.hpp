#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsmlab/functionals.hpp"
#include "hsmlab/quotient.hpp"

/// Experiment configuration files.
///
/// INI-style text with sections [experiment], [domain], [functional],
/// [potential], [weight], [perturbation], [poincare], [field], [solver],
/// [interval], [criticality], [picone], [convexity] and [output]. Lists are
/// comma- or whitespace-separated. Unknown sections or keys are rejected so
/// that a typo never silently falls back to a default.
namespace hsmlab {

enum class ExperimentKind {
  hardy_constant,
  hsm_quotient,
  interval_s,
  criticality,
  picone_ratio,
  convexity_check,
  ckn_check
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

/// Raised for anything wrong with a configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DomainConfig {
  int dim = 3;
  std::vector<Interval> extents;             ///< one per axis
  std::vector<double> resolution_scale;      ///< per-axis multiplier of the ladder value
  Split split;
  SingularSet singular_set = SingularSet::none;
  double dirichlet_layer = 0.0;              ///< see build_grid

  /// Grid for one ladder value: axis k gets max(2, round(scale_k * resolution)) cells.
  DomainPtr build(int resolution) const;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::hardy_constant;
  std::string name;
  std::uint64_t seed = 0;
  /// Grid resolutions (sample counts for picone-ratio), strictly increasing.
  std::vector<std::int64_t> ladder;
  DomainConfig domain;

  double p = 2.0;
  PotentialSpec potential;
  bool potential_best_constant = false;  ///< coefficient was given as "best"
  WeightSpec weight;
  std::optional<Perturbation> perturbation;
  std::optional<ProfileSpec> poincare_psi;
  double poincare_constant = 1.0;
  std::optional<ProfileSpec> field;  ///< test function u (ckn-check)

  SolverOptions solver;

  std::vector<double> growth{1.0};  ///< hsm-quotient domain growth factors
  Interval bracket{-100.0, 100.0};
  double interval_tol = 1e-6;

  std::vector<double> probe_factors{1.0, 2.0, 4.0};
  double threshold_factor = 1e-3;
  double stabilization_fraction = 0.25;
  std::optional<double> probe_half_width;

  std::vector<double> picone_p;  ///< defaults to {p}
  int picone_seeds = 1;
  int picone_dim = 3;

  int convexity_pairs = 100;
  int convexity_t_points = 9;
  int triangle_pairs = 1000;

  std::filesystem::path output_json;
  std::filesystem::path output_csv;

  /// The functional on the given grid.
  FunctionalSpec functional(DomainPtr domain) const;
};

/// Parses and validates. Throws ConfigError with the offending section/key.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig parse_config_string(const std::string& text);

/// parse_config on a file; relative output paths are resolved against the
/// file's directory, and default to <stem>.json / <stem>.csv next to it.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved configuration (every default filled in), key order fixed.
nlohmann::ordered_json describe(const ExperimentConfig& config);

}  // namespace hsmlab
