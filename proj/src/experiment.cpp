#include "hsmlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hsmlab/criticality.hpp"
#include "hsmlab/picone.hpp"
#include "hsmlab/solvers.hpp"
#include "hsmlab/version.hpp"

namespace hsmlab {

namespace {

using nlohmann::ordered_json;

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string format_margin(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check(const ExperimentHooks& hooks, const std::string& name, double margin, const std::string& detail) {
  const double m = hooks.margin ? hooks.margin(name, margin) : margin;
  if (!(m >= 0.0)) throw InvariantViolation(name, m, detail);
}

int hardy_target_dimension(const ExperimentConfig& c) {
  switch (c.domain.singular_set) {
    case SingularSet::cylinder_y0: return c.domain.split.m;
    case SingularSet::point_origin: return c.domain.dim;
    case SingularSet::domain_boundary: return 1;
    case SingularSet::none: break;
  }
  throw ConfigError("[domain]: singular_set: hardy-constant needs one");
}

ordered_json minimization_row(const MinimizationResult& r) {
  ordered_json j;
  j["quotient"] = r.quotient_value;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["method"] = r.method;
  j["best_restart"] = r.best_restart;
  return j;
}

void merge(ordered_json& into, const ordered_json& from) {
  for (auto it = from.begin(); it != from.end(); ++it) into[it.key()] = it.value();
}

// --------------------------------------------------------------------------

void run_hardy_constant(const ExperimentConfig& c, ordered_json& doc) {
  const double target = hardy_constant(hardy_target_dimension(c), c.p);
  ordered_json rows = ordered_json::array();
  std::vector<double> errors;
  for (auto res : c.ladder) {
    const auto d = c.domain.build(static_cast<int>(res));
    const auto r = minimize_hardy_quotient(c.functional(d), c.solver);
    ordered_json row;
    row["resolution"] = res;
    row["nodes"] = d->active_count();
    row["h"] = d->max_spacing();
    merge(row, minimization_row(r));
    errors.push_back(std::abs(r.quotient_value - target));
    row["error"] = errors.back();
    row["relative_error"] = errors.back() / target;
    rows.push_back(row);
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < errors.size(); ++i) decreasing = decreasing && errors[i] < errors[i - 1];
  doc["target"] = target;
  doc["rows"] = rows;
  doc["summary"] = {{"target", target},
                    {"finest_quotient", rows.back()["quotient"]},
                    {"finest_relative_error", errors.back() / target},
                    {"error_decreasing", decreasing}};
}

void run_hsm_quotient(const ExperimentConfig& c, ordered_json& doc) {
  ordered_json rows = ordered_json::array();
  double first = 0.0, last = 0.0, lowest = std::numeric_limits<double>::infinity();
  for (auto res : c.ladder) {
    const auto base = c.domain.build(static_cast<int>(res));
    const auto domains = expanding_domains(*base, c.growth);
    for (std::size_t i = 0; i < domains.size(); ++i) {
      const auto spec = c.functional(domains[i]);
      const auto r = minimize_hsm_quotient(spec, c.solver);
      const ScalarField bubble(domains[i], bubble_profile(*domains[i], c.p));
      ordered_json row;
      row["resolution"] = res;
      row["growth"] = c.growth[i];
      double side = 0.0;
      for (const auto& e : domains[i]->extents()) side = std::max(side, e.hi - e.lo);
      row["side"] = side;
      row["nodes"] = domains[i]->active_count();
      merge(row, minimization_row(r));
      row["bubble_quotient"] = evaluate_quotient(spec, bubble).quotient;
      rows.push_back(row);
      if (res == c.ladder.back()) {
        if (i == 0) first = r.quotient_value;
        last = r.quotient_value;
      }
      lowest = std::min(lowest, r.quotient_value);
    }
  }
  doc["rows"] = rows;
  doc["summary"] = {{"min_quotient", lowest},
                    {"finest_first_growth", first},
                    {"finest_last_growth", last},
                    {"growth_decay_factor", last != 0.0 ? first / last : std::numeric_limits<double>::infinity()}};
}

void run_interval_s(const ExperimentConfig& c, ordered_json& doc) {
  ordered_json rows = ordered_json::array();
  ordered_json curve = ordered_json::array();
  for (auto res : c.ladder) {
    const auto d = c.domain.build(static_cast<int>(res));
    const auto s = compute_interval_S(c.functional(d), c.bracket, c.interval_tol);
    ordered_json row;
    row["resolution"] = res;
    row["lower"] = s.bounded_below ? ordered_json(s.lower) : ordered_json(nullptr);
    row["upper"] = s.bounded_above ? ordered_json(s.upper) : ordered_json(nullptr);
    row["bounded_below"] = s.bounded_below;
    row["bounded_above"] = s.bounded_above;
    row["lower_eigenvalue"] = s.lower_eigenvalue;
    row["upper_eigenvalue"] = s.upper_eigenvalue;
    row["base_eigenvalue"] = s.base_eigenvalue;
    row["zero_in_interior"] = s.lower < 0.0 && 0.0 < s.upper;
    rows.push_back(row);
    for (const auto& [lambda, mu] : s.curve) curve.push_back({{"resolution", res}, {"lambda", lambda}, {"mu", mu}});
  }
  doc["rows"] = rows;
  doc["summary"] = rows.back();
  doc["tables"] = {{"curve", curve}};
}

void run_criticality(const ExperimentConfig& c, ordered_json& doc) {
  ordered_json rows = ordered_json::array();
  ordered_json probe = ordered_json::array();
  ordered_json profile = ordered_json::array();
  ProbeOptions opt;
  opt.solver = c.solver;
  opt.threshold_factor = c.threshold_factor;
  opt.stabilization_fraction = c.stabilization_fraction;
  for (auto res : c.ladder) {
    const auto base = c.domain.build(static_cast<int>(res));
    std::optional<ProbeBox> box;
    if (c.probe_half_width) {
      ProbeBox b;
      for (const auto& e : base->extents()) b.center.push_back(0.5 * (e.lo + e.hi));
      b.half_width = *c.probe_half_width;
      box = b;
    }
    const auto rep = ground_state_probe(c.functional(base), box, expanding_domains(*base, c.probe_factors), opt);
    ordered_json row;
    row["resolution"] = res;
    row["classification"] = to_string(rep.classification);
    row["decision_threshold"] = rep.decision_threshold;
    row["extrapolated_limit"] = optional_number(rep.extrapolated_limit);
    row["first_infimum"] = rep.probe_values.front().infimum;
    row["last_infimum"] = rep.probe_values.back().infimum;
    row["fit_exponent"] = optional_number(rep.fit_exponent);
    row["fit_r2"] = optional_number(rep.fit_r2);
    row["box_half_width"] = rep.box.half_width;
    rows.push_back(row);
    for (std::size_t i = 0; i < rep.probe_values.size(); ++i) {
      const auto& v = rep.probe_values[i];
      probe.push_back({{"resolution", res},
                       {"stage", i},
                       {"side", v.side},
                       {"infimum", v.infimum},
                       {"iterations", v.iterations}});
    }
    if (res == c.ladder.back() && rep.fitted_ground_state) {
      // radial profile of the normalized last-stage minimizer
      const auto& u = *rep.fitted_ground_state;
      const auto& g = *u.domain();
      for (std::size_t j = 0; j < u.size(); ++j) {
        const auto x = g.active_coordinates(j);
        bool on_axis = true;
        for (std::size_t k = 1; k < x.size(); ++k)
          on_axis = on_axis && std::abs(x[k] - rep.box.center[k]) <= 0.5 * g.spacing()[k] + 1e-12;
        if (on_axis && x[0] > rep.box.center[0])
          profile.push_back({{"x0", x[0]}, {"distance", x[0] - rep.box.center[0]}, {"value", u[j]}});
      }
    }
  }
  doc["rows"] = rows;
  doc["summary"] = {{"classification", rows.back()["classification"]},
                    {"fit_exponent", rows.back()["fit_exponent"]}};
  doc["tables"] = {{"probe", probe}, {"profile", profile}};
}

void run_picone_ratio(const ExperimentConfig& c, const ExperimentHooks& hooks, ordered_json& doc) {
  ordered_json rows = ordered_json::array();
  ordered_json stability = ordered_json::array();
  SamplerOptions opt;
  opt.dim = c.picone_dim;
  for (double p : c.picone_p) {
    double lo_min = std::numeric_limits<double>::infinity(), lo_max = 0.0;
    double hi_min = std::numeric_limits<double>::infinity(), hi_max = 0.0;
    for (auto n : c.ladder) {
      for (int s = 0; s < c.picone_seeds; ++s) {
        const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(s);
        const auto count = static_cast<std::size_t>(n);
        const auto b = comparability_bounds(p, count, seed, opt);
        const auto h = gradient_convexity_sweep(p, count, seed, opt);
        const std::string where = "p=" + format_margin(p) + " seed=" + std::to_string(seed);
        check(hooks, "lagrangian_nonnegative", b.min_normalized_L + 1e-12, where);
        check(hooks, "holder_defect_nonnegative", h.min_normalized_defect + 1e-12, where);
        ordered_json row;
        row["p"] = p;
        row["ratio_min"] = b.ratio_min;
        row["ratio_max"] = b.ratio_max;
        row["samples"] = b.sample_count;
        row["seed"] = seed;
        row["skipped_degenerate"] = b.skipped_degenerate;
        row["term_ratio_min"] = b.term_ratio_min;
        row["term_ratio_max"] = b.term_ratio_max;
        row["min_normalized_L"] = b.min_normalized_L;
        row["min_normalized_holder_defect"] = h.min_normalized_defect;
        rows.push_back(row);
        if (n == c.ladder.back()) {
          lo_min = std::min(lo_min, b.ratio_min);
          lo_max = std::max(lo_max, b.ratio_min);
          hi_min = std::min(hi_min, b.ratio_max);
          hi_max = std::max(hi_max, b.ratio_max);
        }
      }
    }
    stability.push_back({{"p", p},
                         {"samples", c.ladder.back()},
                         {"seeds", c.picone_seeds},
                         {"ratio_min_spread", (lo_max - lo_min) / lo_max},
                         {"ratio_max_spread", (hi_max - hi_min) / hi_max}});
  }
  doc["rows"] = rows;
  doc["summary"] = {{"stability", stability}};
  doc["tables"] = {{"stability", stability}};
}

/// Seeded positive analytic field: a Gaussian with center in the middle half
/// of the box, width 0.15-0.5 of the smallest side, amplitude log-uniform in [0.1, 10].
ScalarField random_gaussian(const DomainPtr& d, UniformStream& rng) {
  ProfileSpec s;
  s.kind = ProfileSpec::Kind::gaussian;
  double side = std::numeric_limits<double>::infinity();
  for (const auto& e : d->extents()) {
    s.center.push_back(e.lo + (0.25 + 0.5 * rng.next()) * (e.hi - e.lo));
    side = std::min(side, e.hi - e.lo);
  }
  s.width = (0.15 + 0.35 * rng.next()) * side;
  s.value = std::pow(10.0, 2.0 * rng.next() - 1.0);
  return s.evaluate(d);
}

void run_convexity_check(const ExperimentConfig& c, const ExperimentHooks& hooks, ordered_json& doc) {
  ordered_json rows = ordered_json::array();
  std::vector<double> t_grid;
  for (int k = 1; k <= c.convexity_t_points; ++k) t_grid.push_back(static_cast<double>(k) / (c.convexity_t_points + 1));
  for (auto res : c.ladder) {
    const auto d = c.domain.build(static_cast<int>(res));
    const auto spec = c.functional(d);
    ScalarField v;
    try {
      v = solve_positive_solution(spec);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[potential]: convexity-check needs a positive solution: ") + e.what());
    }
    UniformStream rng(c.seed, static_cast<std::uint64_t>(res));
    double worst = -std::numeric_limits<double>::infinity(), worst_t = 0.0, homogeneity = 0.0;
    for (int i = 0; i < c.convexity_pairs; ++i) {
      const auto psi0 = random_gaussian(d, rng);
      const auto psi1 = random_gaussian(d, rng);
      const auto r = convexity_midpoint_test(spec, v, psi0, psi1, t_grid);
      const double normalized = r.max_defect / r.scale;
      check(hooks, "midpoint_convexity", 1e-10 - normalized,
            "resolution " + std::to_string(res) + " pair " + std::to_string(i));
      if (normalized > worst) {
        worst = normalized;
        worst_t = r.worst_t;
      }
      const double factor = 0.5 + 4.5 * rng.next();
      const double n0 = norm_N(spec, v, psi0);
      homogeneity = std::max(homogeneity, std::abs(norm_N(spec, v, psi0.scaled(factor)) - factor * n0) / (factor * n0));
    }
    check(hooks, "norm_homogeneity", 1e-12 - homogeneity, "resolution " + std::to_string(res));
    double excess = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < c.triangle_pairs; ++i) {
      const auto psi0 = random_gaussian(d, rng);
      const auto psi1 = random_gaussian(d, rng);
      const double a = norm_N(spec, v, psi0), b = norm_N(spec, v, psi1);
      const double e = (norm_N(spec, v, linear_combination(1.0, psi0, 1.0, psi1)) - a - b) / std::max(a + b, 1e-300);
      check(hooks, "triangle_inequality", 1e-10 - e,
            "resolution " + std::to_string(res) + " pair " + std::to_string(i));
      excess = std::max(excess, e);
    }
    ordered_json row;
    row["resolution"] = res;
    row["pairs"] = c.convexity_pairs;
    row["max_normalized_defect"] = worst;
    row["worst_t"] = worst_t;
    row["max_homogeneity_error"] = homogeneity;
    row["triangle_pairs"] = c.triangle_pairs;
    row["max_normalized_triangle_excess"] = c.triangle_pairs > 0 ? ordered_json(excess) : ordered_json(nullptr);
    rows.push_back(row);
  }
  doc["rows"] = rows;
  doc["summary"] = rows.back();
}

void run_ckn_check(const ExperimentConfig& c, const ExperimentHooks& hooks, ordered_json& doc) {
  ordered_json rows = ordered_json::array();
  std::vector<double> picone_gaps, ckn_gaps;
  for (auto res : c.ladder) {
    const auto d = c.domain.build(static_cast<int>(res));
    const auto spec = c.functional(d);
    const auto u = c.field->evaluate(d);
    const auto v = solve_positive_solution(spec);
    const double q = evaluate_Q(spec, u);
    const double e = energy_via_picone(spec, v, u);
    CknCheck ckn;
    try {
      ckn = verify_ckn_equivalence(spec, u);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(std::string("[field]: ") + ex.what());
    }
    check(hooks, "picone_energy_nonnegative", e + 1e-12 * std::abs(q), "resolution " + std::to_string(res));
    picone_gaps.push_back(std::abs(e - q) / q);
    ckn_gaps.push_back(ckn.gap / ckn.lhs);
    ordered_json row;
    row["resolution"] = res;
    row["Q"] = q;
    row["picone_energy"] = e;
    row["picone_relative_gap"] = picone_gaps.back();
    row["ckn_lhs"] = ckn.lhs;
    row["ckn_rhs"] = ckn.rhs;
    row["ckn_relative_gap"] = ckn_gaps.back();
    rows.push_back(row);
  }
  auto decreasing = [](const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
      if (!(v[i] < v[i - 1])) return false;
    return true;
  };
  doc["rows"] = rows;
  doc["summary"] = {{"finest_picone_relative_gap", picone_gaps.back()},
                    {"finest_ckn_relative_gap", ckn_gaps.back()},
                    {"picone_gap_decreasing", decreasing(picone_gaps)},
                    {"ckn_gap_decreasing", decreasing(ckn_gaps)}};
}

}  // namespace

InvariantViolation::InvariantViolation(const std::string& invariant, double margin, const std::string& detail)
    : std::runtime_error("invariant '" + invariant + "' falsified (margin " + format_margin(margin) + ") at " + detail),
      invariant_(invariant),
      margin_(margin) {}

ReportDocument run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks) {
  ordered_json doc;
  doc["toolkit"] = "hsmlab";
  doc["version"] = kVersion;
  doc["experiment"] = to_string(config.kind);
  doc["config"] = describe(config);
  switch (config.kind) {
    case ExperimentKind::hardy_constant: run_hardy_constant(config, doc); break;
    case ExperimentKind::hsm_quotient: run_hsm_quotient(config, doc); break;
    case ExperimentKind::interval_s: run_interval_s(config, doc); break;
    case ExperimentKind::criticality: run_criticality(config, doc); break;
    case ExperimentKind::picone_ratio: run_picone_ratio(config, hooks, doc); break;
    case ExperimentKind::convexity_check: run_convexity_check(config, hooks, doc); break;
    case ExperimentKind::ckn_check: run_ckn_check(config, hooks, doc); break;
  }
  return doc;
}

int exit_code(const std::exception& error) {
  if (dynamic_cast<const FalsificationError*>(&error) || dynamic_cast<const InvariantViolation*>(&error)) return 2;
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const std::invalid_argument*>(&error)) return 1;
  return 3;
}

void write_outputs(const ReportDocument& doc, const ExperimentConfig& config) {
  emit_report(doc, ReportFormat::json, config.output_json);
  emit_report(doc, ReportFormat::csv, config.output_csv);
}

}  // namespace hsmlab
