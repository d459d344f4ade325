#include "hsmlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace hsmlab {

namespace {

namespace pt = boost::property_tree;
using nlohmann::ordered_json;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::set<std::string> profile{"kind", "value", "coefficients", "center", "width", "exponent", "axis"};
  static const std::map<std::string, std::set<std::string>> keys = [] {
    std::map<std::string, std::set<std::string>> k;
    k["experiment"] = {"kind", "name", "seed", "ladder", "growth"};
    k["domain"] = {"dim", "lo", "hi", "extents", "split", "singular_set", "resolution_scale", "dirichlet_layer"};
    k["functional"] = {"p"};
    k["potential"] = {"kind", "m", "coefficient"};
    k["weight"] = {"kind", "value", "radius", "exponent"};
    k["perturbation"] = profile;
    k["perturbation"].insert("lambda");
    k["poincare"] = profile;
    k["poincare"].insert("constant");
    k["field"] = profile;
    k["solver"] = {"restarts", "tol", "window", "max_iterations"};
    k["interval"] = {"lo", "hi", "tol"};
    k["criticality"] = {"factors", "threshold_factor", "stabilization_fraction", "half_width"};
    k["picone"] = {"p", "seeds", "dim"};
    k["convexity"] = {"pairs", "t_points", "triangle_pairs"};
    k["output"] = {"json", "csv"};
    return k;
  }();
  return keys;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError("[" + where + "]: " + what);
}

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool present() const { return tree_ != nullptr; }

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    std::string s = *v;
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    return s;
  }

  std::string text(const std::string& key, const std::string& fallback) const { return raw(key).value_or(fallback); }

  double number(const std::string& key, double fallback) const {
    const auto s = raw(key);
    return s ? parse_number(key, *s) : fallback;
  }

  std::optional<double> number(const std::string& key) const {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    return parse_number(key, *s);
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    const auto s = raw(key);
    return s ? parse_integer(key, *s) : fallback;
  }

  std::optional<std::vector<double>> numbers(const std::string& key) const {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    std::vector<double> out;
    for (const auto& tok : tokens(*s)) out.push_back(parse_number(key, tok));
    return out;
  }

  std::optional<std::vector<std::int64_t>> integers(const std::string& key) const {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    std::vector<std::int64_t> out;
    for (const auto& tok : tokens(*s)) out.push_back(parse_integer(key, tok));
    return out;
  }

  [[noreturn]] void fail_key(const std::string& key, const std::string& what) const { fail(name_, key + ": " + what); }

 private:
  static std::vector<std::string> tokens(const std::string& s) {
    std::string t = s;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream in(t);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  }

  double parse_number(const std::string& key, const std::string& s) const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail_key(key, "'" + s + "' is not a number");
    }
    if (used != s.size() || std::isnan(v)) fail_key(key, "'" + s + "' is not a number");
    return v;
  }

  std::int64_t parse_integer(const std::string& key, const std::string& s) const {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      fail_key(key, "'" + s + "' is not an integer");
    }
    if (used != s.size()) fail_key(key, "'" + s + "' is not an integer");
    return v;
  }

  std::string name_;
  const pt::ptree* tree_;
};

ProfileSpec read_profile(const Section& s, int dim) {
  ProfileSpec p;
  try {
    p.kind = profile_kind_from_string(s.text("kind", "zero"));
  } catch (const std::invalid_argument& e) {
    s.fail_key("kind", e.what());
  }
  if (p.kind == ProfileSpec::Kind::tabulated) s.fail_key("kind", "tabulated profiles cannot be configured");
  p.value = s.number("value", p.kind == ProfileSpec::Kind::zero ? 0.0 : 1.0);
  p.coefficients = s.numbers("coefficients").value_or(std::vector<double>{});
  p.center = s.numbers("center").value_or(std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  p.width = s.number("width", 1.0);
  p.exponent = s.number("exponent", p.kind == ProfileSpec::Kind::bump ? 4.0 : 0.0);
  p.axis = static_cast<int>(s.integer("axis", -1));
  if (p.kind == ProfileSpec::Kind::affine && p.coefficients.size() != static_cast<std::size_t>(dim) + 1)
    s.fail_key("coefficients", "affine profile needs dim + 1 coefficients");
  if (p.center.size() != static_cast<std::size_t>(dim)) s.fail_key("center", "needs dim entries");
  if (!(p.width > 0.0)) s.fail_key("width", "must be positive");
  if (p.kind == ProfileSpec::Kind::bump && !(p.exponent >= 2.0)) s.fail_key("exponent", "bump exponent must be >= 2");
  if (p.axis < -1 || p.axis >= dim) s.fail_key("axis", "out of range");
  return p;
}

ordered_json describe_profile(const ProfileSpec& p) {
  ordered_json j;
  j["kind"] = to_string(p.kind);
  j["value"] = p.value;
  j["coefficients"] = p.coefficients;
  j["center"] = p.center;
  j["width"] = p.width;
  j["exponent"] = p.exponent;
  j["axis"] = p.axis;
  return j;
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

int hardy_dimension(const ExperimentConfig& c) {
  switch (c.potential.kind) {
    case PotentialSpec::Kind::hardy_cylinder: return c.potential.m;
    case PotentialSpec::Kind::hardy_point: return c.domain.dim;
    case PotentialSpec::Kind::hardy_boundary: return 1;
    default: return 0;
  }
}

void validate(ExperimentConfig& c) {
  if (c.ladder.empty()) fail("experiment", "ladder: must not be empty");
  for (std::size_t i = 0; i < c.ladder.size(); ++i) {
    if (c.ladder[i] < (c.kind == ExperimentKind::picone_ratio ? 1 : 2))
      fail("experiment", "ladder: entry " + std::to_string(c.ladder[i]) + " is too small");
    if (i > 0 && c.ladder[i] <= c.ladder[i - 1]) fail("experiment", "ladder: must be strictly increasing");
  }
  if (!(c.p > 1.0) || !std::isfinite(c.p)) fail("functional", "p: must be a finite real > 1");
  if (c.solver.restarts < 1) fail("solver", "restarts: must be >= 1");
  if (!(c.solver.tol > 0.0)) fail("solver", "tol: must be positive");
  if (c.solver.window < 1 || c.solver.max_iterations < 1) fail("solver", "window and max_iterations must be >= 1");

  switch (c.kind) {
    case ExperimentKind::hardy_constant:
      if (c.domain.singular_set == SingularSet::none) fail("domain", "singular_set: hardy-constant needs one");
      break;
    case ExperimentKind::hsm_quotient:
      if (!(c.p < c.domain.dim)) fail("functional", "p: the Sobolev exponent needs p < dim");
      if (c.growth.empty() || c.growth.front() < 1.0 || !strictly_increasing(c.growth))
        fail("experiment", "growth: must be strictly increasing factors >= 1");
      break;
    case ExperimentKind::interval_s:
      if (c.p != 2.0) fail("functional", "p: interval-s needs p = 2");
      if (!c.perturbation) fail("perturbation", "interval-s needs a perturbation profile");
      if (!(c.bracket.lo <= 0.0 && 0.0 <= c.bracket.hi && c.bracket.lo < c.bracket.hi))
        fail("interval", "lo/hi: bracket must contain 0");
      if (!(c.interval_tol > 0.0)) fail("interval", "tol: must be positive");
      break;
    case ExperimentKind::criticality:
      if (c.probe_factors.size() < 3 || c.probe_factors.front() != 1.0 || !strictly_increasing(c.probe_factors))
        fail("criticality", "factors: need >= 3 strictly increasing factors starting at 1");
      if (!(c.threshold_factor > 0.0)) fail("criticality", "threshold_factor: must be positive");
      if (!(c.stabilization_fraction > 0.0)) fail("criticality", "stabilization_fraction: must be positive");
      break;
    case ExperimentKind::picone_ratio:
      if (c.picone_p.empty()) c.picone_p = {c.p};
      for (double q : c.picone_p)
        if (!(q >= 2.0) || !std::isfinite(q)) fail("picone", "p: every entry must be >= 2");
      if (c.picone_seeds < 1) fail("picone", "seeds: must be >= 1");
      if (c.picone_dim < 1) fail("picone", "dim: must be >= 1");
      break;
    case ExperimentKind::convexity_check:
      if (!(c.p >= 2.0)) fail("functional", "p: convexity-check needs p >= 2");
      if (c.convexity_pairs < 1 || c.triangle_pairs < 0) fail("convexity", "pairs must be positive");
      if (c.convexity_t_points < 1) fail("convexity", "t_points: must be >= 1");
      break;
    case ExperimentKind::ckn_check:
      if (c.p != 2.0) fail("functional", "p: ckn-check needs p = 2");
      if (c.potential.kind != PotentialSpec::Kind::hardy_cylinder || !c.potential_best_constant)
        fail("potential", "ckn-check needs kind = hardy_cylinder with coefficient = best");
      if (!c.field) fail("field", "ckn-check needs a test function");
      break;
  }

  if (c.kind != ExperimentKind::picone_ratio) {
    try {
      c.functional(c.domain.build(static_cast<int>(c.ladder.front()))).validate();
      if (c.field) c.field->evaluate(c.domain.build(static_cast<int>(c.ladder.front())));
      if (c.poincare_psi) c.poincare_psi->evaluate(c.domain.build(static_cast<int>(c.ladder.front())));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      fail("functional", e.what());
    }
  }
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::hardy_constant: return "hardy-constant";
    case ExperimentKind::hsm_quotient: return "hsm-quotient";
    case ExperimentKind::interval_s: return "interval-s";
    case ExperimentKind::criticality: return "criticality";
    case ExperimentKind::picone_ratio: return "picone-ratio";
    case ExperimentKind::convexity_check: return "convexity-check";
    case ExperimentKind::ckn_check: return "ckn-check";
  }
  return "hardy-constant";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::hardy_constant, ExperimentKind::hsm_quotient, ExperimentKind::interval_s,
                 ExperimentKind::criticality, ExperimentKind::picone_ratio, ExperimentKind::convexity_check,
                 ExperimentKind::ckn_check})
    if (to_string(k) == name) return k;
  throw ConfigError("[experiment]: kind: unknown experiment '" + name + "'");
}

DomainPtr DomainConfig::build(int resolution) const {
  std::vector<int> res(static_cast<std::size_t>(dim));
  for (std::size_t k = 0; k < res.size(); ++k)
    res[k] = std::max(2, static_cast<int>(std::lround(resolution_scale[k] * resolution)));
  return build_grid(extents, res, split, singular_set, dirichlet_layer);
}

FunctionalSpec ExperimentConfig::functional(DomainPtr d) const {
  FunctionalSpec s;
  s.domain = std::move(d);
  s.p = p;
  s.potential = potential;
  s.weight = weight;
  s.perturbation = perturbation;
  s.poincare_psi = poincare_psi;
  s.poincare_constant = poincare_constant;
  return s;
}

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax: " + e.message() + " at line " + std::to_string(e.line()));
  }
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(section, "key outside a section");
    auto it = known.find(section);
    if (it == known.end()) fail(section, "unknown section");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) fail(section, key + ": unknown key");
  }
  auto section = [&tree](const std::string& name) {
    auto c = tree.get_child_optional(pt::ptree::path_type(name, '\0'));
    return Section(name, c ? &*c : nullptr);
  };

  ExperimentConfig c;
  const Section exp = section("experiment");
  const auto kind = exp.raw("kind");
  if (!kind) fail("experiment", "kind: required");
  c.kind = experiment_kind_from_string(*kind);
  c.name = exp.text("name", to_string(c.kind));
  const auto seed = exp.raw("seed");
  if (!seed) fail("experiment", "seed: required");
  try {
    std::size_t used = 0;
    c.seed = std::stoull(*seed, &used, 0);
    if (used != seed->size() || (*seed)[0] == '-') throw std::invalid_argument("seed");
  } catch (const std::exception&) {
    fail("experiment", "seed: '" + *seed + "' is not an unsigned integer");
  }
  const auto ladder = exp.integers("ladder");
  if (!ladder) fail("experiment", "ladder: required");
  c.ladder = *ladder;
  c.growth = exp.numbers("growth").value_or(c.growth);

  const Section dom = section("domain");
  c.domain.dim = static_cast<int>(dom.integer("dim", 3));
  if (c.domain.dim < 1 || c.domain.dim > 6) fail("domain", "dim: must be in 1..6");
  const auto dim = static_cast<std::size_t>(c.domain.dim);
  if (const auto ext = dom.numbers("extents")) {
    if (dom.raw("lo") || dom.raw("hi")) fail("domain", "give either extents or lo/hi");
    if (ext->size() != 2 * dim) fail("domain", "extents: needs 2 * dim numbers");
    for (std::size_t k = 0; k < dim; ++k) c.domain.extents.push_back({(*ext)[2 * k], (*ext)[2 * k + 1]});
  } else {
    c.domain.extents.assign(dim, Interval{dom.number("lo", -1.0), dom.number("hi", 1.0)});
  }
  for (const auto& e : c.domain.extents)
    if (!(e.hi > e.lo)) fail("domain", "extents: every axis needs lo < hi");
  c.domain.resolution_scale = dom.numbers("resolution_scale").value_or(std::vector<double>(dim, 1.0));
  if (c.domain.resolution_scale.size() != dim) fail("domain", "resolution_scale: needs dim entries");
  for (double s : c.domain.resolution_scale)
    if (!(s > 0.0)) fail("domain", "resolution_scale: entries must be positive");
  const auto split = dom.integers("split").value_or(std::vector<std::int64_t>{0, c.domain.dim});
  if (split.size() != 2 || split[0] < 0 || split[1] < 0 || split[0] + split[1] != c.domain.dim)
    fail("domain", "split: needs 'n m' with n + m = dim");
  c.domain.split = {static_cast<int>(split[0]), static_cast<int>(split[1])};
  try {
    c.domain.singular_set = singular_set_from_string(dom.text("singular_set", "none"));
  } catch (const std::invalid_argument& e) {
    fail("domain", std::string("singular_set: ") + e.what());
  }
  c.domain.dirichlet_layer = dom.number("dirichlet_layer", 0.0);
  if (!(c.domain.dirichlet_layer >= 0.0)) fail("domain", "dirichlet_layer: must be >= 0");
  if (c.domain.dirichlet_layer > 0.0 && c.domain.singular_set == SingularSet::none)
    fail("domain", "dirichlet_layer: needs a singular set");

  c.p = section("functional").number("p", 2.0);

  const Section pot = section("potential");
  try {
    c.potential.kind = potential_kind_from_string(pot.text("kind", "zero"));
  } catch (const std::invalid_argument& e) {
    pot.fail_key("kind", e.what());
  }
  if (c.potential.kind == PotentialSpec::Kind::tabulated) pot.fail_key("kind", "tabulated potentials cannot be configured");
  c.potential.m = static_cast<int>(pot.integer("m", c.potential.kind == PotentialSpec::Kind::hardy_cylinder
                                                        ? c.domain.split.m
                                                        : 0));
  if (pot.text("coefficient", "") == "best") {
    c.potential_best_constant = true;
    if (!c.potential.is_hardy()) pot.fail_key("coefficient", "'best' needs a hardy kind");
    c.potential.coefficient = hardy_constant(hardy_dimension(c), c.p);
  } else {
    c.potential.coefficient = pot.number("coefficient", 0.0);
  }

  const Section w = section("weight");
  try {
    c.weight.kind = weight_kind_from_string(w.text("kind", "constant"));
  } catch (const std::invalid_argument& e) {
    w.fail_key("kind", e.what());
  }
  if (c.weight.kind == WeightSpec::Kind::tabulated) w.fail_key("kind", "tabulated weights cannot be configured");
  c.weight.value = w.number("value", 1.0);
  c.weight.radius = w.number("radius", 0.0);
  c.weight.exponent = w.number("exponent");
  if (c.weight.kind == WeightSpec::Kind::ft_log) {
    if (c.domain.dim <= 2) w.fail_key("kind", "ft_log needs dim > 2");
    if (!c.weight.exponent) c.weight.exponent = 1.0 + c.domain.dim / (c.domain.dim - 2.0);
  }

  if (const Section s = section("perturbation"); s.present())
    c.perturbation = Perturbation{read_profile(s, c.domain.dim), s.number("lambda", 0.0)};
  if (const Section s = section("poincare"); s.present()) {
    c.poincare_psi = read_profile(s, c.domain.dim);
    c.poincare_constant = s.number("constant", 1.0);
  }
  if (const Section s = section("field"); s.present()) c.field = read_profile(s, c.domain.dim);

  const Section sol = section("solver");
  c.solver.restarts = static_cast<int>(sol.integer("restarts", c.solver.restarts));
  c.solver.tol = sol.number("tol", c.solver.tol);
  c.solver.window = static_cast<int>(sol.integer("window", c.solver.window));
  c.solver.max_iterations = static_cast<int>(sol.integer("max_iterations", c.solver.max_iterations));
  c.solver.seed = c.seed;

  const Section iv = section("interval");
  c.bracket = {iv.number("lo", c.bracket.lo), iv.number("hi", c.bracket.hi)};
  c.interval_tol = iv.number("tol", c.interval_tol);

  const Section cr = section("criticality");
  c.probe_factors = cr.numbers("factors").value_or(c.probe_factors);
  c.threshold_factor = cr.number("threshold_factor", c.threshold_factor);
  c.stabilization_fraction = cr.number("stabilization_fraction", c.stabilization_fraction);
  c.probe_half_width = cr.number("half_width");

  const Section pc = section("picone");
  c.picone_p = pc.numbers("p").value_or(std::vector<double>{});
  c.picone_seeds = static_cast<int>(pc.integer("seeds", 1));
  c.picone_dim = static_cast<int>(pc.integer("dim", 3));

  const Section cv = section("convexity");
  c.convexity_pairs = static_cast<int>(cv.integer("pairs", c.convexity_pairs));
  c.convexity_t_points = static_cast<int>(cv.integer("t_points", c.convexity_t_points));
  c.triangle_pairs = static_cast<int>(cv.integer("triangle_pairs", c.triangle_pairs));

  const Section out = section("output");
  c.output_json = out.text("json", "");
  c.output_csv = out.text("csv", "");

  validate(c);
  return c;
}

ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  ExperimentConfig c = parse_config(in);
  const auto dir = path.parent_path();
  auto resolve = [&dir, &path](std::filesystem::path& p, const char* ext) {
    if (p.empty()) p = std::filesystem::path(path.stem().string() + ext);
    if (p.is_relative()) p = dir / p;
  };
  resolve(c.output_json, ".json");
  resolve(c.output_csv, ".csv");
  return c;
}

ordered_json describe(const ExperimentConfig& c) {
  ordered_json j;
  j["kind"] = to_string(c.kind);
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["ladder"] = c.ladder;

  ordered_json d;
  d["dim"] = c.domain.dim;
  ordered_json ext = ordered_json::array();
  for (const auto& e : c.domain.extents) ext.push_back({e.lo, e.hi});
  d["extents"] = ext;
  d["resolution_scale"] = c.domain.resolution_scale;
  d["split"] = {c.domain.split.n, c.domain.split.m};
  d["singular_set"] = to_string(c.domain.singular_set);
  d["dirichlet_layer"] = c.domain.dirichlet_layer;
  j["domain"] = d;

  ordered_json f;
  f["p"] = c.p;
  f["potential"] = {{"kind", to_string(c.potential.kind)},
                    {"m", c.potential.m},
                    {"coefficient", c.potential.coefficient},
                    {"best_constant", c.potential_best_constant}};
  ordered_json w;
  w["kind"] = to_string(c.weight.kind);
  w["value"] = c.weight.value;
  w["radius"] = c.weight.radius;
  w["exponent"] = c.weight.exponent ? ordered_json(*c.weight.exponent) : ordered_json(nullptr);
  f["weight"] = w;
  if (c.perturbation) {
    auto pj = describe_profile(c.perturbation->profile);
    pj["lambda"] = c.perturbation->lambda;
    f["perturbation"] = pj;
  } else {
    f["perturbation"] = nullptr;
  }
  if (c.poincare_psi) {
    auto pj = describe_profile(*c.poincare_psi);
    pj["constant"] = c.poincare_constant;
    f["poincare"] = pj;
  } else {
    f["poincare"] = nullptr;
  }
  j["functional"] = f;
  j["field"] = c.field ? describe_profile(*c.field) : ordered_json(nullptr);

  j["solver"] = {{"restarts", c.solver.restarts},
                 {"tol", c.solver.tol},
                 {"window", c.solver.window},
                 {"max_iterations", c.solver.max_iterations}};

  ordered_json params;
  switch (c.kind) {
    case ExperimentKind::hsm_quotient: params["growth"] = c.growth; break;
    case ExperimentKind::interval_s:
      params["bracket"] = {c.bracket.lo, c.bracket.hi};
      params["tol"] = c.interval_tol;
      break;
    case ExperimentKind::criticality:
      params["factors"] = c.probe_factors;
      params["threshold_factor"] = c.threshold_factor;
      params["stabilization_fraction"] = c.stabilization_fraction;
      params["half_width"] = c.probe_half_width ? ordered_json(*c.probe_half_width) : ordered_json(nullptr);
      break;
    case ExperimentKind::picone_ratio:
      params["p"] = c.picone_p;
      params["seeds"] = c.picone_seeds;
      params["dim"] = c.picone_dim;
      break;
    case ExperimentKind::convexity_check:
      params["pairs"] = c.convexity_pairs;
      params["t_points"] = c.convexity_t_points;
      params["triangle_pairs"] = c.triangle_pairs;
      break;
    default: params = ordered_json::object(); break;
  }
  j["parameters"] = params;
  return j;
}

}  // namespace hsmlab
