#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "hsmlab/config.hpp"
#include "hsmlab/experiment.hpp"
#include "hsmlab/parallel.hpp"
#include "hsmlab/picone.hpp"
#include "hsmlab/report.hpp"
#include "hsmlab/version.hpp"
#include "support/dense_oracle.hpp"

using namespace hsmlab;
namespace fs = std::filesystem;

namespace {

const char* kHardy = R"(
[experiment]
kind = hardy-constant
seed = 11
ladder = 4, 6, 8

[domain]
dim = 3
singular_set = point_origin

[solver]
restarts = 3
)";

const char* kInterval = R"(
[experiment]
kind = interval-s
seed = 5
ladder = 6, 8

[domain]
dim = 2
lo = 0
hi = 1

[perturbation]
kind = affine
coefficients = -0.75, 1, 0.5

[interval]
lo = -1000
hi = 1000
tol = 1e-7
)";

const char* kPicone = R"(
[experiment]
kind = picone-ratio
seed = 3
ladder = 500, 2000

[picone]
p = 2
seeds = 2
)";

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hsmlab_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HSMLAB_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string replaced(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("config parsing resolves defaults and the best constant") {
  const auto c = parse_config_string(R"(
[experiment]
kind = ckn-check
seed = 0x10
ladder = 8 16

[domain]
dim = 3
split = 0 3
singular_set = cylinder_y0
resolution_scale = 1, 1, 0.5

[potential]
kind = hardy_cylinder
coefficient = best

[field]
kind = bump
center = 0.4 0.3 -0.2
width = 0.3
)");
  CHECK(c.kind == ExperimentKind::ckn_check);
  CHECK(c.seed == 16);
  CHECK(c.solver.seed == 16);
  CHECK(c.ladder == std::vector<std::int64_t>{8, 16});
  CHECK(c.potential.m == 3);
  CHECK(c.potential.coefficient == 0.25);
  CHECK(c.potential_best_constant);
  REQUIRE(c.field.has_value());
  CHECK(c.field->exponent == 4.0);
  CHECK(c.domain.build(16)->resolution() == std::vector<int>{16, 16, 8});

  const auto j = describe(c);
  CHECK(j["functional"]["potential"]["coefficient"] == 0.25);
  CHECK(j["domain"]["split"] == nlohmann::ordered_json({0, 3}));
  CHECK(j["domain"]["dirichlet_layer"] == 0.0);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"kind", "name", "seed", "ladder", "domain", "functional", "field", "solver",
                                         "parameters"});
}

TEST_CASE("config errors") {
  const std::string base = kHardy;
  CHECK_THROWS_AS(parse_config_string(replaced(base, "ladder = 4, 6, 8", "ladder =")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "ladder = 4, 6, 8", "ladder = 4, 4")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "ladder = 4, 6, 8", "ladder = 8, 6")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "seed = 11", "")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "seed = 11", "seed = -1")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "restarts = 3", "restart = 3")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "restarts = 3", "restarts = three")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(base + "\n[extra]\na = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "kind = hardy-constant", "kind = hardy")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "singular_set = point_origin", "singular_set = none")),
                  ConfigError);
  // a hardy kind that does not match the singular set
  CHECK_THROWS_AS(parse_config_string(base + "\n[potential]\nkind = hardy_cylinder\ncoefficient = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(kInterval, "lo = -1000", "lo = 1")), ConfigError);
  CHECK_THROWS_AS(parse_config_string(replaced(base, "singular_set = point_origin",
                                               "singular_set = point_origin\ndirichlet_layer = -1")),
                  ConfigError);
  try {
    parse_config_string(replaced(base, "ladder = 4, 6, 8", "ladder = 4, 4"));
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("[experiment]: ladder") != std::string::npos);
  }
}

TEST_CASE("report text format") {
  ReportDocument doc;
  doc["b"] = 0.1;
  doc["a"] = 2;
  doc["inf"] = std::numeric_limits<double>::infinity();
  doc["rows"] = {{{"x", 1.5}, {"s", "a,b"}}, {{"y", true}, {"x", 1e-300}}};
  const auto text = to_json_text(doc);
  CHECK(text.find("\"b\": 0.10000000000000001") < text.find("\"a\": 2"));
  CHECK(text.find("\"inf\": null") != std::string::npos);
  CHECK(to_csv_text(doc["rows"]) == "x,s,y\n1.5,\"a,b\",\n1e-300,,true\n");
  // round trip keeps every bit
  const auto back = ReportDocument::parse(text);
  CHECK(back["b"].get<double>() == 0.1);
  CHECK(back["rows"][1]["x"].get<double>() == 1e-300);
  CHECK_THROWS_AS(to_csv_text(doc["a"]), std::invalid_argument);
}

TEST_CASE("hardy-constant echoes the target and the resolved spec") {
  const auto c = parse_config_string(kHardy);
  const auto doc = run_experiment(c);
  CHECK(doc["version"] == kVersion);
  CHECK(doc["target"] == 0.25);
  CHECK(doc["config"] == describe(c));
  REQUIRE(doc["rows"].size() == 3);
  for (const auto& row : doc["rows"]) CHECK(row["quotient"].get<double>() > 0.25);
  CHECK(doc["summary"]["error_decreasing"] == true);
}

TEST_CASE("byte-identical reports across runs and thread counts") {
  for (const char* text : {kHardy, kPicone}) {
    const auto c = parse_config_string(text);
    parallel::set_thread_count(1);
    const auto one = to_json_text(run_experiment(c));
    parallel::set_thread_count(4);
    const auto four = to_json_text(run_experiment(c));
    const auto again = to_json_text(run_experiment(c));
    parallel::set_thread_count(0);
    CHECK(one == four);
    CHECK(four == again);
  }
}

TEST_CASE("picone-ratio at p = 2 is identically one half") {
  const auto doc = run_experiment(parse_config_string(kPicone));
  REQUIRE(doc["rows"].size() == 4);
  for (const auto& row : doc["rows"]) {
    CHECK(std::abs(row["ratio_min"].get<double>() - 0.5) <= 1e-12);
    CHECK(std::abs(row["ratio_max"].get<double>() - 0.5) <= 1e-12);
  }
  CHECK(doc["rows"][0]["seed"] == 3);
  CHECK(doc["rows"][1]["seed"] == 4);
}

TEST_CASE("interval-s gives two finite endpoints matching a dense scan") {
  const auto c = parse_config_string(kInterval);
  const auto doc = run_experiment(c);
  REQUIRE(doc["rows"].size() == 2);
  const auto d = c.domain.build(6);
  const auto vt = c.perturbation->profile.evaluate(d);
  const auto a0 = oracle::assemble(*d, {});
  auto mu = [&](double l) {
    Eigen::MatrixXd a = a0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += l * vt[static_cast<std::size_t>(i)];
    return oracle::min_eigenvalue(a);
  };
  const auto& row = doc["rows"][0];
  REQUIRE(row["lower"].is_number());
  REQUIRE(row["upper"].is_number());
  CHECK(row["lower"].get<double>() == doctest::Approx(oracle::interval_endpoint(mu, -1000, 200, 1e-9)).epsilon(1e-8));
  CHECK(row["upper"].get<double>() == doctest::Approx(oracle::interval_endpoint(mu, 1000, 200, 1e-9)).epsilon(1e-8));
  CHECK(row["zero_in_interior"] == true);
  const auto& curve = doc["tables"]["curve"];
  CHECK(curve.size() > 10);
  const auto csv = to_csv_text(curve);
  CHECK(csv.rfind("resolution,lambda,mu\n", 0) == 0);
}

TEST_CASE("injected falsification maps to exit code 2") {
  const auto c = parse_config_string(kPicone);
  ExperimentHooks hooks;
  int seen = 0;
  hooks.margin = [&seen](const std::string& name, double m) {
    ++seen;
    return name == "holder_defect_nonnegative" ? -m - 1.0 : m;
  };
  try {
    run_experiment(c, hooks);
    FAIL("expected a falsified invariant");
  } catch (const InvariantViolation& e) {
    CHECK(e.invariant() == "holder_defect_nonnegative");
    CHECK(e.margin() < 0.0);
    CHECK(exit_code(e) == 2);
  }
  CHECK(seen == 2);
  CHECK(exit_code(FalsificationError("x", PointSample{})) == 2);
  CHECK(exit_code(ConfigError("x")) == 1);
  CHECK(exit_code(std::runtime_error("x")) == 3);
}

TEST_CASE("convexity-check and ckn-check small runs") {
  const auto conv = run_experiment(parse_config_string(R"(
[experiment]
kind = convexity-check
seed = 2
ladder = 8

[domain]
dim = 3
singular_set = point_origin

[functional]
p = 3

[potential]
kind = hardy_point
coefficient = best

[convexity]
pairs = 5
triangle_pairs = 5
)"));
  const auto& r = conv["rows"][0];
  CHECK(r["max_normalized_defect"].get<double>() <= 1e-10);
  CHECK(r["max_homogeneity_error"].get<double>() <= 1e-12);
  CHECK(r["max_normalized_triangle_excess"].get<double>() <= 1e-10);

  const auto ckn = run_experiment(parse_config_string(R"(
[experiment]
kind = ckn-check
seed = 1
ladder = 16, 32

[domain]
dim = 3
singular_set = cylinder_y0

[potential]
kind = hardy_cylinder
coefficient = best

[field]
kind = bump
center = 0.35, 0.3, -0.25
width = 0.3
)"));
  const auto& s = ckn["summary"];
  CHECK(s["picone_gap_decreasing"] == true);
  CHECK(s["ckn_gap_decreasing"] == true);
  CHECK(s["finest_picone_relative_gap"].get<double>() < 0.1);

  // a bump reaching K is an input error
  const auto bad = parse_config_string(R"(
[experiment]
kind = ckn-check
seed = 1
ladder = 16

[domain]
singular_set = cylinder_y0

[potential]
kind = hardy_cylinder
coefficient = best

[field]
kind = bump
width = 0.3
)");
  try {
    run_experiment(bad);
    FAIL("expected an input error");
  } catch (const std::exception& e) {
    CHECK(exit_code(e) == 1);
  }
}

TEST_CASE("criticality and hsm-quotient small runs") {
  const auto crit = run_experiment(parse_config_string(R"(
[experiment]
kind = criticality
seed = 4
ladder = 4

[domain]
dim = 3

[criticality]
factors = 1, 2, 4

[solver]
restarts = 1
)"));
  CHECK(crit["rows"][0]["classification"] == "subcritical");
  CHECK(crit["tables"]["probe"].size() == 3);

  const auto hsm = run_experiment(parse_config_string(R"(
[experiment]
kind = hsm-quotient
seed = 4
ladder = 4
growth = 1, 2

[domain]
dim = 3
singular_set = point_origin

[potential]
kind = hardy_point
coefficient = best

[solver]
restarts = 1
)"));
  REQUIRE(hsm["rows"].size() == 2);
  CHECK(hsm["rows"][1]["side"] == 4.0);
  CHECK(hsm["rows"][1]["quotient"].get<double>() < hsm["rows"][0]["quotient"].get<double>());
}

TEST_CASE("command line") {
  const auto dir = scratch_dir("cmd");
  write(dir / "hardy.ini", kHardy);
  write(dir / "empty.ini", replaced(kHardy, "ladder = 4, 6, 8", "ladder ="));
  write(dir / "interval.ini", kInterval);
  const auto log = dir / "log.txt";

  CHECK(run_cli("validate " + (dir / "hardy.ini").string(), log) == 0);
  CHECK(slurp(log).find("\"kind\": \"hardy-constant\"") != std::string::npos);

  CHECK(run_cli("run " + (dir / "empty.ini").string(), log) == 1);
  CHECK(slurp(log).find("ladder") != std::string::npos);
  CHECK(run_cli("validate " + (dir / "empty.ini").string(), log) == 1);
  CHECK(run_cli("frobnicate", log) == 1);

  CHECK(run_cli("run " + (dir / "hardy.ini").string(), log) == 0);
  REQUIRE(fs::exists(dir / "hardy.json"));
  REQUIRE(fs::exists(dir / "hardy.csv"));
  const auto first = slurp(dir / "hardy.json");
  CHECK(run_cli("--threads 1 run " + (dir / "hardy.ini").string() + " --json " + (dir / "again.json").string(), log) ==
        0);
  CHECK(slurp(dir / "again.json") == first);
  CHECK(::setenv("HSMLAB_THREADS", "3", 1) == 0);
  CHECK(run_cli("run " + (dir / "hardy.ini").string() + " --json " + (dir / "env.json").string(), log) == 0);
  ::unsetenv("HSMLAB_THREADS");
  CHECK(slurp(dir / "env.json") == first);

  CHECK(run_cli("run " + (dir / "interval.ini").string(), log) == 0);
  CHECK(fs::exists(dir / "interval.curve.csv"));
  CHECK(run_cli("report " + (dir / "interval.json").string() + " --csv --table curve", log) == 0);
  CHECK(slurp(log) == slurp(dir / "interval.curve.csv"));
  CHECK(run_cli("report " + (dir / "interval.json").string(), log) == 0);
  CHECK(slurp(log).find("zero_in_interior") != std::string::npos);
  CHECK(run_cli("report " + (dir / "interval.json").string() + " --table nope", log) == 1);
  fs::remove_all(dir);
}
