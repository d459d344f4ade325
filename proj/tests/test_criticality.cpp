#include <doctest.h>

#include <cmath>

#include "hsmlab/criticality.hpp"
#include "hsmlab/solvers.hpp"
#include "support/dense_oracle.hpp"

using namespace hsmlab;

namespace {

FunctionalSpec make_spec(DomainPtr d, PotentialSpec pot = {}) {
  FunctionalSpec s;
  s.domain = std::move(d);
  s.potential = std::move(pot);
  return s;
}

std::vector<double> box_indicator(const GridDomain& g, const ProbeBox& b) {
  std::vector<double> w(g.active_count(), 0.0);
  for (std::size_t j = 0; j < w.size(); ++j)
    if (b.contains(g.active_coordinates(j))) w[j] = 1.0;
  return w;
}

}  // namespace

TEST_CASE("power_law_fit on exact fields") {
  auto d = build_cube(3, -1.0, 1.0, 16, {0, 3}, SingularSet::point_origin);
  const std::vector<double> c{0.0, 0.0, 0.0};
  const auto f = ScalarField::sample(d, [](std::span<const double> x) {
    return std::pow(x[0] * x[0] + x[1] * x[1] + x[2] * x[2], -0.25);
  });
  const auto fit = power_law_fit(f, c, 0.2, 0.9);
  CHECK(fit.exponent == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.nodes >= 8);

  const auto one = ScalarField::constant(d, 3.0);
  const auto flat = power_law_fit(one, c, 0.2, 0.9);
  CHECK(std::abs(flat.exponent) < 1e-14);

  CHECK_THROWS_AS(power_law_fit(f, c, 0.2, 0.25), std::invalid_argument);
  CHECK_THROWS_AS(power_law_fit(ScalarField::constant(d, -1.0), c, 0.2, 0.9), std::invalid_argument);
}

TEST_CASE("default box and nested expansion") {
  auto d = build_cube(3, -1.0, 1.0, 8, {0, 3}, SingularSet::point_origin);
  const auto b = default_probe_box(*d);
  CHECK(b.half_width == doctest::Approx(0.5));
  CHECK(b.center == std::vector<double>{0.0, 0.0, 0.0});

  const auto ds = expanding_domains(*d, {1, 2, 4});
  REQUIRE(ds.size() == 3);
  CHECK(ds[2]->resolution()[0] == 32);
  CHECK(ds[2]->extents()[0].lo == doctest::Approx(-4.0));
  CHECK(ds[2]->spacing()[0] == doctest::Approx(d->spacing()[0]));
  // every node of the smaller grid is a node of the larger one
  for (std::size_t j = 0; j < d->active_count(); ++j) {
    const auto x = d->active_coordinates(j);
    const double h = ds[1]->spacing()[0];
    for (int k = 0; k < 3; ++k) {
      const double t = (x[static_cast<std::size_t>(k)] - ds[1]->extents()[static_cast<std::size_t>(k)].lo) / h - 0.5;
      CHECK(std::abs(t - std::round(t)) < 1e-9);
    }
  }
  CHECK_THROWS_AS(expanding_domains(*d, {1.125}), std::invalid_argument);

  auto layered = build_cube(3, -1.0, 1.0, 8, {0, 3}, SingularSet::point_origin, 1.0);
  for (const auto& g : expanding_domains(*layered, {1, 2})) {
    CHECK(g->dirichlet_layer() == 1.0);
    CHECK(g->active_count() == g->node_count() - 8);
  }
  CHECK_THROWS_AS(expanding_domains(*d, {0.5}), std::invalid_argument);
}

TEST_CASE("classify_probe rule") {
  const std::vector<double> vanishing{1.0, 1e-2, 1e-4};
  CHECK(classify_probe(vanishing).classification == Classification::critical);
  const std::vector<double> settling{2.0, 1.5, 1.375};
  const auto s = classify_probe(settling);
  CHECK(s.classification == Classification::subcritical);
  CHECK(*s.limit == doctest::Approx(4.0 / 3.0));
  const std::vector<double> linear{3.0, 2.0, 1.0};
  CHECK(classify_probe(linear).classification == Classification::inconclusive);
  const std::vector<double> flat{1.0, 1.0, 1.0};
  CHECK(classify_probe(flat).classification == Classification::subcritical);
  const std::vector<double> tiny_not_decreasing{1.0, 1e-4, 2e-4};
  CHECK(classify_probe(tiny_not_decreasing).classification != Classification::critical);
  const std::vector<double> two{1.0, 0.5};
  CHECK_THROWS_AS(classify_probe(two), std::invalid_argument);
}

TEST_CASE("probe matches a dense constrained eigenproblem") {
  auto base = build_cube(2, -1.0, 1.0, 8, {0, 2}, SingularSet::point_origin);
  auto spec = make_spec(base);
  spec.perturbation = Perturbation{ProfileSpec{ProfileSpec::Kind::constant, -0.2}, 1.0};
  const auto ds = expanding_domains(*base, {1, 2, 3});
  ProbeOptions opt;
  opt.solver.restarts = 2;
  const auto rep = ground_state_probe(spec, std::nullopt, ds, opt);
  REQUIRE(rep.probe_values.size() == 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto v = total_potential(spec.on(ds[i]));
    const double ref = oracle::min_generalized(oracle::assemble(*ds[i], v.values()), box_indicator(*ds[i], rep.box));
    CHECK(rep.probe_values[i].infimum == doctest::Approx(ref).epsilon(1e-6));
  }
  // nested domains: the infimum never increases
  for (std::size_t i = 1; i < 3; ++i)
    CHECK(rep.probe_values[i].infimum <= rep.probe_values[i - 1].infimum * (1 + 1e-9));
  CHECK(rep.probe_values[2].side == doctest::Approx(6.0));
  REQUIRE(rep.fitted_ground_state.has_value());
  double mass = 0.0;
  const auto& u = *rep.fitted_ground_state;
  for (std::size_t j = 0; j < u.size(); ++j)
    if (rep.box.contains(ds[2]->active_coordinates(j))) mass += u[j] * u[j];
  CHECK(mass * ds[2]->cell_volume() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("probe monotonicity on the point Hardy functional") {
  auto base = build_cube(3, -1.0, 1.0, 6, {0, 3}, SingularSet::point_origin);
  auto spec = make_spec(base, PotentialSpec::hardy_point(0.25));
  ProbeOptions opt;
  opt.solver.restarts = 1;
  const auto rep = ground_state_probe(spec, std::nullopt, expanding_domains(*base, {1, 2, 3}), opt);
  for (std::size_t i = 1; i < 3; ++i) CHECK(rep.probe_values[i].infimum <= rep.probe_values[i - 1].infimum);
  CHECK(rep.decision_threshold == doctest::Approx(1e-3 * rep.probe_values[0].infimum));
  if (rep.classification == Classification::critical) CHECK(rep.probe_values.back().infimum < rep.decision_threshold);
}

TEST_CASE("V = 0 is subcritical") {
  auto base = build_cube(3, -1.0, 1.0, 4, {0, 3}, SingularSet::none);
  ProbeOptions opt;
  opt.solver.restarts = 1;
  const auto rep = ground_state_probe(make_spec(base), std::nullopt, expanding_domains(*base, {1, 2, 4}), opt);
  CHECK(rep.classification == Classification::subcritical);
}

TEST_CASE("probe preconditions") {
  auto base = build_cube(2, -1.0, 1.0, 8, {0, 2}, SingularSet::none);
  const auto ds = expanding_domains(*base, {1, 2, 3});
  ProbeBox outside{{0.0, 0.0}, 1.0};
  CHECK_THROWS_AS(ground_state_probe(make_spec(base), outside, ds), std::invalid_argument);
  CHECK_THROWS_AS(ground_state_probe(make_spec(base), std::nullopt, {ds[0], ds[1]}), std::invalid_argument);
  CHECK_THROWS_AS(ground_state_probe(make_spec(base, PotentialSpec::constant(-100.0)), std::nullopt, ds),
                  std::invalid_argument);
  // nonnegative on the smallest domain only
  CHECK_THROWS_AS(ground_state_probe(make_spec(base, PotentialSpec::constant(-1.0)), std::nullopt, ds),
                  std::invalid_argument);
}
