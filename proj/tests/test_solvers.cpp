#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hsmlab/operators.hpp"
#include "hsmlab/solvers.hpp"
#include "support/dense_oracle.hpp"

using namespace hsmlab;

namespace {

constexpr double kPi = std::numbers::pi;

FunctionalSpec make_spec(DomainPtr d, PotentialSpec pot = {}, double p = 2.0) {
  FunctionalSpec s;
  s.domain = std::move(d);
  s.p = p;
  s.potential = std::move(pot);
  return s;
}

ProfileSpec affine(std::vector<double> coeffs) {
  ProfileSpec s;
  s.kind = ProfileSpec::Kind::affine;
  s.coefficients = std::move(coeffs);
  return s;
}

ProfileSpec gaussian(std::vector<double> center, double width, double value) {
  ProfileSpec s;
  s.kind = ProfileSpec::Kind::gaussian;
  s.center = std::move(center);
  s.width = width;
  s.value = value;
  return s;
}

std::vector<double> values_of(const ScalarField& f) { return {f.values().begin(), f.values().end()}; }

ScalarField bump(const DomainPtr& d, std::vector<double> c, double r) {
  const int N = d->dim();
  return ScalarField::sample(
      d,
      [c, r](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) s += (x[k] - c[k]) * (x[k] - c[k]);
        const double t = s / (r * r);
        return t < 1.0 ? std::pow(1.0 - t, 3) : 0.0;
      },
      [c, r, N](std::span<const double> x, std::span<double> g) {
        double s = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) s += (x[k] - c[k]) * (x[k] - c[k]);
        const double t = s / (r * r);
        const double f = t < 1.0 ? -6.0 * (1.0 - t) * (1.0 - t) / (r * r) : 0.0;
        for (int k = 0; k < N; ++k) g[static_cast<std::size_t>(k)] = f * (x[static_cast<std::size_t>(k)] - c[static_cast<std::size_t>(k)]);
      });
}

}  // namespace

TEST_CASE("min_eigenvalue: 1-D Dirichlet Laplacian") {
  auto d = build_cube(1, 0.0, 1.0, 128, {1, 0}, SingularSet::none);
  const auto e = min_eigenvalue(make_spec(d), 0.0);
  CHECK(e.converged);
  CHECK(std::abs(e.value - kPi * kPi) < 0.02 * kPi * kPi);
  // the ground state is single-signed and positive after sign normalization
  for (double v : e.vector.values()) CHECK(v > 0.0);
}

TEST_CASE("min_eigenvalue matches the dense spectrum on a masked 2-D grid") {
  auto full = build_cube(2, -1.0, 1.0, 12, {0, 2}, SingularSet::point_origin);
  auto d = full->restricted([](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1] < 0.8; });
  auto spec = make_spec(d, PotentialSpec::zero());
  spec.perturbation = Perturbation{gaussian({0.2, -0.1}, 0.3, -4.0), 1.0};
  const auto v = total_potential(spec);
  const auto e = min_eigenvalue(spec, 1.0);
  const double ref = oracle::min_eigenvalue(oracle::assemble(*d, v.values()));
  CHECK(e.value == doctest::Approx(ref).epsilon(1e-9));
  // residual contract
  std::vector<double> ax(d->active_count());
  ops::apply_operator(*d, v.values(), e.vector.values(), ax);
  double r = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) r += std::pow(ax[i] - e.value * e.vector[i], 2);
  const auto diag = ops::operator_diagonal(*d, v.values());
  CHECK(std::sqrt(r) <= 1e-10 * *std::max_element(diag.begin(), diag.end()) * ops::norm2(e.vector.values()) * 1.0001);
}

TEST_CASE("min_eigenvalue: constant shift") {
  auto d = build_cube(2, 0.0, 1.0, 16, {0, 2}, SingularSet::none);
  const double mu0 = min_eigenvalue(make_spec(d), 0.0).value;
  for (double M : {-30.0, 2.5, 100.0}) {
    const double mu = min_eigenvalue(make_spec(d, PotentialSpec::constant(M)), 0.0).value;
    CHECK(mu == doctest::Approx(mu0 + M).epsilon(1e-10));
  }
}

TEST_CASE("min_eigenvalue: 1-D boundary Hardy below the best constant") {
  for (int res : {8, 16, 32, 64}) {
    auto d = build_cube(1, 0.0, 1.0, res, {1, 0}, SingularSet::domain_boundary);
    for (double c : {0.1, 0.2, 0.24}) {
      auto spec = make_spec(d, PotentialSpec::hardy_boundary(c));
      const auto v = total_potential(spec);
      const double mu = min_eigenvalue(spec, 0.0).value;
      const double ref = oracle::min_eigenvalue(oracle::assemble(*d, v.values()));
      CHECK(mu > 0.0);
      CHECK(mu == doctest::Approx(ref).epsilon(1e-8));
    }
  }
}

TEST_CASE("min_eigenvalue is concave in lambda") {
  auto d = build_cube(2, 0.0, 1.0, 10, {0, 2}, SingularSet::none);
  auto spec = make_spec(d);
  spec.perturbation = Perturbation{affine({1.0, -4.0, 2.0}), 0.0};
  std::vector<double> mu;
  for (int i = -6; i <= 6; ++i) mu.push_back(min_eigenvalue(spec, 10.0 * i).value);
  for (std::size_t i = 1; i + 1 < mu.size(); ++i) CHECK(mu[i - 1] + mu[i + 1] - 2.0 * mu[i] <= 1e-8);
}

TEST_CASE("min_eigenvalue rejects p != 2") {
  auto d = build_cube(3, 0.0, 1.0, 4, {0, 3}, SingularSet::none);
  CHECK_THROWS_AS(min_eigenvalue(make_spec(d, {}, 2.5), 0.0), std::invalid_argument);
}

TEST_CASE("interval S: zero perturbation is unbounded on both sides") {
  auto d = build_cube(2, 0.0, 1.0, 8, {0, 2}, SingularSet::none);
  auto spec = make_spec(d);
  spec.perturbation = Perturbation{ProfileSpec{}, 0.0};
  const auto s = compute_interval_S(spec, {-1e4, 1e4});
  CHECK_FALSE(s.bounded_below);
  CHECK_FALSE(s.bounded_above);
  CHECK(s.lower == -1e4);
  CHECK(s.upper == 1e4);
  CHECK(std::isnan(s.lower_eigenvalue));
  CHECK_FALSE(s.lower_ground_state.has_value());
}

TEST_CASE("interval S against a dense lambda scan") {
  auto d = build_cube(2, 0.0, 1.0, 8, {0, 2}, SingularSet::none);
  const double tol = 1e-6;
  auto check_case = [&](const ProfileSpec& vt, Interval bracket, bool below, bool above) {
    auto spec = make_spec(d);
    spec.perturbation = Perturbation{vt, 0.0};
    const auto s = compute_interval_S(spec, bracket, tol);
    const auto vtf = vt.evaluate(d);
    const auto a0 = oracle::assemble(*d, {});
    auto mu = [&](double l) {
      Eigen::MatrixXd a = a0;
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += l * vtf[static_cast<std::size_t>(i)];
      return oracle::min_eigenvalue(a);
    };
    CHECK(s.bounded_below == below);
    CHECK(s.bounded_above == above);
    CHECK(s.lower < 0.0);
    CHECK(s.upper > 0.0);
    CHECK(std::abs(s.upper - oracle::interval_endpoint(mu, bracket.hi, 200, 1e-9)) <= tol);
    CHECK(std::abs(s.lower - oracle::interval_endpoint(mu, bracket.lo, 200, 1e-9)) <= tol);
    if (below) {
      CHECK(std::abs(s.lower_eigenvalue) < 1e-3);
      REQUIRE(s.lower_ground_state.has_value());
      CHECK(s.lower_ground_state->is_nonnegative());
    }
    for (auto [l, m] : s.curve)
      if (l > s.lower + tol && l < s.upper - tol) CHECK(m >= -1e-9);
    for (std::size_t i = 1; i < s.curve.size(); ++i) CHECK(s.curve[i - 1].first < s.curve[i].first);
  };
  SUBCASE("sign-changing") { check_case(affine({-0.75, 1.0, 0.5}), {-1e3, 1e3}, true, true); }
  SUBCASE("nonnegative") { check_case(affine({1.0, 1.0, 0.0}), {-1e3, 1e3}, true, false); }
}

TEST_CASE("interval S errors") {
  auto d = build_cube(2, 0.0, 1.0, 6, {0, 2}, SingularSet::none);
  auto spec = make_spec(d, PotentialSpec::constant(-100.0));
  spec.perturbation = Perturbation{affine({1.0, 0.0, 0.0}), 0.0};
  CHECK_THROWS_AS(compute_interval_S(spec, {-1, 1}), std::invalid_argument);
  spec.potential = PotentialSpec::zero();
  CHECK_THROWS_AS(compute_interval_S(spec, {0.5, 1}), std::invalid_argument);
  CHECK_THROWS_AS(compute_interval_S(make_spec(d), {-1, 1}), std::invalid_argument);
}

TEST_CASE("Rayleigh-Ritz path matches a dense generalized eigenproblem") {
  auto d = build_cube(3, -1.0, 1.0, 6, {0, 3}, SingularSet::point_origin);
  auto spec = make_spec(d);
  SolverOptions opt;
  opt.restarts = 3;
  const auto r = minimize_hardy_quotient(spec, opt);
  const auto dist = distance_field(d);
  std::vector<double> mass(dist.size());
  for (std::size_t i = 0; i < mass.size(); ++i) mass[i] = std::pow(dist[i], -2.0);
  const double ref = oracle::min_generalized(oracle::assemble(*d, {}), mass);
  CHECK(r.quotient_value == doctest::Approx(ref).epsilon(1e-7));
  CHECK(r.converged);
  CHECK(r.restart_values.size() == 3);
}

TEST_CASE("quotient fast paths agree with generic descent") {
  auto d = build_cube(3, 0.0, 1.0, 6, {0, 3}, SingularSet::none);
  QuotientProblem pr;
  pr.domain = d;
  pr.p = 2.0;
  pr.q = 6.0;
  pr.weight.assign(d->active_count(), 1.0);
  SolverOptions opt;
  opt.restarts = 1;
  const auto start = bubble_profile(*d, 2.0);
  const auto fast = minimize_quotient(pr, opt, start);
  const auto slow = minimize_quotient_descent(pr, start, opt);
  CHECK(fast.quotient_value == doctest::Approx(slow.quotient_value).epsilon(1e-4));
  CHECK(fast.method != slow.method);

  pr.q = 2.0;
  const auto rr = minimize_quotient(pr, opt, start);
  const auto rd = minimize_quotient_descent(pr, start, opt);
  CHECK(rr.quotient_value == doctest::Approx(rd.quotient_value).epsilon(1e-4));
  CHECK(rr.quotient_value == doctest::Approx(oracle::min_eigenvalue(oracle::assemble(*d, {}))).epsilon(1e-8));
}

TEST_CASE("descent handles p != 2 and agrees across starts") {
  auto d = build_cube(2, 0.0, 1.0, 10, {0, 2}, SingularSet::none);
  QuotientProblem pr;
  pr.domain = d;
  pr.p = 3.0;
  pr.q = 3.0;
  pr.weight.assign(d->active_count(), 1.0);
  SolverOptions opt;
  opt.restarts = 4;
  const auto r = minimize_quotient(pr, opt, bubble_profile(*d, 3.0));
  CHECK(r.quotient_value > 0.0);
  for (double v : r.restart_values) CHECK(v == doctest::Approx(r.quotient_value).epsilon(1e-3));
  CHECK(r.quotient_value == doctest::Approx(quotient_value(pr, r.minimizer.values())).epsilon(1e-12));
}

TEST_CASE("minimize_hsm_quotient: V = 0 against the profile oracle") {
  auto d = build_cube(3, -4.0, 4.0, 12, {0, 3}, SingularSet::none);
  auto spec = make_spec(d);
  SolverOptions opt;
  opt.restarts = 2;
  const auto r = minimize_hsm_quotient(spec, opt);
  // bubble shifted to vanish on the inscribed sphere |x| = 4
  const auto prof = ScalarField::sample(d, [](std::span<const double> x) {
    const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    return std::max(0.0, 1.0 / std::sqrt(1.0 + r2) - 1.0 / std::sqrt(17.0));
  });
  const double oracle_value = evaluate_Q(spec, prof) / sobolev_rhs(spec, prof);
  CHECK(r.quotient_value >= 0.5 * oracle_value);
  CHECK(r.quotient_value <= 1.2 * oracle_value);
  CHECK(r.quotient_value == doctest::Approx(evaluate_Q(spec, r.minimizer) / sobolev_rhs(spec, r.minimizer)).epsilon(1e-10));
  CHECK(r.minimizer.is_nonnegative());
}

TEST_CASE("HSM quotient is invariant under scaling and absolute value") {
  auto d = build_cube(3, -1.0, 1.0, 6, {1, 2}, SingularSet::cylinder_y0);
  auto spec = make_spec(d, PotentialSpec::hardy_cylinder(2, hardy_constant(2, 2.0)));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> v(d->active_count());
  for (auto& x : v) x = U(rng);
  QuotientProblem pr;
  pr.domain = d;
  pr.q = 6.0;
  pr.potential = values_of(total_potential(spec));
  pr.weight.assign(v.size(), 1.0);
  const double q0 = quotient_value(pr, v);
  std::vector<double> w = v;
  for (auto& x : w) x *= -3.7;
  CHECK(quotient_value(pr, w) == doctest::Approx(q0).epsilon(1e-12));
  for (auto& x : w) x = std::abs(x);
  CHECK(quotient_value(pr, w) <= q0 * (1 + 1e-12));
}

TEST_CASE("HSM cylinder m = 1 stays positive under refinement") {
  std::vector<double> vals;
  for (int res : {6, 12}) {
    // half-space box: K = {y = 0} is the Dirichlet face
    auto d = build_grid({{-1, 1}, {-1, 1}, {0, 1}}, {res, res, res / 2}, {2, 1}, SingularSet::cylinder_y0);
    auto spec = make_spec(d, PotentialSpec::hardy_cylinder(1, 0.25));
    SolverOptions opt;
    opt.restarts = 2;
    vals.push_back(minimize_hsm_quotient(spec, opt).quotient_value);
  }
  CHECK(vals[0] > 0.0);
  CHECK(vals[1] > 0.0);
  CHECK(std::abs(vals[1] - vals[0]) <= 0.2 * vals[0]);
}

TEST_CASE("HSM point case decreases under domain growth") {
  std::vector<double> vals;
  for (int side : {1, 2}) {
    auto d = build_cube(3, -side, side, 8 * side, {0, 3}, SingularSet::point_origin);
    auto spec = make_spec(d, PotentialSpec::hardy_point(0.25));
    SolverOptions opt;
    opt.restarts = 1;
    vals.push_back(minimize_hsm_quotient(spec, opt).quotient_value);
  }
  CHECK(vals[1] < vals[0]);
}

TEST_CASE("HSM minimizer with a Poincare penalty") {
  auto d = build_cube(3, 0.0, 1.0, 6, {0, 3}, SingularSet::none);
  auto spec = make_spec(d);
  SolverOptions opt;
  opt.restarts = 2;
  const double plain = minimize_hsm_quotient(spec, opt).quotient_value;
  spec.poincare_psi = ProfileSpec{ProfileSpec::Kind::constant, 1.0};
  spec.poincare_constant = 10.0;
  const auto r = minimize_hsm_quotient(spec, opt);
  CHECK(r.quotient_value >= plain * (1 - 1e-6));
  const auto qv = evaluate_quotient(spec, r.minimizer);
  CHECK(r.quotient_value == doctest::Approx(qv.quotient).epsilon(1e-8));
}

TEST_CASE("minimize_hardy_quotient needs a singular set") {
  auto d = build_cube(3, 0.0, 1.0, 4, {0, 3}, SingularSet::none);
  CHECK_THROWS_AS(minimize_hardy_quotient(make_spec(d)), std::invalid_argument);
}

TEST_CASE("solve_positive_solution: harmonic with constant data") {
  auto d = build_cube(2, 0.0, 1.0, 12, {0, 2}, SingularSet::none);
  const auto u = solve_positive_solution(make_spec(d), [](std::span<const double>) { return 1.0; });
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("solve_positive_solution: supercritical potential is reported") {
  auto d = build_cube(1, 0.0, 1.0, 32, {1, 0}, SingularSet::none);
  CHECK_THROWS_AS(solve_positive_solution(make_spec(d, PotentialSpec::constant(-4.0 * kPi * kPi))), std::runtime_error);
}

TEST_CASE("solve_positive_solution: analytic cylinder branch") {
  // −Δv − (1/4)|y|^{-2} v at interior nodes for v = |y|^{-1/2}, m = 3 (y = x).
  auto residual = [](int res) {
    auto d = build_cube(3, -1.0, 1.0, res, {0, 3}, SingularSet::point_origin);
    auto spec = make_spec(d, PotentialSpec::hardy_point(0.25));
    const auto v = solve_positive_solution(spec);
    for (double x : v.values()) REQUIRE(x > 0.0);
    const auto& g = *d;
    double worst = 0.0;
    std::vector<double> x(3);
    const double h = g.spacing()[0];
    for (std::size_t i = 0; i < v.size(); ++i) {
      g.coordinates(g.grid_index(i), x);
      const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
      if (r < 0.5 || std::abs(x[0]) > 0.8 || std::abs(x[1]) > 0.8 || std::abs(x[2]) > 0.8) continue;
      double lap = 0.0;
      for (int k = 0; k < 3; ++k) {
        const auto a = g.neighbor(i, k, 0);
        const auto b = g.neighbor(i, k, 1);
        lap += (v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)] - 2.0 * v[i]) / (h * h);
      }
      worst = std::max(worst, std::abs(-lap - 0.25 * v[i] / (r * r)));
    }
    return worst;
  };
  const double r1 = residual(16);
  const double r2 = residual(32);
  CHECK(r2 < r1);
  CHECK(r2 < 0.5 * r1);

  auto d = build_cube(3, -1.0, 1.0, 6, {2, 1}, SingularSet::cylinder_y0);
  const auto v = solve_positive_solution(make_spec(d, PotentialSpec::hardy_cylinder(1, 0.25)));
  std::vector<double> x(3);
  d->coordinates(d->grid_index(0), x);
  CHECK(v[0] == doctest::Approx(std::pow(std::abs(x[2]), 0.5)));
  CHECK(v.has_exact_gradient());
}

TEST_CASE("solve_positive_solution: point ground state for p = 3") {
  auto d = build_cube(4, -1.0, 1.0, 4, {0, 4}, SingularSet::point_origin);
  const auto v = solve_positive_solution(make_spec(d, PotentialSpec::hardy_point(hardy_constant(4, 3.0)), 3.0));
  std::vector<double> x(4);
  d->coordinates(d->grid_index(5), x);
  double r2 = 0.0;
  for (double t : x) r2 += t * t;
  CHECK(v[5] == doctest::Approx(std::pow(std::sqrt(r2), -1.0 / 3.0)));
}

TEST_CASE("verify_ckn_equivalence") {
  SUBCASE("u = 0 on a cylinder") {
    auto d = build_cube(3, -1.0, 1.0, 8, {0, 3}, SingularSet::cylinder_y0);
    const auto c = verify_ckn_equivalence(make_spec(d, PotentialSpec::hardy_cylinder(3, 0.25)), ScalarField::zeros(d));
    CHECK(c.lhs == 0.0);
    CHECK(c.rhs == 0.0);
    CHECK(c.gap == 0.0);
  }
  SUBCASE("m = 2 is the identity") {
    auto d = build_cube(3, -1.0, 1.0, 16, {1, 2}, SingularSet::cylinder_y0);
    auto u = bump(d, {0.1, 0.5, 0.4}, 0.3);
    auto spec = make_spec(d, PotentialSpec::hardy_cylinder(2, 0.0));
    auto c = verify_ckn_equivalence(spec, u);
    CHECK(c.gap <= 1e-12 * c.lhs);
    u.drop_exact_gradient();
    c = verify_ckn_equivalence(spec, u);
    CHECK(c.gap <= 1e-12 * c.lhs);
  }
  SUBCASE("m = 3 bump converges") {
    std::vector<double> rel;
    for (int res : {32, 64}) {
      auto d = build_cube(3, -1.0, 1.0, res, {0, 3}, SingularSet::cylinder_y0);
      auto u = bump(d, {0.4, 0.3, -0.2}, 0.3);
      u.drop_exact_gradient();
      const auto c = verify_ckn_equivalence(make_spec(d, PotentialSpec::hardy_cylinder(3, 0.25)), u);
      rel.push_back(c.gap / c.lhs);
    }
    CHECK(rel[0] < 0.05);
    CHECK(rel[1] < rel[0]);
  }
  SUBCASE("support near K is rejected") {
    auto d = build_cube(3, -1.0, 1.0, 16, {0, 3}, SingularSet::cylinder_y0);
    const auto u = bump(d, {0.1, 0.0, 0.0}, 0.4);
    CHECK_THROWS_AS(verify_ckn_equivalence(make_spec(d, PotentialSpec::hardy_cylinder(3, 0.25)), u),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_ckn_equivalence(make_spec(d, PotentialSpec::hardy_cylinder(3, 0.2)), ScalarField::zeros(d)),
                    std::invalid_argument);
  }
}

TEST_CASE("solve_positive_solution: V = 0 gives the constant for any p") {
  auto d = build_cube(3, -1.0, 1.0, 6, {0, 3}, SingularSet::none);
  auto spec = make_spec(d);
  spec.p = 3.0;
  const auto v = solve_positive_solution(spec);
  REQUIRE(v.has_exact_gradient());
  for (double x : v.values()) CHECK(x == 1.0);
  for (double g : v.exact_gradient()) CHECK(g == 0.0);
  spec.potential = PotentialSpec::constant(1.0);
  CHECK_THROWS_AS(solve_positive_solution(spec), std::invalid_argument);
}
