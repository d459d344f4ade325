#include "hsmlab/quotient.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hsmlab/operators.hpp"
#include "hsmlab/parallel.hpp"

namespace hsmlab {

namespace {

using Vec = std::vector<double>;

double pow_abs(double x, double e) {
  const double a = std::abs(x);
  if (a == 0.0) return 0.0;
  return e == 2.0 ? a * a : std::pow(a, e);
}

double weighted_power_sum(std::span<const double> u, std::span<const double> w, double e) {
  return parallel::sum(u.size(), [&](std::size_t b, std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = b; i < end; ++i)
      if (u[i] != 0.0) acc += (w.empty() ? 1.0 : w[i]) * pow_abs(u[i], e);
    return acc;
  });
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale(double a, std::span<double> x) {
  for (double& v : x) v *= a;
}

struct Parts {
  double numerator = 0.0;
  double denominator = 0.0;
};

Parts evaluate_parts(const QuotientProblem& pr, std::span<const double> u) {
  const GridDomain& g = *pr.domain;
  const double vol = g.cell_volume();
  Parts parts;
  parts.numerator = ops::gradient_energy(g, u, pr.p);
  if (!pr.potential.empty()) parts.numerator += vol * weighted_power_sum(u, pr.potential, pr.p);
  if (!pr.psi.empty() && pr.poincare_constant != 0.0)
    parts.numerator += pr.poincare_constant * pow_abs(vol * ops::dot(pr.psi, u), pr.p);
  parts.denominator = vol * weighted_power_sum(u, pr.weight, pr.q);
  return parts;
}

double ratio(const QuotientProblem& pr, const Parts& parts) {
  if (!(parts.denominator > 0.0)) return std::numeric_limits<double>::infinity();
  return parts.numerator / std::pow(parts.denominator, pr.p / pr.q);
}

// Gradients of numerator and denominator.
void evaluate_gradients(const QuotientProblem& pr, std::span<const double> u, std::span<double> gn,
                        std::span<double> gd) {
  const GridDomain& g = *pr.domain;
  const double vol = g.cell_volume();
  const double p = pr.p;
  const double q = pr.q;
  ops::gradient_energy_derivative(g, u, p, gn);
  const std::size_t n = u.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(u[i]);
    const double sgn_pow_p = a == 0.0 ? 0.0 : (p == 2.0 ? u[i] : std::pow(a, p - 1.0) * (u[i] > 0 ? 1.0 : -1.0));
    const double sgn_pow_q = a == 0.0 ? 0.0 : (q == 2.0 ? u[i] : std::pow(a, q - 1.0) * (u[i] > 0 ? 1.0 : -1.0));
    if (!pr.potential.empty()) gn[i] += p * vol * pr.potential[i] * sgn_pow_p;
    gd[i] = q * vol * (pr.weight.empty() ? 1.0 : pr.weight[i]) * sgn_pow_q;
  }
  if (!pr.psi.empty() && pr.poincare_constant != 0.0) {
    const double s = vol * ops::dot(pr.psi, u);
    const double a = std::abs(s);
    if (a > 0.0) {
      const double f = pr.poincare_constant * p * std::pow(a, p - 1.0) * (s > 0 ? 1.0 : -1.0) * vol;
      axpy(f, pr.psi, gn);
    }
  }
}

// Stationarity of R at u: |∇N - (p/q)(N/D)∇D| / |(p/q)(N/D)∇D|.
double stationarity(const QuotientProblem& pr, std::span<const double> u) {
  Vec gn(u.size()), gd(u.size());
  evaluate_gradients(pr, u, gn, gd);
  const Parts parts = evaluate_parts(pr, u);
  const double f = pr.p / pr.q * parts.numerator / parts.denominator;
  Vec r(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) r[i] = gn[i] - f * gd[i];
  Vec fd(gd);
  scale(f, fd);
  const double den = ops::norm2(fd);
  return den > 0.0 ? ops::norm2(r) / den : ops::norm2(r);
}

bool normalize_denominator(const QuotientProblem& pr, std::span<double> u) {
  const double d = pr.domain->cell_volume() * weighted_power_sum(u, pr.weight, pr.q);
  if (!(d > 0.0) || !std::isfinite(d)) return false;
  scale(std::pow(d, -1.0 / pr.q), u);
  return true;
}

// Rolling window test: relative change over `window` iterations below tol.
class StallDetector {
 public:
  StallDetector(int window, double tol) : window_(window), tol_(tol) {}
  bool push(double value) {
    history_.push_back(value);
    if (static_cast<int>(history_.size()) > window_ + 1) history_.pop_front();
    if (static_cast<int>(history_.size()) <= window_) return false;
    const double old = history_.front();
    return std::abs(old - value) <= tol_ * std::max(std::abs(value), 1e-300);
  }

 private:
  int window_;
  double tol_;
  std::deque<double> history_;
};

// p = 2 quadratic form x -> vol * x.(A x) with A per unit volume.
ops::LinearMap quadratic_operator(const QuotientProblem& pr) {
  const GridDomain& g = *pr.domain;
  return [&pr, &g](std::span<const double> x, std::span<double> y) {
    ops::apply_operator(g, pr.potential, x, y);
    if (!pr.psi.empty() && pr.poincare_constant != 0.0) {
      const double f = pr.poincare_constant * g.cell_volume() * ops::dot(pr.psi, x);
      axpy(f, pr.psi, y);
    }
  };
}

Vec quadratic_diagonal(const QuotientProblem& pr) {
  Vec d = ops::operator_diagonal(*pr.domain, pr.potential);
  if (!pr.psi.empty() && pr.poincare_constant != 0.0)
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] += pr.poincare_constant * pr.domain->cell_volume() * pr.psi[i] * pr.psi[i];
  return d;
}

Vec inverse(const Vec& d) {
  Vec out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] > 0.0 ? 1.0 / d[i] : 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Single-vector block Rayleigh-Ritz iteration for min x.Ax / x.Bx, B = diag(mass).

struct PencilSetup {
  ops::LinearMap a;
  std::span<const double> mass;  // empty: identity
  bool mass_definite = true;     // pick the (A, B) Ritz problem; else (B, A) with A SPD
  std::function<void(std::span<const double>, std::span<double>)> precondition;
  double residual_scale = 1.0;
  double residual_tol = 0.0;  // 0 disables the residual test
  double value_tol = 0.0;     // 0 disables the stall test
  int window = 10;
  int max_iterations = 1000;
};

struct PencilResult {
  double value = 0.0;
  Vec vector;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

void apply_mass(std::span<const double> mass, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = mass.empty() ? x[i] : mass[i] * x[i];
}

PencilResult pencil_iteration(const PencilSetup& s, Vec x) {
  const std::size_t n = x.size();
  PencilResult res;
  Vec ax(n), bx(n), r(n), w(n), pdir;
  StallDetector stall(s.window, s.value_tol);
  const double xn = ops::norm2(x);
  if (!(xn > 0.0)) throw std::invalid_argument("zero start vector");
  scale(1.0 / xn, x);

  for (int it = 0; it < s.max_iterations; ++it) {
    s.a(x, ax);
    apply_mass(s.mass, x, bx);
    const double xax = ops::dot(x, ax);
    const double xbx = ops::dot(x, bx);
    const double mu = xax / xbx;
    for (std::size_t i = 0; i < n; ++i) r[i] = ax[i] - mu * bx[i];
    res.value = mu;
    res.iterations = it;
    res.residual = ops::norm2(r) / (s.residual_scale * ops::norm2(x));
    if (s.residual_tol > 0.0 && res.residual <= s.residual_tol) {
      res.converged = true;
      break;
    }
    if (s.value_tol > 0.0 && stall.push(mu)) {
      res.converged = true;
      break;
    }
    std::fill(w.begin(), w.end(), 0.0);
    s.precondition(r, w);

    // Euclidean modified Gram-Schmidt on [x, w, p]; x stays first.
    std::vector<Vec> basis;
    basis.push_back(x);
    for (Vec* cand : {&w, pdir.empty() ? nullptr : &pdir}) {
      if (!cand) continue;
      Vec v = *cand;
      const double before = ops::norm2(v);
      if (!(before > 0.0)) continue;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) axpy(-ops::dot(b, v) / ops::dot(b, b), b, v);
      const double after = ops::norm2(v);
      if (after > 1e-10 * before) {
        scale(1.0 / after, v);
        basis.push_back(std::move(v));
      }
    }
    const auto k = static_cast<int>(basis.size());
    if (k == 1) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd ga(k, k), gb(k, k);
    std::vector<Vec> abasis(static_cast<std::size_t>(k), Vec(n)), bbasis(static_cast<std::size_t>(k), Vec(n));
    for (int i = 0; i < k; ++i) {
      s.a(basis[static_cast<std::size_t>(i)], abasis[static_cast<std::size_t>(i)]);
      apply_mass(s.mass, basis[static_cast<std::size_t>(i)], bbasis[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) {
        ga(i, j) = ga(j, i) = ops::dot(basis[static_cast<std::size_t>(i)], abasis[static_cast<std::size_t>(j)]);
        gb(i, j) = gb(j, i) = ops::dot(basis[static_cast<std::size_t>(i)], bbasis[static_cast<std::size_t>(j)]);
      }
    Eigen::VectorXd c;
    if (s.mass_definite) {
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(ga, gb);
      if (es.info() != Eigen::Success) break;
      c = es.eigenvectors().col(0);
    } else {
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(gb, ga);
      if (es.info() != Eigen::Success) break;
      c = es.eigenvectors().col(k - 1);
    }
    Vec xn2(n, 0.0), pn(n, 0.0);
    for (int i = 0; i < k; ++i) axpy(c(i), basis[static_cast<std::size_t>(i)], xn2);
    for (int i = 1; i < k; ++i) axpy(c(i), basis[static_cast<std::size_t>(i)], pn);
    const double nrm = ops::norm2(xn2);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) break;
    scale(1.0 / nrm, xn2);
    scale(1.0 / nrm, pn);
    x = std::move(xn2);
    pdir = std::move(pn);
    res.iterations = it + 1;
  }
  normalize_sign(x);
  res.vector = std::move(x);
  return res;
}

// ---------------------------------------------------------------------------
// Start fields

Vec random_start(const QuotientProblem& pr, std::uint64_t seed, std::uint64_t stream) {
  UniformStream rng(seed, stream);
  Vec u(pr.domain->active_count());
  for (auto& v : u) v = rng.next();
  return u;
}

// ---------------------------------------------------------------------------
// Local solvers

MinimizationResult finish(const QuotientProblem& pr, Vec u, int iterations, bool converged, const char* method) {
  MinimizationResult out;
  normalize_sign(u);
  normalize_denominator(pr, u);
  out.quotient_value = quotient_value(pr, u);
  out.residual = stationarity(pr, u);
  out.iterations = iterations;
  out.converged = converged;
  out.method = method;
  out.minimizer = ScalarField(pr.domain, std::move(u));
  return out;
}

MinimizationResult rayleigh_ritz_path(const QuotientProblem& pr, Vec start, const SolverOptions& opt) {
  const auto a = quadratic_operator(pr);
  const Vec inv_diag = inverse(quadratic_diagonal(pr));
  PencilSetup s;
  s.a = a;
  s.mass = pr.weight;
  s.mass_definite = std::all_of(pr.weight.begin(), pr.weight.end(), [](double w) { return w > 0.0; });
  s.precondition = [&](std::span<const double> r, std::span<double> z) {
    ops::conjugate_gradient(a, r, z, inv_diag, 1e-3, 200);
  };
  s.value_tol = opt.tol;
  s.window = opt.window;
  s.max_iterations = opt.max_iterations;
  auto res = pencil_iteration(s, std::move(start));
  return finish(pr, std::move(res.vector), res.iterations, res.converged, "rayleigh-ritz");
}

MinimizationResult inverse_iteration_path(const QuotientProblem& pr, Vec u, const SolverOptions& opt) {
  const auto a = quadratic_operator(pr);
  const Vec inv_diag = inverse(quadratic_diagonal(pr));
  const std::size_t n = u.size();
  for (auto& v : u) v = std::abs(v);
  if (!normalize_denominator(pr, u)) throw std::runtime_error("start field has zero denominator");
  StallDetector stall(opt.window, opt.tol);
  Vec rhs(n), v(n), best = u;
  double best_value = quotient_value(pr, u);
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const double w = pr.weight.empty() ? 1.0 : pr.weight[i];
      rhs[i] = w * (pr.q == 2.0 ? u[i] : std::pow(std::abs(u[i]), pr.q - 1.0) * (u[i] < 0 ? -1.0 : 1.0));
    }
    // Warm start: at a fixed point A u = mu rhs.
    Vec au(n);
    a(u, au);
    const double mu = ops::dot(u, au) / ops::dot(u, rhs);
    for (std::size_t i = 0; i < n; ++i) v[i] = u[i] / mu;
    const auto cg = ops::conjugate_gradient(a, rhs, v, inv_diag, 1e-8, 4000);
    if (!cg.converged && cg.residual > 1e-4) break;  // operator not positive definite
    if (!normalize_denominator(pr, v)) break;
    u.swap(v);
    const double val = quotient_value(pr, u);
    if (!std::isfinite(val)) break;
    if (val < best_value) {
      best_value = val;
      best = u;
    }
    if (stall.push(val)) {
      converged = true;
      ++it;
      break;
    }
  }
  return finish(pr, std::move(best), it, converged, "inverse-iteration");
}

MinimizationResult descent_path(const QuotientProblem& pr, Vec u, const SolverOptions& opt) {
  const GridDomain& g = *pr.domain;
  const std::size_t n = u.size();
  const bool project = pr.psi.empty() || pr.poincare_constant == 0.0;
  if (project)
    for (auto& v : u) v = std::abs(v);
  if (!normalize_denominator(pr, u)) throw std::runtime_error("start field has zero denominator");

  // Sobolev preconditioner: (-Lap_h) z = g.
  const Vec lap_inv_diag = inverse(ops::operator_diagonal(g, {}));
  const ops::LinearMap lap = [&g](std::span<const double> x, std::span<double> y) { ops::apply_operator(g, {}, x, y); };

  Vec gn(n), gd(n), grad(n), z(n), z_old, grad_old, dir(n), trial(n);
  StallDetector stall(opt.window, opt.tol);
  Parts parts = evaluate_parts(pr, u);
  double value = ratio(pr, parts);
  double step = 0.0;
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    evaluate_gradients(pr, u, gn, gd);
    const double f = pr.p / pr.q * parts.numerator / parts.denominator;
    const double dscale = std::pow(parts.denominator, -pr.p / pr.q);
    for (std::size_t i = 0; i < n; ++i) grad[i] = (gn[i] - f * gd[i]) * dscale;
    std::fill(z.begin(), z.end(), 0.0);
    ops::conjugate_gradient(lap, grad, z, lap_inv_diag, 1e-2, 60);

    double beta = 0.0;
    if (!z_old.empty()) {
      const double den = ops::dot(grad_old, z_old);
      if (den > 0.0) beta = std::max(0.0, (ops::dot(grad, z) - ops::dot(grad, z_old)) / den);
    }
    for (std::size_t i = 0; i < n; ++i) dir[i] = -z[i] + beta * dir[i];
    double slope = ops::dot(grad, dir);
    if (!(slope < 0.0)) {
      for (std::size_t i = 0; i < n; ++i) dir[i] = -z[i];
      slope = ops::dot(grad, dir);
    }
    if (!(slope < 0.0)) {
      converged = true;
      break;
    }
    const double unorm = ops::norm2(u);
    const double dnorm = ops::norm2(dir);
    double t = step > 0.0 ? 2.0 * step : 0.1 * unorm / dnorm;
    t = std::min(t, unorm / dnorm);
    bool accepted = false;
    Parts trial_parts;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + t * dir[i];
      if (project)
        for (auto& v : trial) v = std::abs(v);
      trial_parts = evaluate_parts(pr, trial);
      const double tv = ratio(pr, trial_parts);
      if (std::isfinite(tv) && tv <= value + 1e-4 * t * slope) {
        accepted = true;
        value = tv;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (beta > 0.0) {  // retry along the plain preconditioned gradient
        z_old.clear();
        std::fill(dir.begin(), dir.end(), 0.0);
        continue;
      }
      converged = true;
      break;
    }
    step = t;
    u.swap(trial);
    normalize_denominator(pr, u);
    parts = evaluate_parts(pr, u);
    value = ratio(pr, parts);
    grad_old = grad;
    z_old = z;
    if (stall.push(value)) {
      converged = true;
      ++it;
      break;
    }
  }
  return finish(pr, std::move(u), it, converged, "descent");
}

MinimizationResult local_minimize(const QuotientProblem& pr, Vec start, const SolverOptions& opt) {
  if (pr.p == 2.0) {
    if (pr.q == 2.0) return rayleigh_ritz_path(pr, std::move(start), opt);
    auto res = inverse_iteration_path(pr, start, opt);
    if (res.iterations > 0) return res;
    // The first solve failed: the quadratic form is not positive definite.
  }
  return descent_path(pr, std::move(start), opt);
}

}  // namespace

// ---------------------------------------------------------------------------

UniformStream::UniformStream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

std::uint64_t UniformStream::next_u64() { return engine_(); }

double UniformStream::next() {
  // 53 random bits mapped to (0, 1].
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

void normalize_sign(std::span<double> v) {
  std::size_t best = 0;
  double mag = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > mag) {
      mag = std::abs(v[i]);
      best = i;
    }
  }
  if (!v.empty() && v[best] < 0.0)
    for (double& x : v) x = -x;
}

double quotient_value(const QuotientProblem& problem, std::span<const double> u) {
  return ratio(problem, evaluate_parts(problem, u));
}

MinimizationResult minimize_quotient(const QuotientProblem& problem, const SolverOptions& options,
                                     const std::optional<std::vector<double>>& bubble_start) {
  if (!problem.domain) throw std::invalid_argument("quotient problem has no domain");
  const std::size_t n = problem.domain->active_count();
  if (problem.weight.size() != n) throw std::invalid_argument("weight length does not match the grid");
  if (!problem.potential.empty() && problem.potential.size() != n)
    throw std::invalid_argument("potential length does not match the grid");
  if (!problem.psi.empty() && problem.psi.size() != n) throw std::invalid_argument("psi length does not match the grid");
  if (options.restarts < 1) throw std::invalid_argument("need at least one restart");
  for (double w : problem.weight)
    if (w < 0.0) throw std::invalid_argument("negative denominator weight");

  const auto restarts = static_cast<std::size_t>(options.restarts);
  std::vector<std::optional<MinimizationResult>> results(restarts);
  std::vector<std::string> errors(restarts);
  parallel::run_tasks(restarts, [&](std::size_t r) {
    try {
      Vec start = (r == 0 && bubble_start) ? *bubble_start : random_start(problem, options.seed, r);
      if (start.size() != n) throw std::invalid_argument("start field has the wrong length");
      auto res = local_minimize(problem, std::move(start), options);
      if (std::isfinite(res.quotient_value)) results[r] = std::move(res);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });

  std::optional<std::size_t> best;
  std::vector<double> values(restarts, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < restarts; ++r) {
    if (!results[r]) continue;
    values[r] = results[r]->quotient_value;
    if (!best || results[r]->quotient_value < results[*best]->quotient_value) best = r;
  }
  if (!best) {
    std::string msg = "all restarts failed";
    if (!errors[0].empty()) msg += ": " + errors[0];
    throw std::runtime_error(msg);
  }
  MinimizationResult out = std::move(*results[*best]);
  out.restarts_used = options.restarts;
  out.best_restart = static_cast<int>(*best);
  out.restart_values = std::move(values);
  return out;
}

MinimizationResult minimize_quotient_descent(const QuotientProblem& problem, std::vector<double> start,
                                             const SolverOptions& options) {
  auto res = descent_path(problem, std::move(start), options);
  res.restarts_used = 1;
  res.restart_values = {res.quotient_value};
  return res;
}

EigenResult smallest_eigenpair(const GridDomain& g, std::span<const double> potential, const EigenOptions& options,
                               std::optional<std::vector<double>> start) {
  const std::size_t n = g.active_count();
  if (!potential.empty() && potential.size() != n) throw std::invalid_argument("potential length mismatch");
  const Vec diag = ops::operator_diagonal(g, potential);
  // Gershgorin: A - sigma I is positive definite for sigma below min(potential).
  double vmin = 0.0;
  for (double v : potential) vmin = std::min(vmin, v);
  const double sigma = vmin - 1.0;
  double dmax = 0.0;
  for (double v : diag) dmax = std::max(dmax, std::abs(v));

  const ops::LinearMap a = [&](std::span<const double> x, std::span<double> y) {
    ops::apply_operator(g, potential, x, y);
  };
  const ops::LinearMap shifted = [&](std::span<const double> x, std::span<double> y) {
    ops::apply_operator(g, potential, x, y);
    axpy(-sigma, x, y);
  };
  Vec inv_diag(n);
  for (std::size_t i = 0; i < n; ++i) inv_diag[i] = 1.0 / (diag[i] - sigma);

  PencilSetup s;
  s.a = a;
  s.mass_definite = true;
  s.precondition = [&](std::span<const double> r, std::span<double> z) {
    ops::conjugate_gradient(shifted, r, z, inv_diag, options.inner_tol, options.inner_max_iterations);
  };
  s.residual_scale = std::max(dmax, 1e-300);
  s.residual_tol = options.tol;
  s.max_iterations = options.max_iterations;

  Vec x0;
  if (start && start->size() == n) {
    x0 = *start;
  } else {
    // Smooth positive start: product of sines across the box.
    x0.resize(n);
    std::vector<double> x(static_cast<std::size_t>(g.dim()));
    for (std::size_t i = 0; i < n; ++i) {
      g.coordinates(g.grid_index(i), x);
      double v = 1.0;
      for (int k = 0; k < g.dim(); ++k) {
        const auto& e = g.extents()[static_cast<std::size_t>(k)];
        v *= std::sin(std::numbers::pi * (x[static_cast<std::size_t>(k)] - e.lo) / (e.hi - e.lo));
      }
      x0[i] = v;
    }
  }
  auto res = pencil_iteration(s, std::move(x0));
  EigenResult out;
  out.value = res.value;
  out.vector = std::move(res.vector);
  out.iterations = res.iterations;
  out.residual = res.residual;
  out.converged = res.converged;
  return out;
}

}  // namespace hsmlab
