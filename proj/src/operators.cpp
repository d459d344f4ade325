#include "hsmlab/operators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hsmlab/parallel.hpp"

namespace hsmlab::ops {

namespace {

// One-sided differences around center c: d[2k] = D_{k,-}, d[2k+1] = D_{k,+}.
// mirror[2k+dir] is 2 for a ghost neighbor, else 1 (chain-rule factor).
inline void center_differences(const GridDomain& g, std::span<const double> u, std::size_t c, double* d,
                               double* mirror) {
  const std::size_t na = u.size();
  const int dim = g.dim();
  const double uc = c < na ? u[c] : 0.0;
  const auto& h = g.spacing();
  for (int k = 0; k < dim; ++k) {
    const double inv_h = 1.0 / h[static_cast<std::size_t>(k)];
    for (int dir = 0; dir < 2; ++dir) {
      const std::int32_t code = g.neighbor(c, k, dir);
      double un = 0.0;
      double f = 1.0;
      if (code == GridDomain::kMirror) {
        un = -uc;
        f = 2.0;
      } else if (code >= 0 && static_cast<std::size_t>(code) < na) {
        un = u[static_cast<std::size_t>(code)];
      }
      d[2 * k + dir] = dir == 0 ? (uc - un) * inv_h : (un - uc) * inv_h;
      mirror[2 * k + dir] = f;
    }
  }
}

constexpr int kMaxDim = 8;

void check_dim(const GridDomain& g) {
  if (g.dim() > kMaxDim) throw std::invalid_argument("energy kernels support at most 8 dimensions");
}

}  // namespace

double gradient_energy(const GridDomain& g, std::span<const double> u, double p) {
  check_dim(g);
  if (u.size() != g.active_count()) throw std::invalid_argument("field/domain mismatch");
  const int dim = g.dim();
  const std::size_t patterns = std::size_t{1} << dim;
  const double half_p = 0.5 * p;
  const bool quadratic = p == 2.0;
  const double s = parallel::sum(g.center_count(), [&](std::size_t b, std::size_t e) {
    double d[2 * kMaxDim], mf[2 * kMaxDim];
    double acc = 0.0;
    for (std::size_t c = b; c < e; ++c) {
      center_differences(g, u, c, d, mf);
      if (quadratic) {
        double t = 0.0;
        for (int k = 0; k < 2 * dim; ++k) t += d[k] * d[k];
        acc += 0.5 * t;
        continue;
      }
      double t = 0.0;
      for (std::size_t pat = 0; pat < patterns; ++pat) {
        double sq = 0.0;
        for (int k = 0; k < dim; ++k) {
          const double v = d[2 * k + static_cast<int>((pat >> k) & 1U)];
          sq += v * v;
        }
        if (sq > 0.0) t += std::pow(sq, half_p);
      }
      acc += t / static_cast<double>(patterns);
    }
    return acc;
  });
  return s * g.cell_volume();
}

double weighted_quadratic_energy(const GridDomain& g, std::span<const double> u, std::span<const double> center_weight) {
  check_dim(g);
  if (u.size() != g.active_count() || center_weight.size() != g.center_count())
    throw std::invalid_argument("field/domain mismatch");
  const int dim = g.dim();
  const double s = parallel::sum(g.center_count(), [&](std::size_t b, std::size_t e) {
    double d[2 * kMaxDim], mf[2 * kMaxDim];
    double acc = 0.0;
    for (std::size_t c = b; c < e; ++c) {
      center_differences(g, u, c, d, mf);
      double t = 0.0;
      for (int k = 0; k < 2 * dim; ++k) t += d[k] * d[k];
      if (t > 0.0) acc += 0.5 * center_weight[c] * t;
    }
    return acc;
  });
  return s * g.cell_volume();
}

void gradient_energy_derivative(const GridDomain& g, std::span<const double> u, double p, std::span<double> out) {
  check_dim(g);
  if (u.size() != g.active_count() || out.size() != u.size())
    throw std::invalid_argument("field/domain mismatch");
  const int dim = g.dim();
  const auto nd = static_cast<std::size_t>(2 * dim);
  const std::size_t patterns = std::size_t{1} << dim;
  const double vol = g.cell_volume();
  const bool quadratic = p == 2.0;

  // flux[c*2N + 2k + dir] = dE/dD_{k,dir}(c)
  std::vector<double> flux(g.center_count() * nd);
  parallel::for_chunks(g.center_count(), [&](std::size_t b, std::size_t e, std::size_t) {
    double d[2 * kMaxDim], mf[2 * kMaxDim];
    for (std::size_t c = b; c < e; ++c) {
      center_differences(g, u, c, d, mf);
      double* f = flux.data() + c * nd;
      if (quadratic) {
        for (std::size_t k = 0; k < nd; ++k) f[k] = vol * d[k];
        continue;
      }
      for (std::size_t k = 0; k < nd; ++k) f[k] = 0.0;
      for (std::size_t pat = 0; pat < patterns; ++pat) {
        double sq = 0.0;
        for (int k = 0; k < dim; ++k) {
          const double v = d[2 * k + static_cast<int>((pat >> k) & 1U)];
          sq += v * v;
        }
        if (sq <= 0.0) continue;
        const double scale = p * std::pow(sq, 0.5 * p - 1.0);
        for (int k = 0; k < dim; ++k) {
          const int idx = 2 * k + static_cast<int>((pat >> k) & 1U);
          f[idx] += scale * d[idx];
        }
      }
      const double w = vol / static_cast<double>(patterns);
      for (std::size_t k = 0; k < nd; ++k) f[k] *= w;
    }
  });

  const auto& h = g.spacing();
  parallel::for_chunks(u.size(), [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t j = b; j < e; ++j) {
      double acc = 0.0;
      const double* fj = flux.data() + j * nd;
      for (int k = 0; k < dim; ++k) {
        const double inv_h = 1.0 / h[static_cast<std::size_t>(k)];
        const std::int32_t lo = g.neighbor(j, k, 0);
        const std::int32_t hi = g.neighbor(j, k, 1);
        const double ml = lo == GridDomain::kMirror ? 2.0 : 1.0;
        const double mh = hi == GridDomain::kMirror ? 2.0 : 1.0;
        acc += fj[2 * k] * ml * inv_h - fj[2 * k + 1] * mh * inv_h;
        if (hi >= 0) acc -= flux[static_cast<std::size_t>(hi) * nd + static_cast<std::size_t>(2 * k)] * inv_h;
        if (lo >= 0) acc += flux[static_cast<std::size_t>(lo) * nd + static_cast<std::size_t>(2 * k + 1)] * inv_h;
      }
      out[j] = acc;
    }
  });
}

void apply_operator(const GridDomain& g, std::span<const double> potential, std::span<const double> x,
                    std::span<double> y) {
  const std::size_t na = g.active_count();
  const int dim = g.dim();
  const auto& h = g.spacing();
  double inv_h2[kMaxDim];
  check_dim(g);
  for (int k = 0; k < dim; ++k) inv_h2[k] = 1.0 / (h[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(k)]);
  parallel::for_chunks(na, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t j = b; j < e; ++j) {
      const double xj = x[j];
      double acc = potential.empty() ? 0.0 : potential[j] * xj;
      for (int k = 0; k < dim; ++k) {
        for (int dir = 0; dir < 2; ++dir) {
          const std::int32_t code = g.neighbor(j, k, dir);
          double xn = 0.0;
          if (code == GridDomain::kMirror)
            xn = -xj;
          else if (code >= 0 && static_cast<std::size_t>(code) < na)
            xn = x[static_cast<std::size_t>(code)];
          acc += (xj - xn) * inv_h2[k];
        }
      }
      y[j] = acc;
    }
  });
}

std::vector<double> operator_diagonal(const GridDomain& g, std::span<const double> potential) {
  const std::size_t na = g.active_count();
  std::vector<double> diag(na);
  const int dim = g.dim();
  const auto& h = g.spacing();
  for (std::size_t j = 0; j < na; ++j) {
    double acc = potential.empty() ? 0.0 : potential[j];
    for (int k = 0; k < dim; ++k) {
      const double ih2 = 1.0 / (h[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(k)]);
      for (int dir = 0; dir < 2; ++dir) acc += (g.neighbor(j, k, dir) == GridDomain::kMirror ? 2.0 : 1.0) * ih2;
    }
    diag[j] = acc;
  }
  return diag;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return parallel::sum(a.size(), [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += a[i] * b[i];
    return acc;
  });
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

CgResult conjugate_gradient(const LinearMap& a, std::span<const double> b, std::span<double> x,
                            std::span<const double> inv_diag, double rel_tol, int max_iterations) {
  const std::size_t n = b.size();
  CgResult result;
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    result.converged = true;
    return result;
  }
  std::vector<double> r(n), z(n), p(n), ap(n);
  a(x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  auto precondition = [&] {
    if (inv_diag.empty())
      std::copy(r.begin(), r.end(), z.begin());
    else
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  };
  precondition();
  p = z;
  double rz = dot(r, z);
  double rnorm = norm2(r);
  for (int it = 0; it < max_iterations; ++it) {
    if (rnorm <= rel_tol * bnorm) {
      result.converged = true;
      break;
    }
    a(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;  // not SPD along p
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    precondition();
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    rnorm = norm2(r);
    result.iterations = it + 1;
  }
  if (rnorm <= rel_tol * bnorm) result.converged = true;
  result.residual = rnorm / bnorm;
  return result;
}

}  // namespace hsmlab::ops
