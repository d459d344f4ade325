#include "hsmlab/picone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>

#include "hsmlab/parallel.hpp"
#include "hsmlab/quotient.hpp"

namespace hsmlab {

namespace {

constexpr std::size_t kSampleChunk = 4096;
constexpr double kSlack = 1e-12;

double sq_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return s;
}

void append_vector(std::string& out, const char* name, const std::vector<double>& v) {
  out += name;
  out += "=(";
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += ",";
    out += buf;
  }
  out += ")";
}

// (1+x)^{p/2} - 1 - (p/2) x by its binomial series, |x| < 0.1.
double bregman_core(double x, double p) {
  const double e = 0.5 * p;
  double c = e * (e - 1.0) / 2.0;
  double xk = x * x;
  double sum = 0.0;
  for (int k = 2; k < 60; ++k) {
    const double term = c * xk;
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    c *= (e - k) / (k + 1);
    xk *= x;
  }
  return sum;
}

void check_gradients(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("gradient dimensions differ");
}

}  // namespace

void PointSample::validate() const {
  if (!(v > 0.0)) throw std::invalid_argument("PointSample needs v > 0");
  if (!(w0 >= 0.0) || !(w1 >= 0.0)) throw std::invalid_argument("PointSample needs w0, w1 >= 0");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("PointSample needs t in [0, 1]");
  if (!(p >= 2.0)) throw std::invalid_argument("PointSample needs p >= 2");
  if (grad_v.size() != grad_w0.size() || grad_v.size() != grad_w1.size())
    throw std::invalid_argument("PointSample gradients have different lengths");
}

std::string PointSample::describe() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "p=%.17g v=%.17g w0=%.17g w1=%.17g t=%.17g ", p, v, w0, w1, t);
  std::string out = buf;
  append_vector(out, "grad_v", grad_v);
  out += " ";
  append_vector(out, "grad_w0", grad_w0);
  out += " ";
  append_vector(out, "grad_w1", grad_w1);
  return out;
}

double lagrangian_L(std::span<const double> grad_v, double v, double w, std::span<const double> grad_w, double p) {
  check_gradients(grad_v, grad_w);
  double a2 = 0.0, b2 = 0.0, ab = 0.0, s2 = 0.0;
  for (std::size_t k = 0; k < grad_v.size(); ++k) {
    const double a = w * grad_v[k];
    const double b = v * grad_w[k];
    a2 += a * a;
    b2 += b * b;
    ab += a * b;
    s2 += (a + b) * (a + b);
  }
  if (a2 == 0.0) return std::pow(b2, 0.5 * p);
  if (p == 2.0) return b2;
  // With x = (2 a.b + |b|^2) / |a|^2,
  //   L = |a|^p [(1+x)^{p/2} - 1 - (p/2)x] + (p/2) |a|^{p-2} |b|^2,
  // expanded in x when b is small against a; the displayed form otherwise.
  const double x = (2.0 * ab + b2) / a2;
  if (std::abs(x) < 0.1)
    return std::pow(a2, 0.5 * p) * bregman_core(x, p) + 0.5 * p * std::pow(a2, 0.5 * p - 1.0) * b2;
  return std::pow(s2, 0.5 * p) - std::pow(a2, 0.5 * p) - p * std::pow(a2, 0.5 * p - 1.0) * ab;
}

double lagrangian_L(const PointSample& s) {
  s.validate();
  return lagrangian_L(s.grad_v, s.v, s.w0, s.grad_w0, s.p);
}

LhatTerms lagrangian_Lhat_terms(std::span<const double> grad_v, double v, double w, std::span<const double> grad_w,
                                double p) {
  check_gradients(grad_v, grad_w);
  const double gw2 = sq_norm(grad_w);
  const double gv2 = sq_norm(grad_v);
  LhatTerms t;
  t.gradient_term = std::pow(v, p) * std::pow(gw2, 0.5 * p);
  // std::pow(0, 0) == 1 gives the 0^0 = 1 convention at p = 2.
  t.mixed_term = v * v * std::pow(gv2, 0.5 * (p - 2.0)) * std::pow(w, p - 2.0) * gw2;
  return t;
}

double lagrangian_Lhat(const PointSample& s) {
  s.validate();
  return lagrangian_Lhat_terms(s.grad_v, s.v, s.w0, s.grad_w0, s.p).total();
}

double general_comparator(std::span<const double> grad_v, double v, double w, std::span<const double> grad_w,
                          double p) {
  check_gradients(grad_v, grad_w);
  const double gw = std::sqrt(sq_norm(grad_w));
  const double gv = std::sqrt(sq_norm(grad_v));
  if (gw == 0.0) return 0.0;
  return v * v * gw * gw * std::pow(w * gv + v * gw, p - 2.0);
}

double sample_scale(const PointSample& s) {
  const double a = s.w0 * std::sqrt(sq_norm(s.grad_v));
  const double b = s.v * std::sqrt(sq_norm(s.grad_w0));
  return std::pow(a + b, s.p);
}

namespace {

struct Sampler {
  UniformStream stream;
  const SamplerOptions& opt;

  double log_uniform() {
    const double lo = std::log(opt.magnitude_lo);
    const double hi = std::log(opt.magnitude_hi);
    return std::exp(lo + (hi - lo) * stream.next());
  }
  std::vector<double> direction() {
    std::vector<double> d(static_cast<std::size_t>(opt.dim));
    double n2 = 0.0;
    for (auto& x : d) {
      const double u1 = stream.next();
      const double u2 = stream.next();
      x = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      n2 += x * x;
    }
    const double n = std::sqrt(n2);
    if (n == 0.0) {
      d.assign(d.size(), 0.0);
      d[0] = 1.0;
    } else {
      for (auto& x : d) x /= n;
    }
    return d;
  }
  std::vector<double> vector() {
    const double m = log_uniform();
    auto d = direction();
    for (auto& x : d) x *= m;
    return d;
  }

  PointSample next(double p, std::size_t index) {
    PointSample s;
    s.p = p;
    s.v = log_uniform();
    s.grad_v = vector();
    s.w0 = log_uniform();
    s.w1 = log_uniform();
    s.grad_w0 = vector();
    s.grad_w1 = vector();
    s.t = 1.0 - stream.next();  // [0, 1)
    if (opt.degenerate_every > 0) {
      const std::size_t r = index % opt.degenerate_every;
      if (r == 0) std::fill(s.grad_w0.begin(), s.grad_w0.end(), 0.0);
      if (r == 1) s.w0 = 0.0;
    }
    return s;
  }
};

void check_sampler(const SamplerOptions& o) {
  if (o.dim < 1) throw std::invalid_argument("sampler dimension must be >= 1");
  if (!(o.magnitude_lo > 0.0 && o.magnitude_hi >= o.magnitude_lo))
    throw std::invalid_argument("magnitude range must satisfy 0 < lo <= hi");
}

struct ChunkStats {
  double rmin = std::numeric_limits<double>::infinity();
  double rmax = -std::numeric_limits<double>::infinity();
  double tmin = std::numeric_limits<double>::infinity();
  double tmax = -std::numeric_limits<double>::infinity();
  double lmin = std::numeric_limits<double>::infinity();
  std::size_t skipped = 0;
  std::optional<PointSample> bad;
  std::string bad_what;
};

template <typename Body>
std::vector<ChunkStats> sweep(double p, std::size_t n, std::uint64_t seed, const SamplerOptions& opt, Body body) {
  check_sampler(opt);
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  std::vector<ChunkStats> stats(chunks);
  parallel::for_chunks(n, kSampleChunk, [&](std::size_t b, std::size_t e, std::size_t c) {
    Sampler sm{UniformStream(seed, c), opt};
    auto& st = stats[c];
    for (std::size_t i = b; i < e; ++i) {
      PointSample s = sm.next(p, i);
      if (!st.bad) body(s, st);
    }
  });
  for (const auto& st : stats)
    if (st.bad) throw FalsificationError(st.bad_what, *st.bad);
  return stats;
}

RatioBounds combine(double p, std::size_t n, std::uint64_t seed, const std::vector<ChunkStats>& stats) {
  RatioBounds out;
  out.p = p;
  out.sample_count = n;
  out.seed = seed;
  out.ratio_min = std::numeric_limits<double>::infinity();
  out.ratio_max = -std::numeric_limits<double>::infinity();
  out.term_ratio_min = std::numeric_limits<double>::infinity();
  out.term_ratio_max = -std::numeric_limits<double>::infinity();
  out.min_normalized_L = std::numeric_limits<double>::infinity();
  for (const auto& st : stats) {
    out.ratio_min = std::min(out.ratio_min, st.rmin);
    out.ratio_max = std::max(out.ratio_max, st.rmax);
    out.term_ratio_min = std::min(out.term_ratio_min, st.tmin);
    out.term_ratio_max = std::max(out.term_ratio_max, st.tmax);
    out.min_normalized_L = std::min(out.min_normalized_L, st.lmin);
    out.skipped_degenerate += st.skipped;
  }
  return out;
}

}  // namespace

PointSample draw_sample(double p, std::uint64_t seed, std::size_t index, const SamplerOptions& options) {
  check_sampler(options);
  Sampler sm{UniformStream(seed, index / kSampleChunk), options};
  const std::size_t first = index - index % kSampleChunk;
  for (std::size_t i = first; i < index; ++i) sm.next(p, i);
  return sm.next(p, index);
}

void for_each_sample(double p, std::size_t count, std::uint64_t seed,
                     const std::function<void(const PointSample&)>& visit, const SamplerOptions& options) {
  check_sampler(options);
  for (std::size_t first = 0; first < count; first += kSampleChunk) {
    Sampler sm{UniformStream(seed, first / kSampleChunk), options};
    const std::size_t last = std::min(count, first + kSampleChunk);
    for (std::size_t i = first; i < last; ++i) visit(sm.next(p, i));
  }
}

RatioBounds comparability_bounds(double p, std::size_t sample_count, std::uint64_t seed,
                                 const SamplerOptions& options) {
  if (!(p >= 2.0)) throw std::invalid_argument("comparability bounds need p >= 2");
  auto stats = sweep(p, sample_count, seed, options, [](const PointSample& s, ChunkStats& st) {
    const double L = lagrangian_L(s.grad_v, s.v, s.w0, s.grad_w0, s.p);
    const auto terms = lagrangian_Lhat_terms(s.grad_v, s.v, s.w0, s.grad_w0, s.p);
    const double scale = sample_scale(s);
    if (scale > 0.0) st.lmin = std::min(st.lmin, L / scale);
    if (L < -kSlack * scale) {
      st.bad = s;
      st.bad_what = "negative Picone Lagrangian";
      return;
    }
    const double lh = terms.total();
    if (lh == 0.0) {
      if (L > kSlack * scale) {
        st.bad = s;
        st.bad_what = "simplified Lagrangian vanishes but the Lagrangian does not";
        return;
      }
      ++st.skipped;
      return;
    }
    const double r = L / lh;
    st.rmin = std::min(st.rmin, r);
    st.rmax = std::max(st.rmax, r);
    if (terms.gradient_term > 0.0 && terms.mixed_term > 0.0) {
      const double tr = terms.gradient_term / terms.mixed_term;
      st.tmin = std::min(st.tmin, tr);
      st.tmax = std::max(st.tmax, tr);
    }
  });
  return combine(p, sample_count, seed, stats);
}

RatioBounds general_comparator_bounds(double p, std::size_t sample_count, std::uint64_t seed,
                                      const SamplerOptions& options) {
  if (!(p > 1.0)) throw std::invalid_argument("comparator bounds need p > 1");
  auto stats = sweep(p, sample_count, seed, options, [](const PointSample& s, ChunkStats& st) {
    const double L = lagrangian_L(s.grad_v, s.v, s.w0, s.grad_w0, s.p);
    const double k = general_comparator(s.grad_v, s.v, s.w0, s.grad_w0, s.p);
    const double scale = sample_scale(s);
    if (scale > 0.0) st.lmin = std::min(st.lmin, L / scale);
    if (L < -kSlack * scale) {
      st.bad = s;
      st.bad_what = "negative Picone Lagrangian";
      return;
    }
    if (k == 0.0) {
      if (L > kSlack * scale) {
        st.bad = s;
        st.bad_what = "comparator vanishes but the Lagrangian does not";
        return;
      }
      ++st.skipped;
      return;
    }
    st.rmin = std::min(st.rmin, L / k);
    st.rmax = std::max(st.rmax, L / k);
  });
  return combine(p, sample_count, seed, stats);
}

Interpolant interpolate_wt(double w0, double w1, std::span<const double> grad_w0, std::span<const double> grad_w1,
                           double t, double p) {
  check_gradients(grad_w0, grad_w1);
  const double e = 0.5 * p;
  const double s = (1.0 - t) * std::pow(w0, e) + t * std::pow(w1, e);
  Interpolant out;
  out.grad.assign(grad_w0.size(), 0.0);
  if (s == 0.0) return out;
  out.w = std::pow(s, 1.0 / e);
  const double c0 = (1.0 - t) * std::pow(w0, e - 1.0);
  const double c1 = t * std::pow(w1, e - 1.0);
  const double den = std::pow(s, 1.0 - 1.0 / e);
  for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] = (c0 * grad_w0[k] + c1 * grad_w1[k]) / den;
  return out;
}

double check_gradient_convexity(const PointSample& s) {
  s.validate();
  const auto wt = interpolate_wt(s.w0, s.w1, s.grad_w0, s.grad_w1, s.t, s.p);
  const double e = 0.25 * s.p;  // |g|^{p/2} = (|g|^2)^{p/4}
  const double rhs = (1.0 - s.t) * std::pow(sq_norm(s.grad_w0), e) + s.t * std::pow(sq_norm(s.grad_w1), e);
  return rhs - std::pow(sq_norm(wt.grad), e);
}

DefectSweep gradient_convexity_sweep(double p, std::size_t sample_count, std::uint64_t seed,
                                     const SamplerOptions& options) {
  if (!(p >= 2.0)) throw std::invalid_argument("gradient convexity needs p >= 2");
  auto stats = sweep(p, sample_count, seed, options, [](const PointSample& s, ChunkStats& st) {
    const double d = check_gradient_convexity(s);
    const double e = 0.25 * s.p;
    const double scale = std::max((1.0 - s.t) * std::pow(sq_norm(s.grad_w0), e), s.t * std::pow(sq_norm(s.grad_w1), e));
    if (scale == 0.0) return;
    st.lmin = std::min(st.lmin, d / scale);
    if (d < -kSlack * scale) {
      st.bad = s;
      st.bad_what = "gradient convexity defect is negative";
    }
  });
  DefectSweep out;
  out.p = p;
  out.sample_count = sample_count;
  out.seed = seed;
  out.min_normalized_defect = std::numeric_limits<double>::infinity();
  for (const auto& st : stats) out.min_normalized_defect = std::min(out.min_normalized_defect, st.lmin);
  return out;
}

namespace {

template <typename Density>
double integrate_density(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& u, Density density) {
  spec.validate();
  require_same_domain(spec.domain, v);
  require_same_domain(spec.domain, u);
  for (double x : v.values())
    if (!(x > 0.0)) throw std::invalid_argument("v must be strictly positive");
  const VectorField gv = gradient(spec.domain, v);
  const VectorField gu = gradient(spec.domain, u);
  const auto d = static_cast<std::size_t>(spec.domain->dim());
  const double s = parallel::sum(u.size(), [&](std::size_t b, std::size_t e) {
    std::vector<double> gw(d);
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += density(v[i], gv.at(i), u[i], gu.at(i), gw);
    return acc;
  });
  return s * spec.domain->cell_volume();
}

}  // namespace

double energy_via_picone(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& u) {
  if (!u.is_nonnegative()) throw std::invalid_argument("u must be nonnegative");
  const double p = spec.p;
  return integrate_density(spec, v, u,
                           [p](double vi, std::span<const double> gvi, double ui, std::span<const double> gui,
                               std::vector<double>& gw) {
                             const double w = ui / vi;
                             for (std::size_t k = 0; k < gw.size(); ++k) gw[k] = (gui[k] - w * gvi[k]) / vi;
                             return lagrangian_L(gvi, vi, w, gw, p);
                           });
}

double simplified_energy_Qhat(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& u) {
  if (!u.is_nonnegative()) throw std::invalid_argument("u must be nonnegative");
  const double p = spec.p;
  return integrate_density(spec, v, u,
                           [p](double vi, std::span<const double> gvi, double ui, std::span<const double> gui,
                               std::vector<double>& gw) {
                             const double w = ui / vi;
                             for (std::size_t k = 0; k < gw.size(); ++k) gw[k] = (gui[k] - w * gvi[k]) / vi;
                             return lagrangian_Lhat_terms(gvi, vi, w, gw, p).total();
                           });
}

double convex_energy(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& psi) {
  if (!psi.is_nonnegative()) throw std::invalid_argument("psi must be nonnegative");
  const double p = spec.p;
  if (!(p >= 2.0)) throw std::invalid_argument("the convex energy needs p >= 2");
  const double c1 = std::pow(2.0 / p, p);
  const double c2 = (2.0 / p) * (2.0 / p);
  return integrate_density(spec, v, psi,
                           [=](double vi, std::span<const double> gvi, double si, std::span<const double> gsi,
                               std::vector<double>&) {
                             const double gs2 = sq_norm(gsi);
                             double val = c2 * vi * vi * std::pow(sq_norm(gvi), 0.5 * (p - 2.0)) * gs2;
                             if (si > 0.0) val += c1 * std::pow(vi, p) * std::pow(si, 2.0 - p) * std::pow(gs2, 0.5 * p);
                             return val;
                           });
}

double norm_N(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& psi) {
  return std::sqrt(convex_energy(spec, v, psi));
}

ConvexityDefect convexity_midpoint_test(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& psi0,
                                        const ScalarField& psi1, std::span<const double> t_grid) {
  const double q0 = convex_energy(spec, v, psi0);
  const double q1 = convex_energy(spec, v, psi1);
  ConvexityDefect out;
  out.scale = std::max(q0, q1);
  out.max_defect = -std::numeric_limits<double>::infinity();
  for (double t : t_grid) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("t_grid values must lie in [0, 1]");
    const ScalarField mid = linear_combination(1.0 - t, psi0, t, psi1);
    const double defect = convex_energy(spec, v, mid) - ((1.0 - t) * q0 + t * q1);
    if (defect > out.max_defect) {
      out.max_defect = defect;
      out.worst_t = t;
    }
  }
  if (t_grid.empty()) out.max_defect = 0.0;
  return out;
}

}  // namespace hsmlab
