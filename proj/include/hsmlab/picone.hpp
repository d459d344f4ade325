#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsmlab/functionals.hpp"

/// Pointwise Picone algebra for w = u / v and the field-level energies built
/// from it. With a = w∇v and b = v∇w:
///   L  = |a + b|^p - |a|^p - p |a|^{p-2} a.b
///   L̂  = |b|^p + |a|^{p-2} |b|^2
/// and the general-p comparator |b|^2 (|a| + |b|)^{p-2}.
namespace hsmlab {

struct PointSample {
  double v = 1.0;
  std::vector<double> grad_v;
  double w0 = 1.0;
  double w1 = 1.0;
  std::vector<double> grad_w0;
  std::vector<double> grad_w1;
  double t = 0.0;
  double p = 2.0;

  /// Throws std::invalid_argument on v <= 0, negative w, t outside [0, 1],
  /// p < 2, or gradients of different lengths.
  void validate() const;
  std::string describe() const;
};

/// Raised when a sample contradicts one of the pointwise inequalities.
class FalsificationError : public std::runtime_error {
 public:
  FalsificationError(const std::string& what, PointSample sample)
      : std::runtime_error(what + "; sample: " + sample.describe()), sample_(std::move(sample)) {}
  const PointSample& sample() const { return sample_; }

 private:
  PointSample sample_;
};

/// L_v(w0) in a cancellation-free form (valid for every p > 1; no sample
/// validation so that the general-p comparator can be checked for p < 2).
double lagrangian_L(std::span<const double> grad_v, double v, double w, std::span<const double> grad_w, double p);
double lagrangian_L(const PointSample& s);

/// Its two terms separately: v^p|∇w|^p and v^2|∇v|^{p-2} w^{p-2} |∇w|^2 (0^0 = 1).
struct LhatTerms {
  double gradient_term = 0.0;
  double mixed_term = 0.0;
  double total() const { return gradient_term + mixed_term; }
};
LhatTerms lagrangian_Lhat_terms(std::span<const double> grad_v, double v, double w, std::span<const double> grad_w,
                                double p);
double lagrangian_Lhat(const PointSample& s);

/// v^2|∇w|^2 (w|∇v| + v|∇w|)^{p-2}, the two-sided comparator for all p > 1.
double general_comparator(std::span<const double> grad_v, double v, double w, std::span<const double> grad_w, double p);

/// Natural magnitude of the sample: (|w∇v| + |v∇w|)^p.
double sample_scale(const PointSample& s);

struct RatioBounds {
  double p = 2.0;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
  std::size_t skipped_degenerate = 0;
  /// Extremes of (gradient term) / (mixed term) of L̂ over samples where both are positive.
  double term_ratio_min = 0.0;
  double term_ratio_max = 0.0;
  /// Smallest L / scale seen (nonnegativity margin).
  double min_normalized_L = 0.0;
};

struct SamplerOptions {
  int dim = 3;
  double magnitude_lo = 1e-6;
  double magnitude_hi = 1e6;
  /// Every degenerate_every-th sample has ∇w = 0 (L̂ = 0).
  std::size_t degenerate_every = 64;
};

/// Draws sample i of a seeded stream. Magnitudes of v, |∇v|, w0, w1, |∇w0|,
/// |∇w1| are log-uniform on [lo, hi], directions uniform on the sphere,
/// t uniform on [0, 1]. Deterministic in (seed, i) regardless of threading.
PointSample draw_sample(double p, std::uint64_t seed, std::size_t index, const SamplerOptions& options = {});

/// Calls visit(sample) for samples 0..count-1 of the same stream, in index
/// order. Use this instead of draw_sample in loops: draw_sample replays the
/// chunk prefix on every call.
void for_each_sample(double p, std::size_t count, std::uint64_t seed,
                     const std::function<void(const PointSample&)>& visit, const SamplerOptions& options = {});

/// min / max of L / L̂ over nondegenerate samples. Throws FalsificationError
/// when L < -1e-12 scale or L̂ = 0 with L > 1e-12 scale.
RatioBounds comparability_bounds(double p, std::size_t sample_count, std::uint64_t seed,
                                 const SamplerOptions& options = {});

/// Same sampler, bounds of L / general_comparator (any p > 1).
RatioBounds general_comparator_bounds(double p, std::size_t sample_count, std::uint64_t seed,
                                      const SamplerOptions& options = {});

struct Interpolant {
  double w = 0.0;
  std::vector<double> grad;
};

/// w_t = [(1-t) w0^{p/2} + t w1^{p/2}]^{2/p} and its chain-rule gradient
/// (zero when w_t = 0).
Interpolant interpolate_wt(double w0, double w1, std::span<const double> grad_w0, std::span<const double> grad_w1,
                           double t, double p);

/// (1-t)|∇w0|^{p/2} + t|∇w1|^{p/2} - |∇w_t|^{p/2}.
double check_gradient_convexity(const PointSample& s);

struct DefectSweep {
  double p = 2.0;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
  double min_normalized_defect = 0.0;  ///< min of defect / scale
};

/// check_gradient_convexity over a sample stream; throws FalsificationError
/// on defect < -1e-12 scale.
DefectSweep gradient_convexity_sweep(double p, std::size_t sample_count, std::uint64_t seed,
                                     const SamplerOptions& options = {});

/// ∫ L_v(u/v). Uses exact gradients when both fields carry them, discrete
/// gradients otherwise. Throws on a nonpositive v node or a negative u node.
double energy_via_picone(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& u);

/// ∫ L̂_v(u/v), same conventions.
double simplified_energy_Qhat(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& u);

/// 𝒬(ψ) = Q̂(v ψ^{2/p}) written in ψ:
///   v^p (2/p)^p ψ^{2-p} |∇ψ|^p + (2/p)^2 v^2 |∇v|^{p-2} |∇ψ|^2,
/// with nodes where ψ = 0 contributing only the second term.
double convex_energy(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& psi);

/// N(ψ) = 𝒬(ψ)^{1/2}. Throws on a negative ψ node.
double norm_N(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& psi);

struct ConvexityDefect {
  double max_defect = 0.0;  ///< max over t of 𝒬(ψ_t) - [(1-t)𝒬(ψ0) + t𝒬(ψ1)]
  double worst_t = 0.0;
  double scale = 0.0;       ///< max(𝒬(ψ0), 𝒬(ψ1))
};

ConvexityDefect convexity_midpoint_test(const FunctionalSpec& spec, const ScalarField& v, const ScalarField& psi0,
                                        const ScalarField& psi1, std::span<const double> t_grid);

}  // namespace hsmlab
