// Diagonal Gaussians, Bernoulli vectors, the N(0, I) prior, and 8-bit bin
// probabilities.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "asvae/autodiff.hpp"

namespace asvae {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// N(mean, diag(exp(log_var))) per row. Build through make_gaussian so the
/// log-variance clamp is always applied.
struct DiagonalGaussian {
  Var mean;
  Var log_var;
};

/// Independent Bernoulli(sigmoid(logit)) per entry.
struct BernoulliVec {
  Var logits;
};

inline DiagonalGaussian make_gaussian(Var mean, Var log_var) {
  if (mean.shape() != log_var.shape()) {
    throw DimensionError("gaussian: mean " + shape_string(mean.shape()) + " vs log_var " +
                         shape_string(log_var.shape()));
  }
  return {mean, clamp(log_var, kLogVarMin, kLogVarMax)};
}

/// p(z) = N(0, I) with the given [batch, dim] shape, as tape constants.
inline DiagonalGaussian standard_normal_prior(Tape& tape, std::size_t batch, std::size_t dim) {
  return {tape.constant(Tensor(Shape{batch, dim})), tape.constant(Tensor(Shape{batch, dim}))};
}

/// Per-row log N(x; mean, diag var): [batch].
inline Var gaussian_log_prob(const DiagonalGaussian& g, Var x) {
  if (x.shape() != g.mean.shape()) {
    throw DimensionError("gaussian_log_prob: x " + shape_string(x.shape()) + " vs mean " +
                         shape_string(g.mean.shape()));
  }
  Var diff = x - g.mean;
  Var mahal = square(diff) * exp(neg(g.log_var));
  Var per_dim = scale(offset(g.log_var + mahal, kLog2Pi), -0.5);
  return row_sum(per_dim);
}

/// mean + exp(log_var / 2) * noise. Noise is a constant of the tape.
inline Var reparam_sample(const DiagonalGaussian& g, const Tensor& noise) {
  if (noise.shape() != g.mean.shape()) {
    throw DimensionError("reparam_sample: noise " + shape_string(noise.shape()) + " vs mean " +
                         shape_string(g.mean.shape()));
  }
  Var eps = g.mean.tape()->constant(noise);
  return g.mean + exp(scale(g.log_var, 0.5)) * eps;
}

/// KL(N(mean, var) || N(0, I)) per row: 0.5 * sum(mean^2 + var - 1 - log_var).
inline Var kl_to_standard_normal(const DiagonalGaussian& g) {
  Var inner = square(g.mean) + exp(g.log_var) - g.log_var;
  return row_sum(scale(offset(inner, -1.0), 0.5));
}

/// Per-row sum of x log sigma(l) + (1-x) log(1 - sigma(l)), evaluated as
/// x*l - softplus(l).
inline Var bernoulli_log_prob(const BernoulliVec& b, Var x) {
  if (x.shape() != b.logits.shape()) {
    throw DimensionError("bernoulli_log_prob: x " + shape_string(x.shape()) + " vs logits " +
                         shape_string(b.logits.shape()));
  }
  for (double v : x.value().data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("bernoulli_log_prob: target " + std::to_string(v) + " outside [0,1]");
    }
  }
  return row_sum(x * b.logits - softplus(b.logits));
}

// ---------------------------------------------------------------------------
// Quantization bins: pixel value i in 0..255 covers [i/256, (i+1)/256), with
// the outermost bins extended to -inf and +inf.

inline double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

/// P(lower <= X < upper) for X ~ N(0,1), using whichever tail keeps the
/// difference away from cancellation.
inline double normal_interval(double lower, double upper) {
  if (lower >= 0.0) {
    // both in the upper tail: Q(lower) - Q(upper)
    return 0.5 * (std::erfc(lower / std::numbers::sqrt2) - std::erfc(upper / std::numbers::sqrt2));
  }
  if (upper <= 0.0) {
    return 0.5 * (std::erfc(-upper / std::numbers::sqrt2) - std::erfc(-lower / std::numbers::sqrt2));
  }
  return normal_cdf(upper) - normal_cdf(lower);
}

inline double gaussian_bin_prob(double mean, double log_var, int bin) {
  if (bin < 0 || bin > 255) throw DomainError("bin index " + std::to_string(bin) + " outside 0..255");
  const double sigma = std::exp(0.5 * std::clamp(log_var, kLogVarMin, kLogVarMax));
  const double inf = std::numeric_limits<double>::infinity();
  const double a = bin == 0 ? -inf : bin / 256.0;
  const double b = bin == 255 ? inf : (bin + 1) / 256.0;
  return normal_interval((a - mean) / sigma, (b - mean) / sigma);
}

/// log of gaussian_bin_prob, floored at the smallest normal double so that a
/// bin far in the tail yields a large finite penalty instead of -inf.
inline double log_gaussian_bin_prob(double mean, double log_var, int bin) {
  return std::log(std::max(gaussian_bin_prob(mean, log_var, bin), std::numeric_limits<double>::min()));
}

}  // namespace asvae
