// Evaluation metrics: variational NLL bound, dequantization and bits/dim,
// discretized likelihood, reconstruction RMSE, classifier score and a
// histogram-based symmetric KL for 2-D samples.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asvae/classifier.hpp"
#include "asvae/io.hpp"
#include "asvae/networks.hpp"
#include "asvae/objectives.hpp"

namespace asvae {

struct MeanSe {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

inline MeanSe mean_and_se(std::span<const double> v) {
  if (v.empty()) throw ContractError("mean of an empty sample");
  MeanSe r;
  r.n = v.size();
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

/// Per-example -ELBO with the reconstruction term averaged over k
/// reparametrized draws and the KL term in closed form.
inline std::vector<double> nll_bound_per_example(const ModelBundle& m, const Tensor& x, std::size_t k,
                                                 RngStream& stream) {
  if (k == 0) throw ContractError("nll_bound needs k_samples >= 1");
  Tape tape(false);
  BoundModel bm = bind_model(tape, m, 0);
  Var xv = tape.constant(x);
  DiagonalGaussian q = encoder_forward(bm, xv);
  const Tensor kl = kl_to_standard_normal(q).value();
  std::vector<double> recon(x.rows(), 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    Var z = reparam_sample(q, sample_standard_normal(stream, q.mean.shape()));
    const Tensor lp = decoder_log_prob(decoder_forward(bm, z), xv).value();
    for (std::size_t i = 0; i < recon.size(); ++i) recon[i] += lp[i];
  }
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kl[i] - recon[i] / static_cast<double>(k);
  return out;
}

/// -ELBO in nats per example, mean and standard error over the batch.
inline MeanSe nll_bound(const ModelBundle& m, const Tensor& x, std::size_t k, RngStream& stream) {
  return mean_and_se(nll_bound_per_example(m, x, k, stream));
}

/// (pixel + u) / 256, u ~ U[0,1). Pixels must be integers in 0..255.
inline Tensor dequantize(const Tensor& pixels, RngStream& stream) {
  Tensor out(pixels.shape());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double p = pixels[i];
    if (!(p >= 0.0 && p <= 255.0) || p != std::floor(p)) {
      throw DomainError("pixel value " + std::to_string(p) + " is not an integer in 0..255");
    }
    out[i] = (p + stream.uniform()) / 256.0;
  }
  return out;
}

/// Unit-interval data to integer pixels: round(x * 255).
inline Tensor to_pixels(const Tensor& unit) {
  Tensor out(unit.shape());
  for (std::size_t i = 0; i < unit.size(); ++i) out[i] = std::round(std::clamp(unit[i], 0.0, 1.0) * 255.0);
  return out;
}

/// Converts an ELBO (nats, data on the [0,1) scale) to bits per dimension
/// of the underlying 8-bit data.
inline double bits_per_dim(double elbo_nats, std::size_t data_dim) {
  if (data_dim == 0) throw ContractError("bits_per_dim needs data_dim >= 1");
  return 8.0 - elbo_nats / (static_cast<double>(data_dim) * std::numbers::ln2);
}

/// sum over pixels of log P(pixel bin | z) under the Gaussian decoder, per row.
inline std::vector<double> discretized_loglik(const ModelBundle& m, const Tensor& pixels, const Tensor& z) {
  if (m.likelihood != Likelihood::Gaussian) {
    throw ContractError("discretized likelihood is unsupported for a bernoulli decoder");
  }
  if (pixels.rows() != z.rows()) throw DimensionError("discretized_loglik: pixel and code batches differ");
  Tape tape(false);
  BoundModel bm = bind_model(tape, m, 0);
  const auto p = std::get<DiagonalGaussian>(decoder_forward(bm, tape.constant(z)));
  const Tensor& mu = p.mean.value();
  const Tensor& lv = p.log_var.value();
  if (mu.shape() != pixels.shape()) throw DimensionError("discretized_loglik: pixel width mismatch");
  std::vector<double> out(pixels.rows(), 0.0);
  for (std::size_t i = 0; i < pixels.rows(); ++i) {
    for (std::size_t j = 0; j < pixels.cols(); ++j) {
      const double v = pixels.at(i, j);
      if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
        throw DomainError("pixel value " + std::to_string(v) + " is not an integer in 0..255");
      }
      out[i] += log_gaussian_bin_prob(mu.at(i, j), lv.at(i, j), static_cast<int>(v));
    }
  }
  return out;
}

/// Discrete-data bound: KL(q || p) - E_q[discretized log-likelihood], k draws.
inline MeanSe discretized_nll_bound(const ModelBundle& m, const Tensor& pixels, std::size_t k,
                                    RngStream& stream) {
  if (k == 0) throw ContractError("discretized bound needs k_samples >= 1");
  if (m.likelihood != Likelihood::Gaussian) {
    throw ContractError("discretized likelihood is unsupported for a bernoulli decoder");
  }
  Tensor unit(pixels.shape());
  for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = (pixels[i] + 0.5) / 256.0;
  Tape tape(false);
  BoundModel bm = bind_model(tape, m, 0);
  DiagonalGaussian q = encoder_forward(bm, tape.constant(unit));
  const Tensor kl = kl_to_standard_normal(q).value();
  std::vector<double> v(pixels.rows(), 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const Tensor z = reparam_sample(q, sample_standard_normal(stream, q.mean.shape())).value();
    const std::vector<double> ll = discretized_loglik(m, pixels, z);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= ll[i] / static_cast<double>(k);
  }
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += kl[i];
  return mean_and_se(v);
}

/// Deterministic reconstruction: decoder mean at the encoder mean. RMSE over
/// all entries, multiplied by `value_scale` (255 for unit-interval images).
inline double rmse_reconstruction(const ModelBundle& m, const Tensor& x, double value_scale = 1.0) {
  Tape tape(false);
  BoundModel bm = bind_model(tape, m, 0);
  DiagonalGaussian q = encoder_forward(bm, tape.constant(x));
  const Tensor rec = decoder_mean(decoder_forward(bm, q.mean)).value();
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = (rec[i] - x[i]) * value_scale;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(x.size()));
}

/// exp(mean_i KL(p(y|x_i) || p(y))) with p(y) the mean of the rows of `probs`.
inline double classifier_score_from_probs(const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() == 0) throw DimensionError("classifier score needs [n, K] probabilities");
  const std::size_t n = probs.rows(), k = probs.cols();
  // Identical rows carry no label information; skip the rounding in the mean.
  bool identical = true;
  for (std::size_t i = 1; i < n && identical; ++i) {
    for (std::size_t j = 0; j < k; ++j) identical = identical && probs.at(i, j) == probs.at(0, j);
  }
  if (identical) return 1.0;
  std::vector<double> py(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) py[j] += probs.at(i, j);
  }
  for (double& v : py) v /= static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double p = probs.at(i, j);
      if (p > 0.0) total += p * (std::log(p) - std::log(py[j]));
    }
  }
  // Rounding can push the mean KL a hair outside [0, log K].
  const double mean_kl = std::clamp(total / static_cast<double>(n), 0.0, std::log(static_cast<double>(k)));
  return std::exp(mean_kl);
}

/// n draws x ~ p_theta(x|z), z ~ p(z), scored by the classifier.
inline Tensor generate_samples(const ModelBundle& m, std::size_t n, RngStream& stream, bool use_mean = false) {
  Tape tape(false);
  BoundModel bm = bind_model(tape, m, 0);
  Var z = tape.constant(sample_standard_normal(stream, {n, m.latent_dim}));
  DecoderOutput dec = decoder_forward(bm, z);
  if (use_mean) return decoder_mean(dec).value();
  return sample_decoder_output(dec, stream).value();
}

inline double classifier_score(const ModelBundle& m, std::size_t n_generated, const Classifier& c,
                               RngStream& stream) {
  if (!c.trained()) throw StateError("classifier score needs a trained classifier");
  if (n_generated < 100) throw ContractError("classifier score needs at least 100 generated samples");
  return classifier_score_from_probs(classifier_probs(c, generate_samples(m, n_generated, stream)));
}

struct GridSpec {
  std::size_t bins = 16;  // per axis
  double alpha = 1.0;     // add-alpha smoothing per cell
};

/// Histograms both 2-D sample sets on a common bins x bins grid spanning
/// their joint bounding box and returns KL(A||B) + KL(B||A).
inline double grid_symmetric_kl(const Tensor& a, const Tensor& b, GridSpec spec = {}) {
  if (a.rows() == 0 || b.rows() == 0) throw ContractError("grid_symmetric_kl: empty sample set");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != 2 || b.cols() != 2) {
    throw DimensionError("grid_symmetric_kl needs [n, 2] samples");
  }
  if (spec.bins == 0 || !(spec.alpha > 0.0)) throw ContractError("grid_symmetric_kl: bins >= 1 and alpha > 0");
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  for (const Tensor* t : {&a, &b}) {
    for (std::size_t i = 0; i < t->rows(); ++i) {
      for (std::size_t d = 0; d < 2; ++d) {
        if (!std::isfinite(t->at(i, d))) throw DomainError("grid_symmetric_kl: non-finite sample");
        lo[d] = std::min(lo[d], t->at(i, d));
        hi[d] = std::max(hi[d], t->at(i, d));
      }
    }
  }
  const std::size_t nb = spec.bins;
  auto cell = [&](double v, std::size_t d) {
    if (hi[d] <= lo[d]) return std::size_t{0};
    const auto c = static_cast<std::size_t>((v - lo[d]) / (hi[d] - lo[d]) * static_cast<double>(nb));
    return std::min(c, nb - 1);
  };
  auto histogram = [&](const Tensor& t) {
    std::vector<double> h(nb * nb, spec.alpha);
    for (std::size_t i = 0; i < t.rows(); ++i) h[cell(t.at(i, 0), 0) * nb + cell(t.at(i, 1), 1)] += 1.0;
    const double total = static_cast<double>(t.rows()) + spec.alpha * static_cast<double>(nb * nb);
    for (double& v : h) v /= total;
    return h;
  };
  const std::vector<double> ha = histogram(a), hb = histogram(b);
  double kl = 0.0;
  for (std::size_t i = 0; i < ha.size(); ++i) kl += (ha[i] - hb[i]) * (std::log(ha[i]) - std::log(hb[i]));
  return kl;
}

struct EvalReport {
  std::string checkpoint;
  std::string dataset;
  std::string mode;
  double nll_nats = std::numeric_limits<double>::quiet_NaN();
  double nll_se = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> bits_per_dim;
  std::optional<double> discretized_nll;
  double rmse = 0.0;
  std::optional<double> classifier_score;
  std::optional<double> grid_sym_kl;
  std::size_t k_samples = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  static std::string csv_header() {
    return "checkpoint,dataset,mode,nll_nats,nll_se,bits_per_dim,discretized_nll,rmse,classifier_score,"
           "grid_sym_kl,k_samples,n_samples,seed";
  }

  /// Fields that do not apply to the model or dataset are left empty.
  std::string csv_row() const {
    auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
    std::ostringstream s;
    s << checkpoint << ',' << dataset << ',' << mode << ',' << io::format_double(nll_nats) << ','
      << io::format_double(nll_se) << ',' << opt(bits_per_dim) << ',' << opt(discretized_nll) << ','
      << io::format_double(rmse) << ',' << opt(classifier_score) << ',' << opt(grid_sym_kl) << ','
      << k_samples << ',' << n_samples << ',' << seed;
    return s.str();
  }
};

}  // namespace asvae
