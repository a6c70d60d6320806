// Training objectives: the VAE bound, the two joint/product discriminator
// objectives, the symmetric generator objective S (written out at estimate_vaexz) with both
// reparametrizations, its two halves, and the ALI joint-matching loss.
//
// Sign conventions
//   elbo_vae                total = ELBO                        (maximize)
//   adv_objective_a1/a2     value = A1 / A2                     (maximize wrt psi)
//   ali_loss                value = ALI objective               (psi maximizes, theta/phi minimize)
//   asvae_*_loss            total = -S (or its half)            (minimize wrt theta, phi)
#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include "asvae/distributions.hpp"
#include "asvae/networks.hpp"
#include "asvae/rng.hpp"

namespace asvae {

enum class Provenance : std::uint8_t {
  EncoderJoint,  // x ~ q(x), z ~ q_phi(z|x)
  DecoderJoint,  // z ~ p(z), x ~ p_theta(x|z)
  ProductPQ,     // x ~ p_theta(x), z ~ p(z) independently
  ProductQQ,     // x ~ q(x), z ~ q_phi(z) independently
};

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::EncoderJoint: return "encoder-joint";
    case Provenance::DecoderJoint: return "decoder-joint";
    case Provenance::ProductPQ: return "product-pq";
    case Provenance::ProductQQ: return "product-qq";
  }
  return "?";
}

namespace detail {
struct PairFactory;
}

/// (x, z) sample batch tagged with the distribution it was drawn from. Only
/// the samplers below can create one.
class PairBatch {
 public:
  Var x() const noexcept { return x_; }
  Var z() const noexcept { return z_; }
  Provenance tag() const noexcept { return tag_; }
  std::size_t size() const { return x_.value().rows(); }

 private:
  friend struct detail::PairFactory;
  PairBatch(Var x, Var z, Provenance tag) : x_(x), z_(z), tag_(tag) {}

  Var x_;
  Var z_;
  Provenance tag_;
};

namespace detail {

struct PairFactory {
  static PairBatch make(Var x, Var z, Provenance tag) { return PairBatch(x, z, tag); }
};

inline void expect_tag(const PairBatch& b, Provenance want, const char* who) {
  if (b.tag() != want) {
    throw ContractError(std::string(who) + ": expected " + provenance_name(want) + " pairs, got " +
                        provenance_name(b.tag()));
  }
}

/// Copy of an MLP's variables as constants, so no gradient reaches them.
inline MlpVars detached(const MlpVars& m) {
  MlpVars out{m.spec, {}, {}};
  for (Var w : m.weights) out.weights.push_back(w.tape()->detach(w));
  for (Var b : m.biases) out.biases.push_back(b.tape()->detach(b));
  return out;
}

}  // namespace detail

/// x ~ p_theta(x|z). Gaussian heads are reparametrized (gradient reaches
/// theta); Bernoulli heads yield a constant binary draw.
inline Var sample_decoder_output(const DecoderOutput& dec, RngStream& stream) {
  if (const auto* g = std::get_if<DiagonalGaussian>(&dec)) {
    return reparam_sample(*g, sample_standard_normal(stream, g->mean.shape()));
  }
  const Var logits = std::get<BernoulliVec>(dec).logits;
  Tensor draw(logits.shape());
  for (std::size_t i = 0; i < draw.size(); ++i) {
    draw[i] = stream.uniform() < sigmoid(logits.value()[i]) ? 1.0 : 0.0;
  }
  return logits.tape()->constant(std::move(draw));
}

inline PairBatch sample_decoder_joint(const BoundModel& bm, std::size_t n, RngStream& stream) {
  if (n == 0) throw ContractError("sample_decoder_joint: n must be >= 1");
  Var z = bm.tape->constant(sample_standard_normal(stream, {n, bm.model->latent_dim}));
  Var x = sample_decoder_output(decoder_forward(bm, z), stream);
  return detail::PairFactory::make(x, z, Provenance::DecoderJoint);
}

inline PairBatch sample_encoder_joint(const BoundModel& bm, const Tensor& x_batch,
                                      RngStream& stream) {
  Var x = bm.tape->constant(x_batch);
  DiagonalGaussian q = encoder_forward(bm, x);
  Var z = reparam_sample(q, sample_standard_normal(stream, q.mean.shape()));
  return detail::PairFactory::make(x, z, Provenance::EncoderJoint);
}

/// x from p_theta(x|z') with z' ~ p(z), paired with an independent z ~ p(z).
inline PairBatch sample_product_pq(const BoundModel& bm, std::size_t n, RngStream& stream) {
  if (n == 0) throw ContractError("sample_product_pq: n must be >= 1");
  Var z_src = bm.tape->constant(sample_standard_normal(stream, {n, bm.model->latent_dim}));
  Var x = sample_decoder_output(decoder_forward(bm, z_src), stream);
  Var z = bm.tape->constant(sample_standard_normal(stream, {n, bm.model->latent_dim}));
  return detail::PairFactory::make(x, z, Provenance::ProductPQ);
}

/// z encoded from batch a, paired with x taken from an independent batch b.
inline PairBatch sample_product_qq(const BoundModel& bm, const Tensor& x_batch_a,
                                   const Tensor& x_batch_b, RngStream& stream) {
  if (x_batch_a.rows() != x_batch_b.rows()) {
    throw DimensionError("sample_product_qq: batches differ in size");
  }
  DiagonalGaussian q = encoder_forward(bm, bm.tape->constant(x_batch_a));
  Var z = reparam_sample(q, sample_standard_normal(stream, q.mean.shape()));
  Var x = bm.tape->constant(x_batch_b);
  return detail::PairFactory::make(x, z, Provenance::ProductQQ);
}

// ---------------------------------------------------------------------------
// Discriminator objectives

/// mean log sigma(f(real)) + mean log(1 - sigma(f(fake))).
inline Var joint_gan_objective(const MlpVars& psi, Var real_x, Var real_z, Var fake_x, Var fake_z,
                               ForwardMode mode) {
  Var f_real = discriminator_forward(psi, real_x, real_z, mode);
  Var f_fake = discriminator_forward(psi, fake_x, fake_z, mode);
  return mean(log_sigmoid(f_real)) + mean(log_one_minus_sigmoid(f_fake));
}

/// A1(psi1): encoder joint vs p_theta(x)p(z). The pairs are detached so only
/// psi1 receives gradient.
inline Var adv_objective_a1(const MlpVars& psi1, const PairBatch& real, const PairBatch& fake,
                            ForwardMode mode = {}) {
  detail::expect_tag(real, Provenance::EncoderJoint, "adv_objective_a1 real");
  detail::expect_tag(fake, Provenance::ProductPQ, "adv_objective_a1 fake");
  Tape& t = *real.x().tape();
  return joint_gan_objective(psi1, t.detach(real.x()), t.detach(real.z()), t.detach(fake.x()),
                             t.detach(fake.z()), mode);
}

/// A2(psi2): decoder joint vs q(x)q_phi(z).
inline Var adv_objective_a2(const MlpVars& psi2, const PairBatch& real, const PairBatch& fake,
                            ForwardMode mode = {}) {
  detail::expect_tag(real, Provenance::DecoderJoint, "adv_objective_a2 real");
  detail::expect_tag(fake, Provenance::ProductQQ, "adv_objective_a2 fake");
  Tape& t = *real.x().tape();
  return joint_gan_objective(psi2, t.detach(real.x()), t.detach(real.z()), t.detach(fake.x()),
                             t.detach(fake.z()), mode);
}

/// ALI objective: one discriminator between the encoder joint (label 1) and decoder
/// joint (label 0). Pairs stay live so the generator phase can minimize it.
inline Var ali_loss(const MlpVars& psi, const PairBatch& real, const PairBatch& fake,
                    ForwardMode mode = {}) {
  detail::expect_tag(real, Provenance::EncoderJoint, "ali_loss real");
  detail::expect_tag(fake, Provenance::DecoderJoint, "ali_loss fake");
  return joint_gan_objective(psi, real.x(), real.z(), fake.x(), fake.z(), mode);
}

// ---------------------------------------------------------------------------
// Generator objectives

struct LossReport {
  Var total;
  std::map<std::string, double> components;

  double value() const { return total.value().item(); }
  double component(const std::string& name) const {
    auto it = components.find(name);
    if (it == components.end()) throw ContractError("loss component '" + name + "' not reported");
    return it->second;
  }
};

/// E_q(z|x)[log p(x|z)] - KL(q(z|x) || p(z)) with one reparametrized z per
/// row, averaged over the batch.
inline LossReport elbo_vae(const BoundModel& bm, const Tensor& x_batch, RngStream& stream) {
  Var x = bm.tape->constant(x_batch);
  DiagonalGaussian q = encoder_forward(bm, x);
  Var z = reparam_sample(q, sample_standard_normal(stream, q.mean.shape()));
  Var recon = mean(decoder_log_prob(decoder_forward(bm, z), x));
  Var kl = mean(kl_to_standard_normal(q));
  LossReport r{recon - kl, {}};
  r.components["recon_x"] = recon.value().item();
  r.components["kl_term"] = kl.value().item();
  return r;
}

namespace detail {

struct SideTerms {
  Var recon;  // batch mean of the log-likelihood term
  Var adv;    // batch mean of the discriminator logit
};

/// x ~ q(x), z = z_phi(x, eps): log p_theta(x|z) and f_psi1(x, z).
inline SideTerms x_side(const BoundModel& bm, const Tensor& x_batch, RngStream& stream) {
  Var x = bm.tape->constant(x_batch);
  DiagonalGaussian q = encoder_forward(bm, x);
  Var z = reparam_sample(q, sample_standard_normal(stream, q.mean.shape()));
  Var recon = mean(decoder_log_prob(decoder_forward(bm, z), x));
  Var f1 = mean(discriminator_forward(detached(bm.disc1), x, z, bm.mode));
  return {recon, f1};
}

/// z ~ p(z), x = x_theta(z, xi): log q_phi(z|x) and f_psi2(x, z).
inline SideTerms z_side(const BoundModel& bm, std::size_t n, RngStream& stream) {
  if (bm.model->likelihood != Likelihood::Gaussian) {
    throw ContractError("the z-side objective needs a reparametrizable (gaussian) decoder");
  }
  Var z = bm.tape->constant(sample_standard_normal(stream, {n, bm.model->latent_dim}));
  const auto& p = std::get<DiagonalGaussian>(decoder_forward(bm, z));
  Var x = reparam_sample(p, sample_standard_normal(stream, p.mean.shape()));
  Var recon = mean(gaussian_log_prob(encoder_forward(bm, x), z));
  Var f2 = mean(discriminator_forward(detached(bm.disc2), x, z, bm.mode));
  return {recon, f2};
}

}  // namespace detail

/// -S. Gradients reach theta and phi through both reparametrized
/// samples and through the discriminator inputs; psi1 and psi2 enter as
/// constants. `adv_weight` multiplies the discriminator terms (1 by default).
inline LossReport asvae_generator_loss(const BoundModel& bm, const Tensor& x_batch,
                                       RngStream& stream, double adv_weight = 1.0) {
  detail::SideTerms xs = detail::x_side(bm, x_batch, stream);
  detail::SideTerms zs = detail::z_side(bm, x_batch.rows(), stream);
  Var objective = (xs.recon - scale(xs.adv, adv_weight)) + (zs.recon - scale(zs.adv, adv_weight));
  LossReport r{neg(objective), {}};
  r.components["recon_x"] = xs.recon.value().item();
  r.components["recon_z"] = zs.recon.value().item();
  r.components["adv_f1"] = xs.adv.value().item();
  r.components["adv_f2"] = zs.adv.value().item();
  return r;
}

/// AS-VAE-r: -(x-side half) = -mean[log p(x|z_phi(x,eps)) - f_psi1(x, z_phi(x,eps))].
inline LossReport asvae_r_loss(const BoundModel& bm, const Tensor& x_batch, RngStream& stream,
                               double adv_weight = 1.0) {
  detail::SideTerms xs = detail::x_side(bm, x_batch, stream);
  LossReport r{neg(xs.recon - scale(xs.adv, adv_weight)), {}};
  r.components["recon_x"] = xs.recon.value().item();
  r.components["adv_f1"] = xs.adv.value().item();
  return r;
}

/// AS-VAE-g: -(z-side half) = -mean[log q(z|x_theta(z,xi)) - f_psi2(x_theta(z,xi), z)].
inline LossReport asvae_g_loss(const BoundModel& bm, std::size_t n, RngStream& stream,
                               double adv_weight = 1.0) {
  detail::SideTerms zs = detail::z_side(bm, n, stream);
  LossReport r{neg(zs.recon - scale(zs.adv, adv_weight)), {}};
  r.components["recon_z"] = zs.recon.value().item();
  r.components["adv_f2"] = zs.adv.value().item();
  return r;
}

/// Experimental: the literal min-max reading where psi1, psi2 ascend
/// -S itself. Only the discriminator terms depend on psi, so this is
/// adv_weight * (mean f1 + mean f2) on detached generator samples.
inline Var minmax_discriminator_objective(const BoundModel& bm, const Tensor& x_batch,
                                          RngStream& stream, double adv_weight = 1.0) {
  PairBatch enc = sample_encoder_joint(bm, x_batch, stream);
  PairBatch dec = sample_decoder_joint(bm, x_batch.rows(), stream);
  Tape& t = *bm.tape;
  Var f1 = mean(discriminator_forward(bm.disc1, t.detach(enc.x()), t.detach(enc.z()), bm.mode));
  Var f2 = mean(discriminator_forward(bm.disc2, t.detach(dec.x()), t.detach(dec.z()), bm.mode));
  return scale(f1 + f2, adv_weight);
}

// ---------------------------------------------------------------------------
// Monte-Carlo estimate of S for models with discrete sample spaces.

/// What estimate_vaexz needs: samplers for q(x), q(z|x), p(z), p(x|z), the two
/// conditional log-densities, and the two discriminators.
template <class M>
concept SampleableJointModel = requires(const M& m, RngStream& s, std::size_t i) {
  { m.sample_data(s) } -> std::convertible_to<std::size_t>;
  { m.sample_encoder(i, s) } -> std::convertible_to<std::size_t>;
  { m.sample_prior(s) } -> std::convertible_to<std::size_t>;
  { m.sample_decoder(i, s) } -> std::convertible_to<std::size_t>;
  { m.log_decoder(i, i) } -> std::convertible_to<double>;
  { m.log_encoder(i, i) } -> std::convertible_to<double>;
  { m.f1(i, i) } -> std::convertible_to<double>;
  { m.f2(i, i) } -> std::convertible_to<double>;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Sampled S = E_{q(x)q(z|x)}[log p(x|z) - f1(x,z)] + E_{p(z)p(x|z)}[log q(z|x) - f2(x,z)]
/// with `n` draws per expectation. log_decoder(x, z) = log p(x|z) and
/// log_encoder(z, x) = log q(z|x).
template <SampleableJointModel M>
Estimate estimate_vaexz(const M& model, std::size_t n, RngStream& stream) {
  if (n < 2) throw ContractError("estimate_vaexz needs at least two draws");
  // Welford accumulators for the two independent halves.
  auto run = [&](auto draw) {
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = draw();
      const double d = v - m;
      m += d / static_cast<double>(i + 1);
      s += d * (v - m);
    }
    return std::pair{m, s / static_cast<double>(n - 1)};
  };
  const auto [mx, vx] = run([&] {
    const std::size_t x = model.sample_data(stream);
    const std::size_t z = model.sample_encoder(x, stream);
    return model.log_decoder(x, z) - model.f1(x, z);
  });
  const auto [mz, vz] = run([&] {
    const std::size_t z = model.sample_prior(stream);
    const std::size_t x = model.sample_decoder(z, stream);
    return model.log_encoder(z, x) - model.f2(x, z);
  });
  return {mx + mz, std::sqrt((vx + vz) / static_cast<double>(n)), n};
}

}  // namespace asvae
