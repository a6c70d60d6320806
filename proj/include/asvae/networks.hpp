// MLP encoder, decoder and the two joint discriminators.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "asvae/autodiff.hpp"
#include "asvae/distributions.hpp"
#include "asvae/rng.hpp"

namespace asvae {

enum class Activation : std::uint8_t {
  Tanh,
  Gated,  // tanh(h) * sigmoid(h)
  Leaky,  // max(h, slope * h)
};

struct MlpSpec {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Activation activation = Activation::Tanh;
  double leaky_slope = 0.2;
  double dropout_rate = 0.0;  // hidden layers only

  void validate() const {
    if (widths.size() < 3) throw ContractError("MLP needs at least one hidden layer");
    for (std::size_t w : widths) {
      if (w == 0) throw ContractError("MLP layer width must be >= 1");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw ContractError("dropout rate must be in [0, 1)");
    }
  }
};

struct Linear {
  Tensor weight;  // [fan_in, fan_out]
  Tensor bias;    // [fan_out]
};

struct Mlp {
  MlpSpec spec;
  std::vector<Linear> layers;

  std::size_t input_width() const { return spec.widths.front(); }
  std::size_t output_width() const { return spec.widths.back(); }

  /// weight0, bias0, weight1, bias1, ...
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (Linear& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const Linear& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline Mlp xavier_init(const MlpSpec& spec, RngStream& stream) {
  spec.validate();
  Mlp m{spec, {}};
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t fan_in = spec.widths[l];
    const std::size_t fan_out = spec.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Linear layer{Tensor(Shape{fan_in, fan_out}), Tensor(Shape{fan_out})};
    for (double& w : layer.weight.data()) w = (2.0 * stream.uniform() - 1.0) * bound;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

inline Mlp zero_mlp(const MlpSpec& spec) {
  spec.validate();
  Mlp m{spec, {}};
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    m.layers.push_back({Tensor(Shape{spec.widths[l], spec.widths[l + 1]}),
                        Tensor(Shape{spec.widths[l + 1]})});
  }
  return m;
}

/// An MLP's parameters as tape variables.
struct MlpVars {
  const MlpSpec* spec = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

inline MlpVars bind_mlp(Tape& tape, const Mlp& mlp, bool requires_grad) {
  MlpVars v{&mlp.spec, {}, {}};
  for (const Linear& l : mlp.layers) {
    v.weights.push_back(tape.leaf(l.weight, requires_grad));
    v.biases.push_back(tape.leaf(l.bias, requires_grad));
  }
  return v;
}

/// Rebuilds MlpVars from leaves in parameters() order.
inline MlpVars mlp_vars_from(const Mlp& mlp, std::span<const Var> leaves) {
  if (leaves.size() != 2 * mlp.layers.size()) throw ContractError("wrong number of MLP leaves");
  MlpVars v{&mlp.spec, {}, {}};
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    v.weights.push_back(leaves[2 * l]);
    v.biases.push_back(leaves[2 * l + 1]);
  }
  return v;
}

/// Dropout settings for one forward pass.
struct ForwardMode {
  RngStream* dropout = nullptr;
  bool training = false;
};

/// Inverted dropout: in training, each unit is zeroed with probability `rate`
/// and survivors are scaled by 1/(1-rate). Identity in eval mode.
inline Var apply_dropout(Var h, double rate, RngStream* stream, bool training) {
  if (!training || rate == 0.0 || stream == nullptr) return h;
  Tensor mask(h.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = stream->uniform() < rate ? 0.0 : keep_scale;
  return h * h.tape()->constant(std::move(mask));
}

inline Var activate(Var h, const MlpSpec& spec) {
  switch (spec.activation) {
    case Activation::Tanh: return tanh(h);
    case Activation::Gated: return tanh(h) * sigmoid(h);
    case Activation::Leaky: return leaky_relu(h, spec.leaky_slope);
  }
  return h;
}

inline Var mlp_forward(const MlpVars& mlp, Var x, ForwardMode mode = {}) {
  const std::size_t n = mlp.weights.size();
  if (x.value().rank() != 2 || x.value().cols() != mlp.spec->widths.front()) {
    throw DimensionError("MLP input " + shape_string(x.shape()) + " expected width " +
                         std::to_string(mlp.spec->widths.front()));
  }
  Var h = x;
  for (std::size_t l = 0; l < n; ++l) {
    h = add_bias(matmul(h, mlp.weights[l]), mlp.biases[l]);
    if (l + 1 < n) {
      h = activate(h, *mlp.spec);
      h = apply_dropout(h, mlp.spec->dropout_rate, mode.dropout, mode.training);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Model bundle

enum class Likelihood : std::uint8_t { Gaussian, Bernoulli };

inline const char* likelihood_name(Likelihood k) {
  return k == Likelihood::Gaussian ? "gaussian" : "bernoulli";
}

/// Parameter groups: theta (decoder), phi (encoder), psi1, psi2.
using GroupMask = unsigned;
inline constexpr GroupMask kEncoder = 1u;
inline constexpr GroupMask kDecoder = 2u;
inline constexpr GroupMask kDisc1 = 4u;
inline constexpr GroupMask kDisc2 = 8u;
inline constexpr GroupMask kGenerator = kEncoder | kDecoder;
inline constexpr GroupMask kDiscriminators = kDisc1 | kDisc2;
inline constexpr GroupMask kAllGroups = kGenerator | kDiscriminators;

struct ArchSpec {
  std::size_t data_dim = 2;
  std::size_t latent_dim = 2;
  std::size_t hidden_width = 256;
  std::size_t hidden_layers = 2;
  Likelihood likelihood = Likelihood::Gaussian;
  Activation generator_activation = Activation::Tanh;
  double disc_leaky_slope = 0.2;
  double disc_dropout = 0.0;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct ModelBundle {
  std::size_t data_dim = 0;
  std::size_t latent_dim = 0;
  Likelihood likelihood = Likelihood::Gaussian;
  Mlp encoder;
  Mlp decoder;
  Mlp disc1;
  Mlp disc2;

  static constexpr std::array<GroupMask, 4> kGroups{kEncoder, kDecoder, kDisc1, kDisc2};

  static const char* group_name(GroupMask g) {
    switch (g) {
      case kEncoder: return "encoder";
      case kDecoder: return "decoder";
      case kDisc1: return "disc1";
      case kDisc2: return "disc2";
    }
    throw ContractError("not a single parameter group");
  }

  Mlp& group(GroupMask g) {
    switch (g) {
      case kEncoder: return encoder;
      case kDecoder: return decoder;
      case kDisc1: return disc1;
      case kDisc2: return disc2;
    }
    throw ContractError("not a single parameter group");
  }
  const Mlp& group(GroupMask g) const { return const_cast<ModelBundle*>(this)->group(g); }

  /// Parameters of the selected groups in a fixed order, named
  /// "<group>.<layer>.weight" / "<group>.<layer>.bias".
  std::vector<NamedTensor> named_parameters(GroupMask groups = kAllGroups) {
    std::vector<NamedTensor> out;
    for (GroupMask g : kGroups) {
      if (!(groups & g)) continue;
      Mlp& m = group(g);
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string prefix = std::string(group_name(g)) + "." + std::to_string(l) + ".";
        out.push_back({prefix + "weight", &m.layers[l].weight});
        out.push_back({prefix + "bias", &m.layers[l].bias});
      }
    }
    return out;
  }

  std::vector<Tensor> parameter_values(GroupMask groups = kAllGroups) const {
    std::vector<Tensor> out;
    for (const NamedTensor& nt : const_cast<ModelBundle*>(this)->named_parameters(groups)) {
      out.push_back(*nt.tensor);
    }
    return out;
  }

  friend bool operator==(const ModelBundle& a, const ModelBundle& b) {
    return a.data_dim == b.data_dim && a.latent_dim == b.latent_dim &&
           a.likelihood == b.likelihood && a.parameter_values() == b.parameter_values();
  }
};

inline MlpSpec encoder_spec(const ArchSpec& a) {
  std::vector<std::size_t> w{a.data_dim};
  w.insert(w.end(), a.hidden_layers, a.hidden_width);
  w.push_back(2 * a.latent_dim);
  return {w, a.generator_activation, 0.2, 0.0};
}

inline MlpSpec decoder_spec(const ArchSpec& a) {
  std::vector<std::size_t> w{a.latent_dim};
  w.insert(w.end(), a.hidden_layers, a.hidden_width);
  w.push_back(a.likelihood == Likelihood::Gaussian ? 2 * a.data_dim : a.data_dim);
  return {w, a.generator_activation, 0.2, 0.0};
}

inline MlpSpec discriminator_spec(const ArchSpec& a) {
  std::vector<std::size_t> w{a.data_dim + a.latent_dim};
  w.insert(w.end(), a.hidden_layers, a.hidden_width);
  w.push_back(1);
  return {w, Activation::Leaky, a.disc_leaky_slope, a.disc_dropout};
}

/// Fresh bundle; each network draws from its own fork of `stream`.
inline ModelBundle make_bundle(const ArchSpec& a, const RngStream& stream) {
  if (a.data_dim == 0 || a.latent_dim == 0) throw ContractError("data_dim and latent_dim must be >= 1");
  RngStream s_enc = stream.fork(1), s_dec = stream.fork(2), s_d1 = stream.fork(3),
            s_d2 = stream.fork(4);
  ModelBundle b;
  b.data_dim = a.data_dim;
  b.latent_dim = a.latent_dim;
  b.likelihood = a.likelihood;
  b.encoder = xavier_init(encoder_spec(a), s_enc);
  b.decoder = xavier_init(decoder_spec(a), s_dec);
  b.disc1 = xavier_init(discriminator_spec(a), s_d1);
  b.disc2 = xavier_init(discriminator_spec(a), s_d2);
  return b;
}

/// The bundle bound to one tape. Groups outside `trainable` enter as
/// constants and never receive gradients.
struct BoundModel {
  const ModelBundle* model = nullptr;
  Tape* tape = nullptr;
  MlpVars encoder, decoder, disc1, disc2;
  ForwardMode mode;
};

inline BoundModel bind_model(Tape& tape, const ModelBundle& m, GroupMask trainable,
                             ForwardMode mode = {}) {
  return {&m,
          &tape,
          bind_mlp(tape, m.encoder, trainable & kEncoder),
          bind_mlp(tape, m.decoder, trainable & kDecoder),
          bind_mlp(tape, m.disc1, trainable & kDisc1),
          bind_mlp(tape, m.disc2, trainable & kDisc2),
          mode};
}

/// Binds from leaves ordered as named_parameters(kAllGroups).
inline BoundModel bind_model_from(const ModelBundle& m, std::span<const Var> leaves,
                                  ForwardMode mode = {}) {
  const std::size_t ne = 2 * m.encoder.layers.size(), nd = 2 * m.decoder.layers.size(),
                    n1 = 2 * m.disc1.layers.size(), n2 = 2 * m.disc2.layers.size();
  if (leaves.size() != ne + nd + n1 + n2) throw ContractError("wrong number of bundle leaves");
  return {&m,
          leaves.front().tape(),
          mlp_vars_from(m.encoder, leaves.subspan(0, ne)),
          mlp_vars_from(m.decoder, leaves.subspan(ne, nd)),
          mlp_vars_from(m.disc1, leaves.subspan(ne + nd, n1)),
          mlp_vars_from(m.disc2, leaves.subspan(ne + nd + n1, n2)),
          mode};
}

/// q_phi(z|x): MLP output split into (mean, log_var).
inline DiagonalGaussian encoder_forward(const BoundModel& bm, Var x) {
  if (x.value().rank() != 2 || x.value().cols() != bm.model->data_dim) {
    throw DimensionError("encoder input " + shape_string(x.shape()) + " expected width " +
                         std::to_string(bm.model->data_dim));
  }
  Var out = mlp_forward(bm.encoder, x, bm.mode);
  const std::size_t d = bm.model->latent_dim;
  return make_gaussian(slice(out, 0, d), slice(out, d, d));
}

using DecoderOutput = std::variant<DiagonalGaussian, BernoulliVec>;

/// p_theta(x|z): Gaussian (mean, log_var) or Bernoulli logits.
inline DecoderOutput decoder_forward(const BoundModel& bm, Var z) {
  if (z.value().rank() != 2 || z.value().cols() != bm.model->latent_dim) {
    throw DimensionError("decoder input " + shape_string(z.shape()) + " expected width " +
                         std::to_string(bm.model->latent_dim));
  }
  Var out = mlp_forward(bm.decoder, z, bm.mode);
  const std::size_t d = bm.model->data_dim;
  if (bm.model->likelihood == Likelihood::Bernoulli) return BernoulliVec{out};
  return make_gaussian(slice(out, 0, d), slice(out, d, d));
}

inline Var decoder_log_prob(const DecoderOutput& dec, Var x) {
  if (const auto* g = std::get_if<DiagonalGaussian>(&dec)) return gaussian_log_prob(*g, x);
  return bernoulli_log_prob(std::get<BernoulliVec>(dec), x);
}

/// E[x | z]: the Gaussian mean or sigmoid of the logits.
inline Var decoder_mean(const DecoderOutput& dec) {
  if (const auto* g = std::get_if<DiagonalGaussian>(&dec)) return g->mean;
  return sigmoid(std::get<BernoulliVec>(dec).logits);
}

/// Logit f_psi(x, z) of a discriminator over concatenated (x, z): [batch, 1].
inline Var discriminator_forward(const MlpVars& psi, Var x, Var z, ForwardMode mode = {}) {
  if (x.value().rank() != 2 || z.value().rank() != 2 || x.value().rows() != z.value().rows() ||
      x.value().cols() + z.value().cols() != psi.spec->widths.front()) {
    throw DimensionError("discriminator inputs " + shape_string(x.shape()) + " and " +
                         shape_string(z.shape()) + " do not match input width " +
                         std::to_string(psi.spec->widths.front()));
  }
  return mlp_forward(psi, concat(x, z), mode);
}

}  // namespace asvae
