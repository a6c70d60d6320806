// Training configuration and its plain-text form: `key = value` lines,
// `#` comments, no nesting. Layers overlay as defaults < file < flags.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "asvae/datasets.hpp"
#include "asvae/errors.hpp"
#include "asvae/networks.hpp"
#include "asvae/optim.hpp"

namespace asvae {

enum class TrainMode : std::uint8_t { Asvae, AsvaeR, AsvaeG, Vae, Ali };

inline const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Asvae: return "asvae";
    case TrainMode::AsvaeR: return "asvae-r";
    case TrainMode::AsvaeG: return "asvae-g";
    case TrainMode::Vae: return "vae";
    case TrainMode::Ali: return "ali";
  }
  return "?";
}

/// Discriminator groups that a mode trains.
inline GroupMask disc_groups(TrainMode m) {
  switch (m) {
    case TrainMode::Asvae: return kDisc1 | kDisc2;
    case TrainMode::AsvaeR: return kDisc1;
    case TrainMode::AsvaeG: return kDisc2;
    case TrainMode::Ali: return kDisc1;
    case TrainMode::Vae: return 0;
  }
  return 0;
}

/// Whether the z-reconstruction term exists for the mode (x-only otherwise).
inline bool uses_z_recon(TrainMode m) { return m != TrainMode::Vae && m != TrainMode::AsvaeR; }

struct TrainConfig {
  TrainMode mode = TrainMode::Asvae;
  std::string dataset = "mixture2d";  // mixture2d | digits | lingauss | path to a dataset directory
  std::uint64_t data_seed = 0;
  std::size_t dataset_n = 10000;
  int mixture_k = 8;
  double mixture_separation = 4.0;
  double val_fraction = 0.1;
  std::string likelihood = "auto";  // auto | gaussian | bernoulli
  std::size_t latent_dim = 2;
  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 2;
  std::string activation = "tanh";  // tanh | gated
  double disc_leaky_slope = 0.2;
  double dropout_rate = 0.0;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t disc_steps = 1;
  double adv_weight = 1.0;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  bool minmax_discriminator = false;
  bool wall_clock = false;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(key, "cannot parse '" + text + "' as a number");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define ASVAE_SIZE_FIELD(name)                                                        \
  Field {                                                                             \
    #name, [](const TrainConfig& c) { return std::to_string(c.name); },               \
        [](TrainConfig& c, const std::string& v) { c.name = parse_number<std::size_t>(#name, v); } \
  }
#define ASVAE_U64_FIELD(name)                                                         \
  Field {                                                                             \
    #name, [](const TrainConfig& c) { return std::to_string(c.name); },               \
        [](TrainConfig& c, const std::string& v) { c.name = parse_number<std::uint64_t>(#name, v); } \
  }
#define ASVAE_DOUBLE_FIELD(name)                                                      \
  Field {                                                                             \
    #name, [](const TrainConfig& c) { return fmt(c.name); },                          \
        [](TrainConfig& c, const std::string& v) { c.name = parse_number<double>(#name, v); } \
  }
#define ASVAE_STRING_FIELD(name)                                                      \
  Field {                                                                             \
    #name, [](const TrainConfig& c) { return c.name; },                               \
        [](TrainConfig& c, const std::string& v) { c.name = v; }                      \
  }
#define ASVAE_BOOL_FIELD(name)                                                        \
  Field {                                                                             \
    #name, [](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); }, \
        [](TrainConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }   \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      Field{"mode", [](const TrainConfig& c) { return std::string(mode_name(c.mode)); },
            [](TrainConfig& c, const std::string& v) {
              for (TrainMode m : {TrainMode::Asvae, TrainMode::AsvaeR, TrainMode::AsvaeG, TrainMode::Vae,
                                  TrainMode::Ali}) {
                if (v == mode_name(m)) {
                  c.mode = m;
                  return;
                }
              }
              throw ConfigError("mode", "unknown mode '" + v + "' (asvae, asvae-r, asvae-g, vae, ali)");
            }},
      ASVAE_STRING_FIELD(dataset),
      ASVAE_U64_FIELD(data_seed),
      ASVAE_SIZE_FIELD(dataset_n),
      Field{"mixture_k", [](const TrainConfig& c) { return std::to_string(c.mixture_k); },
            [](TrainConfig& c, const std::string& v) { c.mixture_k = parse_number<int>("mixture_k", v); }},
      ASVAE_DOUBLE_FIELD(mixture_separation),
      ASVAE_DOUBLE_FIELD(val_fraction),
      ASVAE_STRING_FIELD(likelihood),
      ASVAE_SIZE_FIELD(latent_dim),
      ASVAE_SIZE_FIELD(hidden_width),
      ASVAE_SIZE_FIELD(hidden_layers),
      ASVAE_STRING_FIELD(activation),
      ASVAE_DOUBLE_FIELD(disc_leaky_slope),
      ASVAE_DOUBLE_FIELD(dropout_rate),
      ASVAE_SIZE_FIELD(batch_size),
      ASVAE_DOUBLE_FIELD(learning_rate),
      ASVAE_DOUBLE_FIELD(beta1),
      ASVAE_DOUBLE_FIELD(beta2),
      ASVAE_DOUBLE_FIELD(epsilon),
      ASVAE_SIZE_FIELD(disc_steps),
      ASVAE_DOUBLE_FIELD(adv_weight),
      ASVAE_SIZE_FIELD(max_epochs),
      ASVAE_SIZE_FIELD(patience),
      ASVAE_U64_FIELD(seed),
      ASVAE_BOOL_FIELD(minmax_discriminator),
      ASVAE_BOOL_FIELD(wall_clock),
  };
  return f;
}

#undef ASVAE_SIZE_FIELD
#undef ASVAE_U64_FIELD
#undef ASVAE_DOUBLE_FIELD
#undef ASVAE_STRING_FIELD
#undef ASVAE_BOOL_FIELD

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& f : detail::fields()) k.emplace_back(f.key);
  return k;
}

/// Sets one key; unknown keys and unparsable values throw ConfigError naming the key.
inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields()) {
    if (key == f.key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError(key, "unknown config key");
}

inline void apply_text(TrainConfig& c, const std::string& text) {
  std::map<std::string, std::string> kv;
  try {
    kv = parse_key_values(text);
  } catch (const FormatError& e) {
    throw ConfigError("<file>", e.what());
  }
  for (const auto& [k, v] : kv) apply_setting(c, k, v);
}

/// Canonical text: every key, fixed order, shortest round-trip numbers.
inline std::string config_text(const TrainConfig& c) {
  std::string out;
  for (const auto& f : detail::fields()) out += std::string(f.key) + " = " + f.get(c) + "\n";
  return out;
}

inline TrainConfig config_from_text(const std::string& text) {
  TrainConfig c;
  apply_text(c, text);
  return c;
}

inline bool is_builtin_dataset(const std::string& name) {
  return name == "mixture2d" || name == "digits" || name == "lingauss";
}

/// Decoder likelihood after resolving "auto": bernoulli for digits,
/// gaussian everywhere else.
inline Likelihood resolved_likelihood(const TrainConfig& c) {
  if (c.likelihood == "gaussian") return Likelihood::Gaussian;
  if (c.likelihood == "bernoulli") return Likelihood::Bernoulli;
  return c.dataset == "digits" ? Likelihood::Bernoulli : Likelihood::Gaussian;
}

/// Checks every invariant that does not need the dataset.
inline void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
  };
  require(c.batch_size >= 2, "batch_size", "must be >= 2");
  require(std::isfinite(c.learning_rate) && c.learning_rate >= 0.0, "learning_rate", "must be finite and >= 0");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0, "beta1", "must be in [0, 1)");
  require(c.beta2 >= 0.0 && c.beta2 < 1.0, "beta2", "must be in [0, 1)");
  require(c.epsilon > 0.0, "epsilon", "must be > 0");
  require(c.disc_steps >= 1, "disc_steps", "must be >= 1");
  require(c.max_epochs >= 1, "max_epochs", "must be >= 1");
  require(c.patience >= 1, "patience", "must be >= 1");
  require(c.latent_dim >= 1, "latent_dim", "must be >= 1");
  require(c.hidden_width >= 1, "hidden_width", "must be >= 1");
  require(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0, "dropout_rate", "must be in [0, 1)");
  require(c.val_fraction > 0.0 && c.val_fraction < 1.0, "val_fraction", "must be in (0, 1)");
  require(c.mixture_k >= 1, "mixture_k", "must be >= 1");
  require(c.mixture_separation > 0.0, "mixture_separation", "must be > 0");
  require(std::isfinite(c.adv_weight), "adv_weight", "must be finite");
  require(c.disc_leaky_slope >= 0.0, "disc_leaky_slope", "must be >= 0");
  require(c.activation == "tanh" || c.activation == "gated", "activation", "must be tanh or gated");
  require(c.likelihood == "auto" || c.likelihood == "gaussian" || c.likelihood == "bernoulli", "likelihood",
          "must be auto, gaussian or bernoulli");
  require(!c.dataset.empty(), "dataset", "must not be empty");
  if (is_builtin_dataset(c.dataset)) {
    require(c.dataset_n >= 2 * c.batch_size, "dataset_n", "must be at least 2 * batch_size");
  }
  const bool needs_gaussian = c.mode == TrainMode::Asvae || c.mode == TrainMode::AsvaeG || c.mode == TrainMode::Ali;
  require(!needs_gaussian || resolved_likelihood(c) == Likelihood::Gaussian, "likelihood",
          std::string("mode ") + mode_name(c.mode) + " needs a gaussian decoder");
  require(!c.minmax_discriminator || c.mode == TrainMode::Asvae, "minmax_discriminator",
          "only applies to mode asvae");
}

inline ArchSpec arch_for(const TrainConfig& c, std::size_t data_dim) {
  ArchSpec a;
  a.data_dim = data_dim;
  a.latent_dim = c.latent_dim;
  a.hidden_width = c.hidden_width;
  a.hidden_layers = c.hidden_layers;
  a.likelihood = resolved_likelihood(c);
  a.generator_activation = c.activation == "gated" ? Activation::Gated : Activation::Tanh;
  a.disc_leaky_slope = c.disc_leaky_slope;
  a.disc_dropout = c.dropout_rate;
  return a;
}

/// Generates a built-in dataset or loads a dataset directory.
inline Dataset load_dataset(const TrainConfig& c) {
  if (c.dataset == "mixture2d") {
    return gen_mixture2d(c.mixture_k, c.mixture_separation, c.dataset_n, c.data_seed, c.val_fraction);
  }
  if (c.dataset == "digits") return gen_toy_digits(c.dataset_n, c.data_seed, 0.05, c.val_fraction);
  if (c.dataset == "lingauss") return gen_linear_gaussian(c.dataset_n, c.data_seed, {}, c.val_fraction);
  return load_dataset_dir(c.dataset);
}

}  // namespace asvae
