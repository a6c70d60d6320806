// Synthetic datasets and the on-disk dataset directory layout:
//   <dir>/features.atns   f64 [n, data_dim]
//   <dir>/labels.atns     u8  [n]            (optional)
//   <dir>/meta.txt        key=value lines
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "asvae/io.hpp"
#include "asvae/rng.hpp"

namespace asvae {

enum class ScaleKind : std::uint8_t { UnitInterval, Raw };

struct Dataset {
  std::string name;
  Tensor features;  // [n, data_dim]
  std::vector<int> labels;  // empty when unlabeled
  int num_classes = 0;
  ScaleKind scale = ScaleKind::Raw;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;

  std::size_t size() const { return features.rows(); }
  std::size_t data_dim() const { return features.cols(); }
  bool labeled() const { return !labels.empty(); }

  Tensor train_features() const { return features.gather_rows(train_idx); }
  Tensor val_features() const { return features.gather_rows(val_idx); }
};

inline constexpr double kDefaultValFraction = 0.1;

/// Seeded split: the last round(n * fraction) entries of a permutation go to
/// validation. Both index lists are sorted.
inline void split_dataset(Dataset& d, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ContractError("validation fraction must be in [0, 1)");
  }
  RngStream s = RngStream(seed).fork(0x5157);
  const std::vector<std::size_t> perm = permutation(s, d.size());
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(d.size())));
  d.train_idx.assign(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_val));
  d.val_idx.assign(perm.end() - static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(d.train_idx.begin(), d.train_idx.end());
  std::sort(d.val_idx.begin(), d.val_idx.end());
}

/// k isotropic Gaussians with means equally spaced on a circle of radius
/// `separation` (angles 2 pi j / k) and per-axis variance 0.05 * separation.
/// Sample i belongs to component i mod k.
inline Dataset gen_mixture2d(int k, double separation, std::size_t n, std::uint64_t seed,
                             double val_fraction = kDefaultValFraction) {
  if (k < 1) throw ContractError("mixture needs k >= 1");
  if (n < static_cast<std::size_t>(k)) throw ContractError("mixture needs n >= k");
  Dataset d;
  d.name = "mixture2d";
  d.scale = ScaleKind::Raw;
  d.num_classes = k;
  d.features = Tensor(Shape{n, 2});
  d.labels.resize(n);
  RngStream s(seed);
  const double sd = std::sqrt(0.05 * separation);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(k));
    const double angle = 2.0 * std::numbers::pi * c / k;
    d.labels[i] = c;
    d.features.at(i, 0) = separation * std::cos(angle) + sd * s.normal();
    d.features.at(i, 1) = separation * std::sin(angle) + sd * s.normal();
  }
  split_dataset(d, val_fraction, seed);
  return d;
}

inline std::array<double, 2> mixture_center(int component, int k, double separation) {
  const double angle = 2.0 * std::numbers::pi * component / k;
  return {separation * std::cos(angle), separation * std::sin(angle)};
}

namespace detail {

// 8x8 digit templates, '#' = on.
inline const std::array<const char*, 10>& digit_templates() {
  static const std::array<const char*, 10> t = {
      "..####.."
      ".##..##."
      ".#....#."
      ".#....#."
      ".#....#."
      ".#....#."
      ".##..##."
      "..####..",

      "...##..."
      "..###..."
      ".#.##..."
      "...##..."
      "...##..."
      "...##..."
      "...##..."
      ".######.",

      "..####.."
      ".#....#."
      "......#."
      ".....#.."
      "....#..."
      "...#...."
      "..#....."
      ".######.",

      ".#####.."
      "......#."
      "......#."
      "..####.."
      "......#."
      "......#."
      "......#."
      ".#####..",

      ".....#.."
      "....##.."
      "...#.#.."
      "..#..#.."
      ".#...#.."
      ".######."
      ".....#.."
      ".....#..",

      ".######."
      ".#......"
      ".#......"
      ".#####.."
      "......#."
      "......#."
      ".#....#."
      "..####..",

      "..####.."
      ".#......"
      ".#......"
      ".#####.."
      ".#....#."
      ".#....#."
      ".#....#."
      "..####..",

      ".######."
      "......#."
      ".....#.."
      "....#..."
      "...#...."
      "...#...."
      "...#...."
      "...#....",

      "..####.."
      ".#....#."
      ".#....#."
      "..####.."
      ".#....#."
      ".#....#."
      ".#....#."
      "..####..",

      "..####.."
      ".#....#."
      ".#....#."
      ".#....#."
      "..#####."
      "......#."
      "......#."
      "..####..",
  };
  return t;
}

}  // namespace detail

/// Noiseless 8x8 glyph for `digit` as 64 values in {0, 1}.
inline std::vector<double> digit_template(int digit) {
  const char* g = detail::digit_templates().at(static_cast<std::size_t>(digit));
  std::vector<double> v(64);
  for (std::size_t i = 0; i < 64; ++i) v[i] = g[i] == '#' ? 1.0 : 0.0;
  return v;
}

/// 8x8 binary glyphs of the ten digits; each pixel flipped with probability
/// `flip_rate`. Sample i has class i mod 10.
inline Dataset gen_toy_digits(std::size_t n, std::uint64_t seed, double flip_rate = 0.05,
                              double val_fraction = kDefaultValFraction) {
  Dataset d;
  d.name = "digits";
  d.scale = ScaleKind::UnitInterval;
  d.num_classes = 10;
  d.features = Tensor(Shape{n, 64});
  d.labels.resize(n);
  RngStream s(seed);
  std::array<std::vector<double>, 10> templates;
  for (int c = 0; c < 10; ++c) templates[static_cast<std::size_t>(c)] = digit_template(c);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 10);
    d.labels[i] = c;
    for (std::size_t p = 0; p < 64; ++p) {
      const double v = templates[static_cast<std::size_t>(c)][p];
      d.features.at(i, p) = s.uniform() < flip_rate ? 1.0 - v : v;
    }
  }
  split_dataset(d, val_fraction, seed);
  return d;
}

/// z ~ N(0,1), x = weight * z + bias + noise_std * e: the marginal is exactly
/// N(bias, weight^2 + noise_std^2).
struct LinearGaussian {
  double weight = 1.0;
  double bias = 0.5;
  double noise_std = 0.5;

  double marginal_variance() const { return weight * weight + noise_std * noise_std; }
  double log_marginal(double x) const {
    const double var = marginal_variance();
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + (x - bias) * (x - bias) / var);
  }
  /// Exact posterior p(z|x) = N(mean, var).
  std::pair<double, double> posterior(double x) const {
    const double var = noise_std * noise_std / marginal_variance();
    return {weight * (x - bias) / marginal_variance(), var};
  }
};

inline Dataset gen_linear_gaussian(std::size_t n, std::uint64_t seed, LinearGaussian lg = {},
                                   double val_fraction = kDefaultValFraction) {
  Dataset d;
  d.name = "lingauss";
  d.scale = ScaleKind::Raw;
  d.features = Tensor(Shape{n, 1});
  RngStream s(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = s.normal();
    d.features.at(i, 0) = lg.weight * z + lg.bias + lg.noise_std * s.normal();
  }
  split_dataset(d, val_fraction, seed);
  return d;
}

// ---------------------------------------------------------------------------
// Dataset directories

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (eq == std::string::npos) {
      if (!trim(line).empty()) throw FormatError(FormatError::Kind::Malformed, "line without '=': " + line);
      continue;
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline void save_dataset_dir(const std::filesystem::path& dir, const Dataset& d,
                             double val_fraction, std::uint64_t split_seed) {
  std::filesystem::create_directories(dir);
  io::save_tensor_file(dir / "features.atns", d.features);
  if (d.labeled()) {
    Tensor l(Shape{d.labels.size()});
    for (std::size_t i = 0; i < d.labels.size(); ++i) l[i] = d.labels[i];
    io::save_tensor_file(dir / "labels.atns", l, io::Dtype::U8);
  }
  std::ostringstream meta;
  meta << "name=" << d.name << "\n"
       << "scale=" << (d.scale == ScaleKind::UnitInterval ? "unit-interval" : "raw") << "\n"
       << "num_classes=" << d.num_classes << "\n"
       << "val_fraction=" << io::format_double(val_fraction) << "\n"
       << "split_seed=" << split_seed << "\n";
  io::write_text(dir / "meta.txt", meta.str());
}

inline Dataset load_dataset_dir(const std::filesystem::path& dir) {
  Dataset d;
  d.features = io::load_tensor_file(dir / "features.atns");
  if (d.features.rank() != 2) throw FormatError(FormatError::Kind::Malformed, "features must be rank 2");
  const io::Bytes meta_bytes = io::read_file(dir / "meta.txt");
  const auto kv = parse_key_values(std::string(meta_bytes.begin(), meta_bytes.end()));
  auto get = [&](const std::string& k, const std::string& dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  };
  d.name = get("name", dir.filename().string());
  d.scale = get("scale", "raw") == "unit-interval" ? ScaleKind::UnitInterval : ScaleKind::Raw;
  try {
    d.num_classes = std::stoi(get("num_classes", "0"));
    const double frac = std::stod(get("val_fraction", "0.1"));
    const std::uint64_t seed = std::stoull(get("split_seed", "0"));
    if (std::filesystem::exists(dir / "labels.atns")) {
      const Tensor l = io::load_tensor_file(dir / "labels.atns");
      if (l.size() != d.size()) throw FormatError(FormatError::Kind::Malformed, "labels/features count mismatch");
      for (double v : l.data()) d.labels.push_back(static_cast<int>(v));
      for (int v : d.labels) {
        if (v < 0 || v >= d.num_classes) throw FormatError(FormatError::Kind::Malformed, "label out of range");
      }
    }
    split_dataset(d, frac, seed);
  } catch (const std::invalid_argument&) {
    throw FormatError(FormatError::Kind::Malformed, "bad number in meta.txt");
  } catch (const std::out_of_range&) {
    throw FormatError(FormatError::Kind::Malformed, "number out of range in meta.txt");
  }
  return d;
}

}  // namespace asvae
