#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "asvae/datasets.hpp"
#include "asvae/networks.hpp"

namespace asvae::testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("asvae_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Width-1 MLP whose hidden layer is the identity (leaky slope 1), so the
/// network is the affine map x -> x * w + b per output.
inline Mlp affine_mlp(std::size_t in, std::vector<double> w, std::vector<double> b) {
  const std::size_t out = b.size();
  Mlp m = zero_mlp(MlpSpec{{in, 1, out}, Activation::Leaky, 1.0, 0.0});
  m.layers[0].weight = Tensor(Shape{in, 1}, 1.0);
  m.layers[1].weight = Tensor(Shape{1, out}, std::move(w));
  m.layers[1].bias = Tensor(Shape{out}, std::move(b));
  return m;
}

/// Linear-Gaussian model z ~ N(0,1), x | z ~ N(w z + b, s^2) with encoder
/// q(z|x) = N(c (x - b), v). With exact = true the encoder is the true
/// posterior; otherwise it is deliberately off.
inline ModelBundle linear_gaussian_bundle(const LinearGaussian& lg, bool exact = true) {
  const auto [mean_coef_x, post_var] = [&] {
    const double mv = lg.marginal_variance();
    return std::pair{lg.weight / mv, lg.noise_std * lg.noise_std / mv};
  }();
  const double c = exact ? mean_coef_x : 0.7 * mean_coef_x;
  const double v = exact ? post_var : 2.0 * post_var;
  ModelBundle m;
  m.data_dim = 1;
  m.latent_dim = 1;
  m.likelihood = Likelihood::Gaussian;
  m.encoder = affine_mlp(1, {c, 0.0}, {-c * lg.bias, std::log(v)});
  m.decoder = affine_mlp(1, {lg.weight, 0.0}, {lg.bias, std::log(lg.noise_std * lg.noise_std)});
  ArchSpec a;
  a.data_dim = 1;
  a.latent_dim = 1;
  a.hidden_width = 4;
  a.hidden_layers = 1;
  RngStream s(3);
  m.disc1 = xavier_init(discriminator_spec(a), s);
  m.disc2 = xavier_init(discriminator_spec(a), s);
  return m;
}

}  // namespace asvae::testing
