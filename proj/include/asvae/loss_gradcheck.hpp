// Finite-difference checks of every training loss on a tiny model. Each loss
// is checked only against the groups it trains: the discriminator objectives
// against psi, the generator losses against theta and phi.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "asvae/gradcheck.hpp"
#include "asvae/objectives.hpp"

namespace asvae {

struct LossCheckResult {
  std::string loss;
  GroupMask groups = 0;
  double worst_rel_error = 0.0;
  std::size_t n_params = 0;
  bool passed = false;
};

struct LossCheckOptions {
  std::uint64_t seed = 7;
  std::size_t batch = 4;
  std::size_t hidden_width = 5;
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Test hook: adds +1 to every analytic gradient without changing the loss value.
  bool corrupt_gradient = false;
};

namespace detail {

/// Binds `m` with the groups in `mask` taken from `leaves` (named_parameters
/// order) and the rest as constants.
inline BoundModel bind_mixed(Tape& tape, const ModelBundle& m, GroupMask mask, std::span<const Var> leaves) {
  BoundModel bm{&m, &tape, {}, {}, {}, {}, {}};
  MlpVars* slots[4] = {&bm.encoder, &bm.decoder, &bm.disc1, &bm.disc2};
  std::size_t next = 0;
  for (std::size_t gi = 0; gi < 4; ++gi) {
    const GroupMask g = ModelBundle::kGroups[gi];
    const Mlp& mlp = m.group(g);
    if (mask & g) {
      *slots[gi] = mlp_vars_from(mlp, leaves.subspan(next, 2 * mlp.layers.size()));
      next += 2 * mlp.layers.size();
    } else {
      *slots[gi] = bind_mlp(tape, mlp, false);
    }
  }
  return bm;
}

}  // namespace detail

using LossBuilder = std::function<Var(const BoundModel&, RngStream&)>;

struct NamedLoss {
  std::string name;
  GroupMask groups;
  LossBuilder build;
};

/// The losses exercised by the check, given two fixed data batches.
inline std::vector<NamedLoss> gradcheck_losses(const Tensor& x, const Tensor& x_other) {
  const std::size_t n = x.rows();
  return {
      {"elbo", kGenerator, [x](const BoundModel& bm, RngStream& s) { return elbo_vae(bm, x, s).total; }},
      {"adv_a1", kDisc1,
       [x, n](const BoundModel& bm, RngStream& s) {
         PairBatch real = sample_encoder_joint(bm, x, s);
         return adv_objective_a1(bm.disc1, real, sample_product_pq(bm, n, s));
       }},
      {"adv_a2", kDisc2,
       [x, x_other, n](const BoundModel& bm, RngStream& s) {
         PairBatch real = sample_decoder_joint(bm, n, s);
         return adv_objective_a2(bm.disc2, real, sample_product_qq(bm, x, x_other, s));
       }},
      {"asvae", kGenerator,
       [x](const BoundModel& bm, RngStream& s) { return asvae_generator_loss(bm, x, s).total; }},
      {"asvae-r", kGenerator, [x](const BoundModel& bm, RngStream& s) { return asvae_r_loss(bm, x, s).total; }},
      {"asvae-g", kGenerator, [n](const BoundModel& bm, RngStream& s) { return asvae_g_loss(bm, n, s).total; }},
      {"ali", kGenerator | kDisc1,
       [x, n](const BoundModel& bm, RngStream& s) {
         PairBatch real = sample_encoder_joint(bm, x, s);
         return ali_loss(bm.disc1, real, sample_decoder_joint(bm, n, s));
       }},
  };
}

inline std::vector<LossCheckResult> run_loss_gradchecks(const LossCheckOptions& opt) {
  ArchSpec arch;
  arch.data_dim = 2;
  arch.latent_dim = 2;
  arch.hidden_width = opt.hidden_width;
  arch.hidden_layers = 1;
  RngStream root(opt.seed);
  const ModelBundle m = make_bundle(arch, root.fork(1));
  RngStream data = root.fork(2);
  const Tensor x = sample_standard_normal(data, {opt.batch, 2});
  const Tensor x_other = sample_standard_normal(data, {opt.batch, 2});

  std::vector<LossCheckResult> out;
  for (const NamedLoss& loss : gradcheck_losses(x, x_other)) {
    const GroupMask groups = loss.groups;
    std::vector<Tensor> params = m.parameter_values(groups);
    const std::uint64_t noise_seed = opt.seed + 101;
    auto fn = [&](Tape& tape, std::span<const Var> leaves) {
      RngStream s(noise_seed);
      BoundModel bm = detail::bind_mixed(tape, m, groups, leaves);
      Var v = loss.build(bm, s);
      if (opt.corrupt_gradient) {
        for (Var leaf : leaves) v = v + sum(leaf - tape.detach(leaf));
      }
      return v;
    };
    const GradCheckReport r = finite_diff_check(fn, params, opt.step, opt.tolerance);
    LossCheckResult res;
    res.loss = loss.name;
    res.groups = groups;
    res.worst_rel_error = r.worst_error();
    for (const Tensor& p : params) res.n_params += p.size();
    res.passed = r.passed();
    out.push_back(res);
  }
  return out;
}

}  // namespace asvae
