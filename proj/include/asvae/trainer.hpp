// Alternating discriminator / generator training with Adam, validation,
// early stopping and resumable checkpoints.
#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asvae/checkpoint.hpp"
#include "asvae/config.hpp"
#include "asvae/objectives.hpp"
#include "asvae/optim.hpp"

namespace asvae {

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_index = 0;
};

/// Stops once the metric has gone `patience` consecutive validations without
/// a strict improvement over the best value so far.
inline EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience) {
  EarlyStopDecision d;
  if (history.empty()) return d;
  double best = history[0];
  std::size_t bad = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] < best) {
      best = history[i];
      d.best_index = i;
      bad = 0;
    } else if (++bad >= patience) {
      d.stop = true;
      return d;
    }
  }
  return d;
}

/// Running means of one epoch; components a mode does not produce are absent.
struct EpochMetrics {
  std::size_t epoch = 0;
  std::map<std::string, double> means;
  double val_recon = 0.0;
  double wall_seconds = 0.0;

  std::optional<double> get(const std::string& k) const {
    auto it = means.find(k);
    if (it == means.end()) return std::nullopt;
    return it->second;
  }
};

inline std::string metrics_csv_header() { return "epoch,total,recon_x,recon_z,adv_f1,adv_f2,val_recon,wall_seconds"; }

inline std::string metrics_csv_row(const EpochMetrics& m) {
  auto opt = [&](const char* k) {
    auto v = m.get(k);
    return v ? io::format_double(*v) : std::string();
  };
  return std::to_string(m.epoch) + "," + opt("total") + "," + opt("recon_x") + "," + opt("recon_z") + "," +
         opt("adv_f1") + "," + opt("adv_f2") + "," + io::format_double(m.val_recon) + "," +
         io::format_double(m.wall_seconds);
}

class Trainer {
 public:
  Trainer(TrainConfig cfg, Dataset data) : cfg_(std::move(cfg)), data_(std::move(data)) {
    validate(cfg_);
    if (data_.train_idx.size() < 2 * cfg_.batch_size) {
      throw ConfigError("batch_size", "training split has " + std::to_string(data_.train_idx.size()) +
                                          " rows; need at least 2 * batch_size");
    }
    if (data_.val_idx.empty()) throw ConfigError("val_fraction", "validation split is empty");
    const RngStream root(cfg_.seed);
    model_ = make_bundle(arch_for(cfg_, data_.data_dim()), root.fork(10));
    shuffle_ = root.fork(11);
    noise_ = root.fork(12);
    dropout_ = root.fork(13);
    gen_opt_ = Adam(cfg_.adam());
    disc_opt_ = Adam(cfg_.adam());
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  const Dataset& data() const noexcept { return data_; }
  const ModelBundle& model() const noexcept { return model_; }
  ModelBundle& model() noexcept { return model_; }
  std::size_t epoch() const noexcept { return epoch_; }
  double best_metric() const noexcept { return best_metric_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  bool stopped() const noexcept { return stopped_; }
  const std::vector<double>& val_history() const noexcept { return val_history_; }

  /// Discriminator phase: ascends the mode's discriminator objective.
  /// Returns its value.
  double discriminator_step(const Tensor& x, const Tensor& x_other) {
    const GroupMask groups = disc_groups(cfg_.mode);
    Tape tape;
    BoundModel bm = bind_model(tape, model_, groups, {&dropout_, true});
    const std::size_t n = x.rows();
    Var obj;
    if (cfg_.minmax_discriminator) {
      obj = minmax_discriminator_objective(bm, x, noise_, cfg_.adv_weight);
    } else {
      switch (cfg_.mode) {
        case TrainMode::Asvae:
          obj = adv_objective_a1(bm.disc1, sample_encoder_joint(bm, x, noise_), sample_product_pq(bm, n, noise_),
                                 bm.mode) +
                adv_objective_a2(bm.disc2, sample_decoder_joint(bm, n, noise_),
                                 sample_product_qq(bm, x, x_other, noise_), bm.mode);
          break;
        case TrainMode::AsvaeR:
          obj = adv_objective_a1(bm.disc1, sample_encoder_joint(bm, x, noise_), sample_product_pq(bm, n, noise_),
                                 bm.mode);
          break;
        case TrainMode::AsvaeG:
          obj = adv_objective_a2(bm.disc2, sample_decoder_joint(bm, n, noise_),
                                 sample_product_qq(bm, x, x_other, noise_), bm.mode);
          break;
        case TrainMode::Ali:
          obj = ali_loss(bm.disc1, sample_encoder_joint(bm, x, noise_), sample_decoder_joint(bm, n, noise_),
                         bm.mode);
          break;
        case TrainMode::Vae: throw StateError("vae mode has no discriminator phase");
      }
    }
    const double value = obj.value().item();
    tape.backward(neg(obj));
    step(disc_opt_, tape, bm, groups);
    return value;
  }

  /// Generator phase: descends the mode's generator loss over theta and phi.
  LossReport generator_step(const Tensor& x, Tape& tape) {
    BoundModel bm = bind_model(tape, model_, kGenerator, {&dropout_, true});
    LossReport r;
    switch (cfg_.mode) {
      case TrainMode::Asvae: r = asvae_generator_loss(bm, x, noise_, cfg_.adv_weight); break;
      case TrainMode::AsvaeR: r = asvae_r_loss(bm, x, noise_, cfg_.adv_weight); break;
      case TrainMode::AsvaeG: r = asvae_g_loss(bm, x.rows(), noise_, cfg_.adv_weight); break;
      case TrainMode::Vae: {
        r = elbo_vae(bm, x, noise_);
        r.total = neg(r.total);
        break;
      }
      case TrainMode::Ali: {
        Var l = ali_loss(bm.disc1, sample_encoder_joint(bm, x, noise_), sample_decoder_joint(bm, x.rows(), noise_),
                         bm.mode);
        r.total = l;
        r.components["ali"] = l.value().item();
        break;
      }
    }
    tape.backward(r.total);
    step(gen_opt_, tape, bm, kGenerator);
    r.components["total"] = r.value();
    return r;
  }

  /// One pass over the shuffled training split.
  EpochMetrics train_epoch() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = data_.train_idx.size();
    const std::size_t bs = cfg_.batch_size;
    const std::size_t nb = n / bs;
    const std::vector<std::size_t> perm = permutation(shuffle_, n);
    auto batch = [&](std::size_t b) {
      std::vector<std::size_t> rows(bs);
      for (std::size_t i = 0; i < bs; ++i) rows[i] = data_.train_idx[perm[b * bs + i]];
      return data_.features.gather_rows(rows);
    };
    EpochMetrics m;
    m.epoch = epoch_ + 1;
    for (std::size_t b = 0; b < nb; ++b) {
      const Tensor x = batch(b);
      if (cfg_.mode != TrainMode::Vae) {
        // Independent second batch for the product of marginals.
        const Tensor x_other = batch((b + 1) % nb);
        for (std::size_t s = 0; s < cfg_.disc_steps; ++s) m.means["disc_objective"] += discriminator_step(x, x_other);
      }
      Tape tape;
      LossReport r = generator_step(x, tape);
      if (!std::isfinite(r.value())) throw NumericError("generator loss is not finite at epoch " + std::to_string(m.epoch));
      for (const auto& [k, v] : r.components) m.means[k] += v;
    }
    for (auto& [k, v] : m.means) {
      v /= static_cast<double>(k == "disc_objective" ? nb * cfg_.disc_steps : nb);
    }
    m.val_recon = validation_metric(model_, data_.val_features(), cfg_.mode, RngStream(cfg_.seed).fork(1000 + m.epoch));
    ++epoch_;
    m.wall_seconds =
        cfg_.wall_clock ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
    return m;
  }

  /// Records a validation value; returns true when it is a new best.
  bool record_validation(double metric) {
    val_history_.push_back(metric);
    if (metric < best_metric_) {
      best_metric_ = metric;
      best_epoch_ = epoch_;
      bad_count_ = 0;
      return true;
    }
    if (++bad_count_ >= cfg_.patience) stopped_ = true;
    return false;
  }

  /// Mean of x- and z-reconstruction NLL on held-out rows (x only for modes
  /// without the z term). One draw per row.
  static double validation_metric(const ModelBundle& m, const Tensor& x_val, TrainMode mode, RngStream stream) {
    Tape tape(false);
    BoundModel bm = bind_model(tape, m, 0);
    Var x = tape.constant(x_val);
    DiagonalGaussian q = encoder_forward(bm, x);
    Var z = reparam_sample(q, sample_standard_normal(stream, q.mean.shape()));
    const double rx = -mean(decoder_log_prob(decoder_forward(bm, z), x)).value().item();
    if (!uses_z_recon(mode)) return rx;
    Var zp = tape.constant(sample_standard_normal(stream, {x_val.rows(), m.latent_dim}));
    Var xg = sample_decoder_output(decoder_forward(bm, zp), stream);
    const double rz = -mean(gaussian_log_prob(encoder_forward(bm, xg), zp)).value().item();
    return 0.5 * (rx + rz);
  }

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.config_text = config_text(cfg_);
    for (const NamedTensor& nt : const_cast<ModelBundle&>(model_).named_parameters()) {
      c.parameters.emplace_back(nt.name, *nt.tensor);
    }
    save_moments(c, "gen", gen_opt_, kGenerator);
    save_moments(c, "disc", disc_opt_, disc_groups(cfg_.mode));
    c.streams = {{"shuffle", shuffle_}, {"noise", noise_}, {"dropout", dropout_}};
    c.counters = {{"epoch", static_cast<double>(epoch_)},
                  {"gen_steps", static_cast<double>(gen_opt_.steps())},
                  {"disc_steps", static_cast<double>(disc_opt_.steps())},
                  {"best_epoch", static_cast<double>(best_epoch_)},
                  {"bad_count", static_cast<double>(bad_count_)},
                  {"stopped", stopped_ ? 1.0 : 0.0},
                  {"best_metric", best_metric_}};
    for (std::size_t i = 0; i < val_history_.size(); ++i) {
      c.counters.emplace_back("val." + std::to_string(i + 1), val_history_[i]);
    }
    return c;
  }

  /// Rebuilds a trainer from a checkpoint. `cfg` is normally the
  /// checkpoint's own config, possibly with a larger epoch budget; the
  /// dataset must match the checkpoint's data width.
  static Trainer resume(const Checkpoint& c, Dataset data) {
    return resume(c, config_from_text(c.config_text), std::move(data));
  }
  static Trainer resume(const Checkpoint& c, TrainConfig cfg, Dataset data) {
    Trainer t(std::move(cfg), std::move(data));
    for (NamedTensor& nt : t.model_.named_parameters()) {
      const Tensor& v = c.parameter(nt.name);
      if (v.shape() != nt.tensor->shape()) {
        throw ConfigError("dataset", "checkpoint tensor '" + nt.name + "' has shape " + shape_string(v.shape()) +
                                         ", model expects " + shape_string(nt.tensor->shape()));
      }
      *nt.tensor = v;
    }
    t.restore_moments(c, "gen", t.gen_opt_, kGenerator, static_cast<std::uint64_t>(c.counter("gen_steps")));
    t.restore_moments(c, "disc", t.disc_opt_, disc_groups(t.cfg_.mode),
                      static_cast<std::uint64_t>(c.counter("disc_steps")));
    t.shuffle_ = c.stream("shuffle");
    t.noise_ = c.stream("noise");
    t.dropout_ = c.stream("dropout");
    t.epoch_ = static_cast<std::size_t>(c.counter("epoch"));
    t.best_epoch_ = static_cast<std::size_t>(c.counter("best_epoch"));
    t.bad_count_ = static_cast<std::size_t>(c.counter("bad_count"));
    t.stopped_ = c.counter("stopped") != 0.0;
    t.best_metric_ = c.counter("best_metric");
    for (std::size_t i = 1; c.has_counter("val." + std::to_string(i)); ++i) {
      t.val_history_.push_back(c.counter("val." + std::to_string(i)));
    }
    return t;
  }

 private:
  void step(Adam& opt, const Tape& tape, const BoundModel& bm, GroupMask groups) {
    std::vector<Tensor*> params;
    std::vector<Tensor> grads;
    const MlpVars* vars[4] = {&bm.encoder, &bm.decoder, &bm.disc1, &bm.disc2};
    for (std::size_t gi = 0; gi < 4; ++gi) {
      const GroupMask g = ModelBundle::kGroups[gi];
      if (!(groups & g)) continue;
      Mlp& mlp = model_.group(g);
      for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        params.push_back(&mlp.layers[l].weight);
        params.push_back(&mlp.layers[l].bias);
        grads.push_back(grad_or_zero(tape, vars[gi]->weights[l]));
        grads.push_back(grad_or_zero(tape, vars[gi]->biases[l]));
      }
    }
    opt.step(params, grads);
  }

  static Tensor grad_or_zero(const Tape& tape, Var v) {
    const Tensor& g = tape.grad(v);
    return g.empty() ? Tensor(v.shape()) : g;
  }

  void save_moments(Checkpoint& c, const std::string& prefix, const Adam& opt, GroupMask groups) const {
    if (opt.steps() == 0) return;
    const auto names = const_cast<ModelBundle&>(model_).named_parameters(groups);
    for (std::size_t i = 0; i < names.size(); ++i) {
      c.moments.emplace_back(prefix + ".m." + names[i].name, opt.first_moments()[i]);
      c.moments.emplace_back(prefix + ".v." + names[i].name, opt.second_moments()[i]);
    }
  }

  void restore_moments(const Checkpoint& c, const std::string& prefix, Adam& opt, GroupMask groups,
                       std::uint64_t steps) {
    if (steps == 0) return;
    std::vector<Tensor> m, v;
    for (const NamedTensor& nt : model_.named_parameters(groups)) {
      m.push_back(c.moment(prefix + ".m." + nt.name));
      v.push_back(c.moment(prefix + ".v." + nt.name));
    }
    opt.restore(std::move(m), std::move(v), steps);
  }

  TrainConfig cfg_;
  Dataset data_;
  ModelBundle model_;
  RngStream shuffle_, noise_, dropout_;
  Adam gen_opt_, disc_opt_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_count_ = 0;
  bool stopped_ = false;
  double best_metric_ = std::numeric_limits<double>::infinity();
  std::vector<double> val_history_;
};

/// The model stored in a checkpoint, for a dataset of width `data_dim`.
inline ModelBundle model_from_checkpoint(const Checkpoint& c, const TrainConfig& cfg, std::size_t data_dim) {
  ModelBundle m = make_bundle(arch_for(cfg, data_dim), RngStream(0));
  for (NamedTensor& nt : m.named_parameters()) {
    const Tensor& v = c.parameter(nt.name);
    if (v.shape() != nt.tensor->shape()) {
      throw ConfigError("dataset", "checkpoint tensor '" + nt.name + "' has shape " + shape_string(v.shape()) +
                                       ", model expects " + shape_string(nt.tensor->shape()));
    }
    *nt.tensor = v;
  }
  return m;
}

struct RunOptions {
  std::filesystem::path run_dir;
  /// Called after each epoch with the row just written.
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Trains until max_epochs or early stop, writing metrics.csv, last.ckpt,
/// best.ckpt and config.resolved.txt into the run directory. On a non-finite
/// loss the current state is saved to abort.ckpt and the NumericError is
/// rethrown.
inline void run_training(Trainer& t, const RunOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(opt.run_dir);
  io::write_text(opt.run_dir / "config.resolved.txt", config_text(t.config()));
  const fs::path metrics = opt.run_dir / "metrics.csv";
  std::string csv;
  csv = metrics_csv_header() + "\n";
  if (t.epoch() > 0 && fs::exists(metrics)) {
    // Keep the rows up to the resumed epoch.
    const io::Bytes b = io::read_file(metrics);
    std::istringstream in(std::string(b.begin(), b.end()));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoull(line.substr(0, line.find(','))) > t.epoch()) break;
      csv += line + "\n";
    }
  }
  while (t.epoch() < t.config().max_epochs && !t.stopped()) {
    EpochMetrics m;
    try {
      m = t.train_epoch();
    } catch (const NumericError&) {
      save_checkpoint(opt.run_dir / "abort.ckpt", t.checkpoint());
      throw;
    }
    const bool best = t.record_validation(m.val_recon);
    csv += metrics_csv_row(m) + "\n";
    io::write_text(metrics, csv);
    const Checkpoint c = t.checkpoint();
    save_checkpoint(opt.run_dir / "last.ckpt", c);
    if (best) save_checkpoint(opt.run_dir / "best.ckpt", c);
    if (opt.on_epoch) opt.on_epoch(m);
  }
}

}  // namespace asvae
