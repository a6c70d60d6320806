// Command-line front end: train, eval, sample, verify, gradcheck,
// make-dataset and train-classifier.
//
// Exit codes: 0 ok, 1 check failed, 2 numerical abort, 3 I/O or file
// format, 4 config or contract.
#pragma once

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asvae/classifier.hpp"
#include "asvae/config.hpp"
#include "asvae/discrete_oracle.hpp"
#include "asvae/evaluation.hpp"
#include "asvae/loss_gradcheck.hpp"
#include "asvae/trainer.hpp"

namespace asvae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitConfig = 4;

namespace fs = std::filesystem;

struct TrainArgs {
  std::optional<std::string> config_path;
  std::optional<std::string> checkpoint;
  std::optional<std::string> run_dir;
  std::vector<std::string> settings;  // key=value
  // Flag name -> config key, in the order they are applied.
  std::vector<std::pair<std::string, std::optional<std::string>>> flags = {
      {"mode", {}},       {"dataset", {}},       {"seed", {}},          {"max_epochs", {}},
      {"batch_size", {}}, {"latent_dim", {}},    {"learning_rate", {}}, {"disc_steps", {}},
  };
};

struct EvalArgs {
  std::string checkpoint;
  std::optional<std::string> dataset;
  std::optional<std::string> classifier;
  std::optional<std::string> out;
  std::size_t k_samples = 64;
  std::size_t n_generated = 1000;
  std::uint64_t seed = 0;
  bool discretized = false;
};

struct SampleArgs {
  std::string checkpoint;
  std::optional<std::string> out;
  std::size_t n = 64;
  std::size_t cols = 0;
  std::uint64_t seed = 0;
};

struct DatasetArgs {
  std::string dataset = "mixture2d";
  std::string out;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  double val_fraction = kDefaultValFraction;
  int mixture_k = 8;
  double separation = 4.0;
};

struct ClassifierArgs {
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
};

inline fs::path default_run_dir() {
  if (const char* env = std::getenv("ASVAE_RUN_DIR"); env != nullptr && *env != '\0') return env;
  return "run";
}

inline std::string read_text(const fs::path& p) {
  const io::Bytes b = io::read_file(p);
  return std::string(b.begin(), b.end());
}

/// defaults < config file < --set < named flags.
inline TrainConfig resolve_config(TrainConfig base, const TrainArgs& a) {
  if (a.config_path) apply_text(base, read_text(*a.config_path));
  for (const std::string& kv : a.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(kv, "--set expects key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_setting(base, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  for (const auto& [key, value] : a.flags) {
    if (value) apply_setting(base, key, *value);
  }
  validate(base);
  return base;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  const fs::path run_dir = a.run_dir ? fs::path(*a.run_dir) : default_run_dir();
  std::optional<Checkpoint> resume;
  TrainConfig cfg;
  if (a.checkpoint) {
    resume = load_checkpoint(*a.checkpoint);
    // The checkpoint's config replaces the defaults; flags still apply.
    cfg = resolve_config(config_from_text(resume->config_text), a);
  } else {
    cfg = resolve_config(TrainConfig{}, a);
  }
  Dataset data = load_dataset(cfg);
  Trainer t = resume ? Trainer::resume(*resume, cfg, std::move(data)) : Trainer(cfg, std::move(data));
  RunOptions opt;
  opt.run_dir = run_dir;
  opt.on_epoch = [&](const EpochMetrics& m) {
    out << "epoch " << m.epoch << " total " << io::format_double(m.get("total").value_or(NAN)) << " val_recon "
        << io::format_double(m.val_recon) << "\n";
  };
  run_training(t, opt);
  out << "done: " << t.epoch() << " epochs, best epoch " << t.best_epoch() << " (val_recon "
      << io::format_double(t.best_metric()) << "), run dir " << run_dir.string() << "\n";
  return kExitOk;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  TrainConfig cfg = config_from_text(ck.config_text);
  if (a.dataset) cfg.dataset = *a.dataset;
  const Dataset data = load_dataset(cfg);
  const ModelBundle m = model_from_checkpoint(ck, cfg, data.data_dim());
  const Tensor x = data.val_features();
  const RngStream root(a.seed);
  const bool unit = data.scale == ScaleKind::UnitInterval;

  if (a.discretized) {
    if (m.likelihood != Likelihood::Gaussian) {
      throw ContractError("discretized NLL is unsupported for a bernoulli decoder");
    }
    if (!unit) throw ContractError("discretized NLL needs unit-interval (image-like) data");
  }

  EvalReport r;
  r.checkpoint = a.checkpoint;
  r.dataset = cfg.dataset;
  r.mode = mode_name(cfg.mode);
  r.k_samples = a.k_samples;
  r.n_samples = x.rows();
  r.seed = a.seed;
  RngStream s_nll = root.fork(1);
  const MeanSe nll = nll_bound(m, x, a.k_samples, s_nll);
  r.nll_nats = nll.mean;
  r.nll_se = nll.std_error;
  if (unit && m.likelihood == Likelihood::Gaussian) {
    RngStream s_deq = root.fork(2), s_bpd = root.fork(3);
    const Tensor y = dequantize(to_pixels(x), s_deq);
    r.bits_per_dim = bits_per_dim(-nll_bound(m, y, a.k_samples, s_bpd).mean, data.data_dim());
  }
  if (a.discretized) {
    RngStream s = root.fork(4);
    r.discretized_nll = discretized_nll_bound(m, to_pixels(x), a.k_samples, s).mean;
  }
  r.rmse = rmse_reconstruction(m, x, unit ? 255.0 : 1.0);
  if (data.labeled()) {
    std::optional<Classifier> c;
    if (a.classifier) {
      c = classifier_from_checkpoint(load_checkpoint(*a.classifier));
    } else {
      try {
        c = train_toy_classifier(data, {}, root.fork(5));
      } catch (const NumericError& e) {
        err << "classifier score skipped: " << e.what() << "\n";
      }
    }
    if (c) {
      if (c->net.input_width() != data.data_dim()) throw ConfigError("classifier", "classifier input width differs from the data");
      RngStream s = root.fork(6);
      r.classifier_score = classifier_score(m, a.n_generated, *c, s);
    }
  }
  if (data.data_dim() == 2) {
    RngStream s = root.fork(7);
    r.grid_sym_kl = grid_symmetric_kl(generate_samples(m, x.rows(), s), x);
  }

  const fs::path csv = a.out ? fs::path(*a.out) : fs::path(a.checkpoint).parent_path() / "eval.csv";
  std::string text = fs::exists(csv) ? read_text(csv) : EvalReport::csv_header() + "\n";
  text += r.csv_row() + "\n";
  io::write_text(csv, text);
  out << EvalReport::csv_header() << "\n" << r.csv_row() << "\n";
  return kExitOk;
}

inline int cmd_sample(const SampleArgs& a, std::ostream& out) {
  if (a.n == 0) throw ContractError("--n must be >= 1");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const TrainConfig cfg = config_from_text(ck.config_text);
  const Dataset data = load_dataset(cfg);
  const ModelBundle m = model_from_checkpoint(ck, cfg, data.data_dim());
  RngStream s = RngStream(a.seed).fork(1);
  const Tensor x = generate_samples(m, a.n, s, true);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(data.data_dim()))));
  const bool image = data.scale == ScaleKind::UnitInterval && side * side == data.data_dim() && side > 1;
  const fs::path dir = fs::path(a.checkpoint).parent_path();
  fs::path path;
  if (image) {
    path = a.out ? fs::path(*a.out) : dir / "samples.pgm";
    const std::size_t cols =
        a.cols ? a.cols : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(a.n))));
    io::write_image_grid(path, x, cols);
  } else {
    path = a.out ? fs::path(*a.out) : dir / "samples.csv";
    std::string text;
    for (std::size_t j = 0; j < x.cols(); ++j) text += (j ? ",x" : "x") + std::to_string(j);
    text += "\n";
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) text += (j ? "," : "") + io::format_double(x.at(i, j));
      text += "\n";
    }
    io::write_text(path, text);
  }
  out << "wrote " << a.n << " samples to " << path.string() << "\n";
  return kExitOk;
}

inline int cmd_verify(const oracle::VerifyOptions& opt, std::ostream& out) {
  const oracle::VerifyReport r = oracle::run_verification(opt);
  out << std::left << std::setw(46) << "check" << std::setw(26) << "max_residual" << "status\n";
  for (const auto& c : r.checks) {
    out << std::left << std::setw(46) << c.name << std::setw(26) << io::format_double(c.max_residual)
        << (c.passed ? "pass" : "FAIL") << "\n";
  }
  out << "tolerance " << io::format_double(opt.tolerance) << ", " << opt.trials << " trials, |X|=" << opt.nx
      << " |Z|=" << opt.nz << ", " << std::fixed << std::setprecision(3) << r.seconds << " s\n";
  out.unsetf(std::ios::fixed);
  return r.all_passed() ? kExitOk : kExitCheckFailed;
}

inline int cmd_gradcheck(const LossCheckOptions& opt, std::ostream& out) {
  const auto results = run_loss_gradchecks(opt);
  bool ok = true;
  out << std::left << std::setw(12) << "loss" << std::setw(10) << "params" << std::setw(26) << "worst_rel_error"
      << "status\n";
  for (const auto& r : results) {
    out << std::left << std::setw(12) << r.loss << std::setw(10) << r.n_params << std::setw(26)
        << io::format_double(r.worst_rel_error) << (r.passed ? "pass" : "FAIL") << "\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

inline int cmd_make_dataset(const DatasetArgs& a, std::ostream& out) {
  Dataset d;
  if (a.dataset == "mixture2d") {
    d = gen_mixture2d(a.mixture_k, a.separation, a.n, a.seed, a.val_fraction);
  } else if (a.dataset == "digits") {
    d = gen_toy_digits(a.n, a.seed, 0.05, a.val_fraction);
  } else if (a.dataset == "lingauss") {
    d = gen_linear_gaussian(a.n, a.seed, {}, a.val_fraction);
  } else {
    throw ConfigError("dataset", "unknown built-in dataset '" + a.dataset + "'");
  }
  save_dataset_dir(a.out, d, a.val_fraction, a.seed);
  out << "wrote " << d.size() << " rows of " << d.name << " to " << a.out << "\n";
  return kExitOk;
}

inline int cmd_train_classifier(const ClassifierArgs& a, std::ostream& out) {
  TrainConfig cfg;
  cfg.dataset = a.dataset;
  const Dataset d = load_dataset(cfg);
  const Classifier c = train_toy_classifier(d, {}, RngStream(a.seed));
  save_checkpoint(a.out, classifier_checkpoint(c));
  out << "held-out accuracy " << io::format_double(c.val_accuracy) << ", saved to " << a.out << "\n";
  return kExitOk;
}

/// Parses `args` (without the program name) and runs one command.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Adversarial symmetric VAE lab"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model; writes metrics.csv and checkpoints to the run dir");
  train->add_option("--config", ta.config_path, "key = value config file");
  train->add_option("--checkpoint", ta.checkpoint, "resume from this checkpoint");
  train->add_option("--run-dir", ta.run_dir, "output directory (default $ASVAE_RUN_DIR or ./run)");
  train->add_option("--set", ta.settings, "override any config key: key=value");
  const char* flag_names[] = {"--mode",       "--dataset",    "--seed",          "--epochs",
                              "--batch-size", "--latent-dim", "--learning-rate", "--disc-steps"};
  for (std::size_t i = 0; i < ta.flags.size(); ++i) train->add_option(flag_names[i], ta.flags[i].second);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its dataset's validation split");
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--dataset", ea.dataset);
  eval->add_option("--k-samples", ea.k_samples);
  eval->add_option("--n-generated", ea.n_generated);
  eval->add_option("--classifier", ea.classifier, "classifier checkpoint (trained on the fly if absent)");
  eval->add_option("--seed", ea.seed);
  eval->add_option("--out", ea.out, "CSV to append to (default eval.csv next to the checkpoint)");
  eval->add_flag("--discretized", ea.discretized, "also report the discretized-likelihood bound");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "draw from p(z) and write decoder means");
  sample->add_option("--checkpoint", sa.checkpoint)->required();
  sample->add_option("--n", sa.n);
  sample->add_option("--cols", sa.cols);
  sample->add_option("--seed", sa.seed);
  sample->add_option("--out", sa.out);

  oracle::VerifyOptions vo;
  auto* verify = app.add_subcommand("verify", "check the discrete equilibrium identities");
  verify->add_option("--trials", vo.trials);
  verify->add_option("--tolerance", vo.tolerance);
  verify->add_option("--nx", vo.nx);
  verify->add_option("--nz", vo.nz);
  verify->add_option("--perturbations", vo.perturbations);
  verify->add_option("--seed", vo.seed);

  LossCheckOptions go;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  gradcheck->add_option("--seed", go.seed);
  gradcheck->add_option("--tolerance", go.tolerance);
  gradcheck->add_flag("--corrupt-gradient", go.corrupt_gradient)->group("");

  DatasetArgs da;
  auto* make = app.add_subcommand("make-dataset", "write a built-in dataset as a dataset directory");
  make->add_option("--dataset", da.dataset);
  make->add_option("--out", da.out)->required();
  make->add_option("--n", da.n);
  make->add_option("--seed", da.seed);
  make->add_option("--val-fraction", da.val_fraction);
  make->add_option("--mixture-k", da.mixture_k);
  make->add_option("--separation", da.separation);

  ClassifierArgs ca;
  auto* cls = app.add_subcommand("train-classifier", "train the scoring classifier on a labeled dataset");
  cls->add_option("--dataset", ca.dataset)->required();
  cls->add_option("--out", ca.out)->required();
  cls->add_option("--seed", ca.seed);

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(ta, out);
    if (*eval) return cmd_eval(ea, out, err);
    if (*sample) return cmd_sample(sa, out);
    if (*verify) return cmd_verify(vo, out);
    if (*gradcheck) return cmd_gradcheck(go, out);
    if (*make) return cmd_make_dataset(da, out);
    if (*cls) return cmd_train_classifier(ca, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace asvae::cli
