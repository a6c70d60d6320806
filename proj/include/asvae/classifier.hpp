// Small softmax MLP used for the classifier score on labeled toy data.
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "asvae/checkpoint.hpp"
#include "asvae/datasets.hpp"
#include "asvae/networks.hpp"
#include "asvae/optim.hpp"

namespace asvae {

struct ClassifierConfig {
  std::size_t hidden_width = 64;
  std::size_t epochs = 30;
  std::size_t batch_size = 50;
  double learning_rate = 1e-2;
  double min_accuracy = 0.95;
};

struct Classifier {
  Mlp net;
  std::size_t num_classes = 0;
  double val_accuracy = 0.0;

  bool trained() const { return num_classes > 0 && !net.layers.empty(); }
};

/// Rows of class probabilities p(y|x), [n, K].
inline Tensor classifier_probs(const Classifier& c, const Tensor& x) {
  if (!c.trained()) throw StateError("classifier has not been trained");
  Tape tape(false);
  Var logits = mlp_forward(bind_mlp(tape, c.net, false), tape.constant(x));
  Tensor p = logits.value();
  const std::size_t k = p.cols();
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double mx = p.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, p.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p.at(i, j) = std::exp(p.at(i, j) - mx));
    for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= z;
  }
  return p;
}

inline double classifier_accuracy(const Classifier& c, const Tensor& x, std::span<const int> labels) {
  const Tensor p = classifier_probs(c, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < p.cols(); ++j) {
      if (p.at(i, j) > p.at(i, best)) best = j;
    }
    hits += static_cast<int>(best) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(p.rows());
}

/// Mean cross-entropy of logits [B,K] against integer labels.
inline Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& tape = *logits.tape();
  const Tensor& lv = logits.value();
  const std::size_t b = lv.rows(), k = lv.cols();
  Tensor shift(lv.shape()), onehot(lv.shape());
  for (std::size_t i = 0; i < b; ++i) {
    double mx = lv.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv.at(i, j));
    for (std::size_t j = 0; j < k; ++j) shift.at(i, j) = mx;
    onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  Var shifted = logits - tape.constant(std::move(shift));
  Var lse = log(row_sum(exp(shifted)));
  Var picked = row_sum(shifted * tape.constant(std::move(onehot)));
  return mean(lse - picked);
}

/// Trains on the dataset's train split and checks accuracy on its
/// validation split. Throws NumericError when the accuracy floor is missed.
inline Classifier train_toy_classifier(const Dataset& d, const ClassifierConfig& cfg, RngStream stream) {
  if (!d.labeled() || d.num_classes < 2) throw ContractError("classifier needs a labeled dataset with >= 2 classes");
  if (d.train_idx.empty() || d.val_idx.empty()) throw ContractError("classifier needs train and validation rows");
  Classifier c;
  c.num_classes = static_cast<std::size_t>(d.num_classes);
  const MlpSpec spec{{d.data_dim(), cfg.hidden_width, c.num_classes}, Activation::Tanh, 0.2, 0.0};
  RngStream init = stream.fork(1);
  RngStream shuffle = stream.fork(2);
  c.net = xavier_init(spec, init);
  Adam opt(AdamConfig{cfg.learning_rate});

  const std::size_t n = d.train_idx.size();
  const std::size_t bs = std::min(cfg.batch_size, n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> perm = permutation(shuffle, n);
    for (std::size_t start = 0; start + bs <= n; start += bs) {
      std::vector<std::size_t> rows(bs);
      std::vector<int> y(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        rows[i] = d.train_idx[perm[start + i]];
        y[i] = d.labels[rows[i]];
      }
      Tape tape;
      MlpVars vars = bind_mlp(tape, c.net, true);
      Var loss = cross_entropy(mlp_forward(vars, tape.constant(d.features.gather_rows(rows))), y);
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (std::size_t l = 0; l < vars.weights.size(); ++l) {
        grads.push_back(tape.grad(vars.weights[l]));
        grads.push_back(tape.grad(vars.biases[l]));
      }
      opt.step(c.net.parameters(), grads);
    }
  }

  std::vector<int> val_labels;
  for (std::size_t i : d.val_idx) val_labels.push_back(d.labels[i]);
  c.val_accuracy = classifier_accuracy(c, d.val_features(), val_labels);
  if (c.val_accuracy < cfg.min_accuracy) {
    std::ostringstream msg;
    msg << "classifier reached " << c.val_accuracy << " held-out accuracy, below the floor of "
        << cfg.min_accuracy << " (" << cfg.epochs << " epochs, lr " << cfg.learning_rate << ")";
    throw NumericError(msg.str());
  }
  return c;
}

inline Checkpoint classifier_checkpoint(const Classifier& c) {
  Checkpoint ck;
  std::ostringstream cfg;
  cfg << "kind = classifier\nnum_classes = " << c.num_classes << "\nwidths =";
  for (std::size_t w : c.net.spec.widths) cfg << " " << w;
  cfg << "\n";
  ck.config_text = cfg.str();
  for (std::size_t l = 0; l < c.net.layers.size(); ++l) {
    ck.parameters.emplace_back("classifier." + std::to_string(l) + ".weight", c.net.layers[l].weight);
    ck.parameters.emplace_back("classifier." + std::to_string(l) + ".bias", c.net.layers[l].bias);
  }
  ck.counters.emplace_back("val_accuracy", c.val_accuracy);
  return ck;
}

inline Classifier classifier_from_checkpoint(const Checkpoint& ck) {
  const auto kv = parse_key_values(ck.config_text);
  auto it = kv.find("kind");
  if (it == kv.end() || it->second != "classifier") {
    throw FormatError(FormatError::Kind::Malformed, "checkpoint does not hold a classifier");
  }
  Classifier c;
  c.num_classes = std::stoul(kv.at("num_classes"));
  MlpSpec spec{{}, Activation::Tanh, 0.2, 0.0};
  std::istringstream ws(kv.at("widths"));
  for (std::size_t w; ws >> w;) spec.widths.push_back(w);
  c.net = zero_mlp(spec);
  for (std::size_t l = 0; l < c.net.layers.size(); ++l) {
    c.net.layers[l].weight = ck.parameter("classifier." + std::to_string(l) + ".weight");
    c.net.layers[l].bias = ck.parameter("classifier." + std::to_string(l) + ".bias");
  }
  c.val_accuracy = ck.counter("val_accuracy");
  return c;
}

}  // namespace asvae
