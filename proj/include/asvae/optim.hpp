// Adam with bias-corrected moments.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "asvae/errors.hpp"
#include "asvae/tensor.hpp"

namespace asvae {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update at step t >= 1, in place.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      std::span<double> m, std::span<double> v, const AdamConfig& cfg,
                      std::uint64_t t) {
  if (t == 0) throw ContractError("adam_step: t starts at 1");
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw DimensionError("adam_step: buffer sizes differ");
  }
  using Arr = Eigen::Array<double, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(params.size());
  Eigen::Map<Arr> p(params.data(), n), mm(m.data(), n), vv(v.data(), n);
  Eigen::Map<const Arr> g(grads.data(), n);

  const double td = static_cast<double>(t);
  const double c1 = 1.0 - std::pow(cfg.beta1, td);
  const double c2 = 1.0 - std::pow(cfg.beta2, td);
  mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * g;
  vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * g.square();
  p -= cfg.learning_rate * (mm / c1) / ((vv / c2).sqrt() + cfg.epsilon);
}

/// Adam over a fixed list of parameter tensors sharing one step counter.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw DimensionError("Adam: params and grads differ in count");
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    if (m_.size() != params.size()) throw StateError("Adam: parameter list changed between steps");
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_step(params[i]->data(), grads[i].data(), m_[i].data(), v_[i].data(), cfg_, t_);
    }
  }

  /// Restores moments and step count (checkpoint resume).
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::uint64_t t) {
    if (m.size() != v.size()) throw StateError("Adam: moment lists differ in length");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace asvae
