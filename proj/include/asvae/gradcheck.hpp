// Central finite-difference validation of tape gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "asvae/autodiff.hpp"

namespace asvae {

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<double> max_rel_error;   // per parameter tensor
  std::vector<GradCheckEntry> flagged;  // entries above tolerance
  GradCheckEntry worst;

  bool passed() const noexcept { return flagged.empty(); }
  double worst_error() const noexcept { return worst.rel_error; }
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients of `loss_fn` against (f(p+h) - f(p-h)) / 2h for
/// every scalar in `params`.
///
/// `loss_fn(Tape&, std::span<const Var>) -> Var` receives the parameters bound
/// as leaves, in order, and must return a scalar. It has to be deterministic:
/// any random stream it uses must be rebuilt from fixed state on each call.
/// The loss is evaluated twice up front and the check aborts with a
/// StateError if the two values differ.
template <class LossFn>
GradCheckReport finite_diff_check(LossFn&& loss_fn, std::vector<Tensor> params, double h,
                                  double tol_rel) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    Tape tape(false);
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p, with_grad));
    Var out = loss_fn(tape, std::span<const Var>(leaves));
    const double value = out.value().item();
    if (with_grad) {
      tape.backward(out);
      for (Var leaf : leaves) {
        const Tensor& g = tape.grad(leaf);
        grads->push_back(g.empty() ? Tensor(leaf.value().shape()) : g);
      }
    }
    return value;
  };

  std::vector<Tensor> analytic;
  const double f0 = evaluate(true, &analytic);
  const double f1 = evaluate(false, nullptr);
  if (f0 != f1) {
    throw StateError("finite_diff_check: loss is not deterministic (" + std::to_string(f0) +
                     " vs " + std::to_string(f1) + ")");
  }

  GradCheckReport report;
  report.max_rel_error.assign(params.size(), 0.0);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double up = evaluate(false, nullptr);
      params[p][i] = saved - h;
      const double down = evaluate(false, nullptr);
      params[p][i] = saved;

      GradCheckEntry e{p, i, analytic[p][i], (up - down) / (2.0 * h), 0.0};
      e.rel_error = relative_error(e.analytic, e.numeric);
      report.max_rel_error[p] = std::max(report.max_rel_error[p], e.rel_error);
      if (e.rel_error > report.worst.rel_error) report.worst = e;
      if (e.rel_error > tol_rel) report.flagged.push_back(e);
    }
  }
  return report;
}

}  // namespace asvae
