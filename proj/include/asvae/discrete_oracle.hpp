// Exact checks of the adversarial-VAE theory on finite X x Z spaces.
//
// Every expectation is an explicit sum over a probability table, so the
// optimal-discriminator results and the symmetric-KL decomposition can be
// verified to rounding error. p_joint plays p_theta(x,z) = p(z) p(x|z) and
// q_joint plays q_phi(x,z) = q(x) q(z|x).
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "asvae/autodiff.hpp"
#include "asvae/errors.hpp"
#include "asvae/rng.hpp"

namespace asvae::oracle {

/// Dense |X| x |Z| matrix.
class Table {
 public:
  Table() = default;
  Table(std::size_t nx, std::size_t nz, double fill = 0.0) : nx_(nx), nz_(nz), v_(nx * nz, fill) {}

  std::size_t nx() const noexcept { return nx_; }
  std::size_t nz() const noexcept { return nz_; }
  double& operator()(std::size_t x, std::size_t z) { return v_[x * nz_ + z]; }
  double operator()(std::size_t x, std::size_t z) const { return v_[x * nz_ + z]; }
  const std::vector<double>& values() const noexcept { return v_; }

  bool same_shape(const Table& o) const noexcept { return nx_ == o.nx_ && nz_ == o.nz_; }

 private:
  std::size_t nx_ = 0;
  std::size_t nz_ = 0;
  std::vector<double> v_;
};

inline constexpr double kMinProbability = 1e-9;

/// Strictly positive probability table summing to one.
class CategoricalJoint {
 public:
  explicit CategoricalJoint(Table t) : t_(std::move(t)) {
    if (t_.nx() == 0 || t_.nz() == 0) throw DimensionError("empty joint table");
    double s = 0.0;
    for (double v : t_.values()) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError("joint table entries must be strictly positive, got " + std::to_string(v));
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw DomainError("joint table sums to " + std::to_string(s));
  }

  /// a(x) b(z).
  static CategoricalJoint product(const std::vector<double>& a, const std::vector<double>& b) {
    Table t(a.size(), b.size());
    for (std::size_t x = 0; x < a.size(); ++x) {
      for (std::size_t z = 0; z < b.size(); ++z) t(x, z) = a[x] * b[z];
    }
    return CategoricalJoint(normalized(std::move(t)));
  }

  /// Rescales a positive table to sum to one.
  static Table normalized(Table t) {
    double s = 0.0;
    for (double v : t.values()) s += v;
    for (std::size_t x = 0; x < t.nx(); ++x) {
      for (std::size_t z = 0; z < t.nz(); ++z) t(x, z) /= s;
    }
    return t;
  }

  const Table& table() const noexcept { return t_; }
  double operator()(std::size_t x, std::size_t z) const { return t_(x, z); }
  std::size_t nx() const noexcept { return t_.nx(); }
  std::size_t nz() const noexcept { return t_.nz(); }

 private:
  Table t_;
};

/// Logits f(x, z) of a discriminator on the finite space.
struct DiscriminatorTable {
  Table logits;
};

struct Marginals {
  std::vector<double> x;
  std::vector<double> z;
};

inline Marginals marginals(const CategoricalJoint& j) {
  Marginals m{std::vector<double>(j.nx(), 0.0), std::vector<double>(j.nz(), 0.0)};
  for (std::size_t x = 0; x < j.nx(); ++x) {
    for (std::size_t z = 0; z < j.nz(); ++z) {
      m.x[x] += j(x, z);
      m.z[z] += j(x, z);
    }
  }
  return m;
}

inline double kl(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * (std::log(a[i]) - std::log(b[i]));
  return s;
}

inline double kl(const CategoricalJoint& a, const CategoricalJoint& b) {
  return kl(a.table().values(), b.table().values());
}

namespace detail {
inline void require_same_shape(const Table& a, const Table& b, const char* who) {
  if (!a.same_shape(b)) throw DimensionError(std::string(who) + ": table shapes differ");
}
}  // namespace detail

/// sum p log sigma(f) + q log(1 - sigma(f)).
inline double gan_objective_exact(const CategoricalJoint& p, const CategoricalJoint& q,
                                  const DiscriminatorTable& f) {
  detail::require_same_shape(p.table(), q.table(), "gan_objective_exact");
  detail::require_same_shape(p.table(), f.logits, "gan_objective_exact");
  double s = 0.0;
  for (std::size_t x = 0; x < p.nx(); ++x) {
    for (std::size_t z = 0; z < p.nz(); ++z) {
      const double l = f.logits(x, z);
      s += -p(x, z) * softplus(-l) - q(x, z) * softplus(l);
    }
  }
  return s;
}

/// f*(x,z) = log p(x,z) - log q(x,z).
inline DiscriminatorTable optimal_discriminator_closed_form(const CategoricalJoint& p,
                                                           const CategoricalJoint& q) {
  detail::require_same_shape(p.table(), q.table(), "optimal_discriminator_closed_form");
  DiscriminatorTable f{Table(p.nx(), p.nz())};
  for (std::size_t x = 0; x < p.nx(); ++x) {
    for (std::size_t z = 0; z < p.nz(); ++z) f.logits(x, z) = std::log(p(x, z)) - std::log(q(x, z));
  }
  return f;
}

/// argmax over f of a log sigma(f) + b log(1 - sigma(f)), found numerically:
/// the derivative a sigma(-f) - b sigma(f) is strictly decreasing, so its root
/// is bracketed and bisected to the last representable step.
inline double maximize_cell_logit(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("cell maximization needs positive weights");
  auto slope = [&](double f) { return a * sigmoid(-f) - b * sigmoid(f); };
  double lo = -1.0, hi = 1.0;
  while (slope(lo) < 0.0) lo *= 2.0;
  while (slope(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (slope(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Per-cell maximizer D* = p / (p + q) found by scalar search, reported as a
/// logit table. Independent of the closed form.
inline DiscriminatorTable optimal_discriminator_brute(const CategoricalJoint& p,
                                                     const CategoricalJoint& q) {
  detail::require_same_shape(p.table(), q.table(), "optimal_discriminator_brute");
  DiscriminatorTable f{Table(p.nx(), p.nz())};
  for (std::size_t x = 0; x < p.nx(); ++x) {
    for (std::size_t z = 0; z < p.nz(); ++z) f.logits(x, z) = maximize_cell_logit(p(x, z), q(x, z));
  }
  return f;
}

struct ProductTargets {
  DiscriminatorTable f1;  // log q(x,z) - log p(x) p(z)
  DiscriminatorTable f2;  // log p(x,z) - log q(x) q(z)
};

/// Optimal logits of the two product-distribution discriminators.
inline ProductTargets product_targets(const CategoricalJoint& q_joint,
                                          const CategoricalJoint& p_joint) {
  detail::require_same_shape(q_joint.table(), p_joint.table(), "product_targets");
  const Marginals pm = marginals(p_joint);
  const Marginals qm = marginals(q_joint);
  ProductTargets t{{Table(q_joint.nx(), q_joint.nz())}, {Table(q_joint.nx(), q_joint.nz())}};
  for (std::size_t x = 0; x < q_joint.nx(); ++x) {
    for (std::size_t z = 0; z < q_joint.nz(); ++z) {
      t.f1.logits(x, z) = std::log(q_joint(x, z)) - std::log(pm.x[x]) - std::log(pm.z[z]);
      t.f2.logits(x, z) = std::log(p_joint(x, z)) - std::log(qm.x[x]) - std::log(qm.z[z]);
    }
  }
  return t;
}

/// S = sum q(x,z)[log p(x|z) - f1] + sum p(x,z)[log q(z|x) - f2] for
/// arbitrary discriminator tables.
inline double functional_eval(const CategoricalJoint& p_joint, const CategoricalJoint& q_joint,
                              const DiscriminatorTable& f1, const DiscriminatorTable& f2) {
  detail::require_same_shape(p_joint.table(), q_joint.table(), "functional_eval");
  detail::require_same_shape(p_joint.table(), f1.logits, "functional_eval");
  detail::require_same_shape(p_joint.table(), f2.logits, "functional_eval");
  const Marginals pm = marginals(p_joint);
  const Marginals qm = marginals(q_joint);
  double s = 0.0;
  for (std::size_t x = 0; x < p_joint.nx(); ++x) {
    for (std::size_t z = 0; z < p_joint.nz(); ++z) {
      const double log_p_x_given_z = std::log(p_joint(x, z)) - std::log(pm.z[z]);
      const double log_q_z_given_x = std::log(q_joint(x, z)) - std::log(qm.x[x]);
      s += q_joint(x, z) * (log_p_x_given_z - f1.logits(x, z));
      s += p_joint(x, z) * (log_q_z_given_x - f2.logits(x, z));
    }
  }
  return s;
}

/// S at the optimal discriminators, next to the four KL terms it
/// decomposes into.
struct Decomposition {
  double kl_pq = 0.0;     // KL(p_joint || q_joint)
  double kl_qp = 0.0;     // KL(q_joint || p_joint)
  double kl_qx_px = 0.0;  // KL(q(x) || p(x))
  double kl_pz_qz = 0.0;  // KL(p(z) || q(z))
  double constants = 0.0;  // E_q(x) log q(x) + E_p(z) log p(z)
  double objective_exact = 0.0;

  double kl_sum() const noexcept { return kl_pq + kl_qp + kl_qx_px + kl_pz_qz; }
  /// |S - (constants - kl_sum)|.
  double residual() const noexcept { return std::abs(objective_exact + kl_sum() - constants); }
};

inline Decomposition symmetric_decomposition(const CategoricalJoint& p_joint,
                                             const CategoricalJoint& q_joint) {
  const Marginals pm = marginals(p_joint);
  const Marginals qm = marginals(q_joint);
  Decomposition d;
  d.kl_pq = kl(p_joint, q_joint);
  d.kl_qp = kl(q_joint, p_joint);
  d.kl_qx_px = kl(qm.x, pm.x);
  d.kl_pz_qz = kl(pm.z, qm.z);
  for (double v : qm.x) d.constants += v * std::log(v);
  for (double v : pm.z) d.constants += v * std::log(v);
  const ProductTargets t = product_targets(q_joint, p_joint);
  d.objective_exact = functional_eval(p_joint, q_joint, t.f1, t.f2);
  return d;
}

/// Uniform(0,1) entries plus a floor, renormalized; min entry stays >= 1e-9.
inline CategoricalJoint random_joint(RngStream& stream, std::size_t nx, std::size_t nz) {
  Table t(nx, nz);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t z = 0; z < nz; ++z) t(x, z) = stream.uniform() + 1e-3;
  }
  return CategoricalJoint(CategoricalJoint::normalized(std::move(t)));
}

/// Discrete model usable with estimate_vaexz: q(x) and q(z|x) from q_joint,
/// p(z) and p(x|z) from p_joint, plus two discriminator tables.
class CategoricalModel {
 public:
  CategoricalModel(CategoricalJoint p_joint, CategoricalJoint q_joint, DiscriminatorTable f1,
                   DiscriminatorTable f2)
      : p_(std::move(p_joint)), q_(std::move(q_joint)), f1_(std::move(f1)), f2_(std::move(f2)),
        pm_(marginals(p_)), qm_(marginals(q_)) {
    detail::require_same_shape(p_.table(), q_.table(), "CategoricalModel");
    detail::require_same_shape(p_.table(), f1_.logits, "CategoricalModel");
    detail::require_same_shape(p_.table(), f2_.logits, "CategoricalModel");
  }

  std::size_t sample_data(RngStream& s) const { return draw(s, [&](std::size_t x) { return qm_.x[x]; }, p_.nx()); }
  std::size_t sample_prior(RngStream& s) const { return draw(s, [&](std::size_t z) { return pm_.z[z]; }, p_.nz()); }
  std::size_t sample_encoder(std::size_t x, RngStream& s) const {
    return draw(s, [&](std::size_t z) { return q_(x, z) / qm_.x[x]; }, p_.nz());
  }
  std::size_t sample_decoder(std::size_t z, RngStream& s) const {
    return draw(s, [&](std::size_t x) { return p_(x, z) / pm_.z[z]; }, p_.nx());
  }
  double log_decoder(std::size_t x, std::size_t z) const { return std::log(p_(x, z)) - std::log(pm_.z[z]); }
  double log_encoder(std::size_t z, std::size_t x) const { return std::log(q_(x, z)) - std::log(qm_.x[x]); }
  double f1(std::size_t x, std::size_t z) const { return f1_.logits(x, z); }
  double f2(std::size_t x, std::size_t z) const { return f2_.logits(x, z); }

 private:
  template <class Prob>
  static std::size_t draw(RngStream& s, Prob prob, std::size_t n) {
    const double u = s.uniform();
    double c = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      c += prob(i);
      if (u < c) return i;
    }
    return n - 1;
  }

  CategoricalJoint p_, q_;
  DiscriminatorTable f1_, f2_;
  Marginals pm_, qm_;
};

// ---------------------------------------------------------------------------
// Verification suite

struct IdentityCheck {
  std::string name;
  double max_residual = 0.0;
  bool passed = false;
};

struct VerifyReport {
  std::vector<IdentityCheck> checks;
  double seconds = 0.0;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const IdentityCheck& c) { return c.passed; });
  }
};

struct VerifyOptions {
  std::size_t nx = 4;
  std::size_t nz = 3;
  std::size_t trials = 100;
  std::size_t perturbations = 100;
  double tolerance = 1e-8;
  std::uint64_t seed = 1;
};

namespace detail {

inline double max_abs_diff(const Table& a, const Table& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

/// Largest improvement any random perturbation of f achieves over f itself
/// (zero when f is optimal).
inline double perturbation_gain(const CategoricalJoint& p, const CategoricalJoint& q,
                                const DiscriminatorTable& f, std::size_t count, RngStream& s) {
  const double base = gan_objective_exact(p, q, f);
  double gain = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    DiscriminatorTable g = f;
    const double step = 0.5 * s.uniform();
    for (std::size_t x = 0; x < p.nx(); ++x) {
      for (std::size_t z = 0; z < p.nz(); ++z) g.logits(x, z) += step * s.normal();
    }
    gain = std::max(gain, gan_objective_exact(p, q, g) - base);
  }
  return gain;
}

}  // namespace detail

/// Runs every identity check over `trials` random table pairs. A check passes
/// when its worst residual is strictly below the tolerance.
inline VerifyReport run_verification(const VerifyOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  RngStream stream(opt.seed);
  double disc_form = 0, disc_opt = 0, prod_f1 = 0, prod_f2 = 0, prod_opt = 0, sym_identity = 0,
         equilibrium = 0, kl_negative = 0;

  for (std::size_t t = 0; t < opt.trials; ++t) {
    const CategoricalJoint p = random_joint(stream, opt.nx, opt.nz);
    const CategoricalJoint q = random_joint(stream, opt.nx, opt.nz);

    // optimal joint discriminator
    const DiscriminatorTable closed = optimal_discriminator_closed_form(p, q);
    disc_form = std::max(disc_form, detail::max_abs_diff(closed.logits,
                                                           optimal_discriminator_brute(p, q).logits));
    disc_opt = std::max(disc_opt, detail::perturbation_gain(p, q, closed, opt.perturbations, stream));

    // product discriminators with p_joint = p, q_joint = q
    const Marginals pm = marginals(p);
    const Marginals qm = marginals(q);
    const CategoricalJoint p_product = CategoricalJoint::product(pm.x, pm.z);
    const CategoricalJoint q_product = CategoricalJoint::product(qm.x, qm.z);
    const ProductTargets ct = product_targets(q, p);
    prod_f1 = std::max(prod_f1, detail::max_abs_diff(ct.f1.logits,
                                                   optimal_discriminator_brute(q, p_product).logits));
    prod_f2 = std::max(prod_f2, detail::max_abs_diff(ct.f2.logits,
                                                   optimal_discriminator_brute(p, q_product).logits));
    prod_opt = std::max(prod_opt, detail::perturbation_gain(q, p_product, ct.f1, opt.perturbations, stream));
    prod_opt = std::max(prod_opt, detail::perturbation_gain(p, q_product, ct.f2, opt.perturbations, stream));

    // symmetric KL identity
    const Decomposition d = symmetric_decomposition(p, q);
    sym_identity = std::max(sym_identity, d.residual());
    for (double v : {d.kl_pq, d.kl_qp, d.kl_qx_px, d.kl_pz_qz}) kl_negative = std::max(kl_negative, -v);

    // Equilibrium: p_joint = q_joint
    const Decomposition eq = symmetric_decomposition(p, p);
    equilibrium = std::max({equilibrium, std::abs(eq.kl_pq), std::abs(eq.kl_qp),
                            std::abs(eq.kl_qx_px), std::abs(eq.kl_pz_qz), eq.residual()});
    const DiscriminatorTable eq_closed = optimal_discriminator_closed_form(p, p);
    const DiscriminatorTable eq_brute = optimal_discriminator_brute(p, p);
    for (const DiscriminatorTable* f : {&eq_closed, &eq_brute}) {
      for (double v : f->logits.values()) equilibrium = std::max(equilibrium, std::abs(v));
    }
  }

  VerifyReport r;
  auto add = [&](const char* name, double residual) {
    r.checks.push_back({name, residual, residual < opt.tolerance});
  };
  add("discriminator.closed_form_vs_brute_force", disc_form);
  add("discriminator.optimal_under_perturbation", disc_opt);
  add("product_disc.f1_closed_form_vs_brute_force", prod_f1);
  add("product_disc.f2_closed_form_vs_brute_force", prod_f2);
  add("product_disc.optimal_under_perturbation", prod_opt);
  add("symmetric_kl.identity", sym_identity);
  add("symmetric_kl.zero_at_matched_joints", equilibrium);
  add("kl.non_negativity", kl_negative);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace asvae::oracle
