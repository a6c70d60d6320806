#include <gtest/gtest.h>

#include <cmath>

#include "asvae/discrete_oracle.hpp"

using namespace asvae;
using namespace asvae::oracle;

namespace {

double js_divergence(const CategoricalJoint& p, const CategoricalJoint& q) {
  double s = 0;
  for (std::size_t i = 0; i < p.table().values().size(); ++i) {
    const double a = p.table().values()[i], b = q.table().values()[i], m = 0.5 * (a + b);
    s += 0.5 * a * std::log(a / m) + 0.5 * b * std::log(b / m);
  }
  return s;
}

}  // namespace

TEST(Joint, Validation) {
  EXPECT_THROW(CategoricalJoint(Table(0, 3)), DimensionError);
  Table t(1, 2);
  t(0, 0) = 0.5;
  t(0, 1) = 0.4;
  EXPECT_THROW(CategoricalJoint{t}, DomainError);
  t(0, 1) = 0.5;
  EXPECT_NO_THROW(CategoricalJoint{t});
  t(0, 0) = 0.0;
  t(0, 1) = 1.0;
  EXPECT_THROW(CategoricalJoint{t}, DomainError);
}

TEST(Joint, ProductHasGivenMarginals) {
  const auto j = CategoricalJoint::product({0.2, 0.8}, {0.1, 0.3, 0.6});
  const Marginals m = marginals(j);
  EXPECT_NEAR(m.x[1], 0.8, 1e-15);
  EXPECT_NEAR(m.z[2], 0.6, 1e-15);
  EXPECT_NEAR(j(1, 2), 0.48, 1e-15);
}

TEST(Joint, RandomJointRespectsFloor) {
  RngStream s(2);
  const auto j = random_joint(s, 5, 4);
  for (double v : j.table().values()) EXPECT_GE(v, kMinProbability);
}

TEST(Discriminator, ClosedFormMatchesSearch) {
  RngStream s(3);
  for (int k = 0; k < 20; ++k) {
    const auto p = random_joint(s, 3, 4), q = random_joint(s, 3, 4);
    const auto a = optimal_discriminator_closed_form(p, q), b = optimal_discriminator_brute(p, q);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(a.logits.values()[i], b.logits.values()[i], 1e-10);
  }
}

TEST(Discriminator, OptimumValueIsShiftedJensenShannon) {
  RngStream s(4);
  const auto p = random_joint(s, 4, 3), q = random_joint(s, 4, 3);
  const double v = gan_objective_exact(p, q, optimal_discriminator_closed_form(p, q));
  EXPECT_NEAR(v, 2.0 * js_divergence(p, q) - std::log(4.0), 1e-12);
}

TEST(Discriminator, CellSearchRejectsZeroWeight) {
  EXPECT_THROW(maximize_cell_logit(0.0, 1.0), DomainError);
  EXPECT_NEAR(maximize_cell_logit(3.0, 1.0), std::log(3.0), 1e-12);
}

TEST(Kl, ZeroOnlyForEqualJoints) {
  RngStream s(5);
  const auto p = random_joint(s, 4, 3), q = random_joint(s, 4, 3);
  EXPECT_EQ(kl(p, p), 0.0);
  EXPECT_GT(kl(p, q), 0.0);
}

TEST(Functional, ZeroDiscriminatorsGiveConditionalLogLikelihoods) {
  RngStream s(6);
  const auto p = random_joint(s, 3, 2), q = random_joint(s, 3, 2);
  const DiscriminatorTable zero{Table(3, 2)};
  const Marginals pm = marginals(p), qm = marginals(q);
  double expect = 0;
  for (std::size_t x = 0; x < 3; ++x) {
    for (std::size_t z = 0; z < 2; ++z) {
      expect += q(x, z) * std::log(p(x, z) / pm.z[z]) + p(x, z) * std::log(q(x, z) / qm.x[x]);
    }
  }
  EXPECT_NEAR(functional_eval(p, q, zero, zero), expect, 1e-13);
}

TEST(Functional, ShapeMismatchRejected) {
  RngStream s(6);
  const auto p = random_joint(s, 3, 2), q = random_joint(s, 2, 3);
  const DiscriminatorTable zero{Table(3, 2)};
  EXPECT_THROW(functional_eval(p, q, zero, zero), DimensionError);
}

TEST(Decomposition, IdentityHoldsAndVanishesAtEquality) {
  RngStream s(7);
  const auto p = random_joint(s, 5, 4), q = random_joint(s, 5, 4);
  const Decomposition d = symmetric_decomposition(p, q);
  EXPECT_LT(d.residual(), 1e-12);
  EXPECT_GT(d.kl_sum(), 0.0);
  const Decomposition e = symmetric_decomposition(p, p);
  EXPECT_LT(std::abs(e.kl_sum()), 1e-15);
}

TEST(Verification, DefaultRunPasses) {
  const VerifyReport r = run_verification({});
  ASSERT_EQ(r.checks.size(), 8u);
  for (const auto& c : r.checks) EXPECT_TRUE(c.passed) << c.name << " " << c.max_residual;
  EXPECT_TRUE(r.all_passed());
}

TEST(Verification, ZeroToleranceFails) {
  VerifyOptions o;
  o.trials = 5;
  o.tolerance = 0.0;
  EXPECT_FALSE(run_verification(o).all_passed());
}

TEST(Verification, DeterministicForSeed) {
  VerifyOptions o;
  o.trials = 10;
  const auto a = run_verification(o), b = run_verification(o);
  for (std::size_t i = 0; i < a.checks.size(); ++i) EXPECT_EQ(a.checks[i].max_residual, b.checks[i].max_residual);
}
