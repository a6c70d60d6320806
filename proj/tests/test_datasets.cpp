#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "asvae/classifier.hpp"
#include "asvae/datasets.hpp"
#include "test_support.hpp"

using namespace asvae;

TEST(Split, DisjointCoveringAndSeeded) {
  Dataset d = gen_mixture2d(4, 2.0, 101, 3, 0.2);
  EXPECT_EQ(d.val_idx.size(), 20u);
  EXPECT_EQ(d.train_idx.size(), 81u);
  std::set<std::size_t> all(d.train_idx.begin(), d.train_idx.end());
  all.insert(d.val_idx.begin(), d.val_idx.end());
  EXPECT_EQ(all.size(), 101u);
  EXPECT_TRUE(std::is_sorted(d.val_idx.begin(), d.val_idx.end()));
  Dataset e = gen_mixture2d(4, 2.0, 101, 3, 0.2);
  EXPECT_EQ(d.val_idx, e.val_idx);
  split_dataset(e, 0.2, 4);
  EXPECT_NE(d.val_idx, e.val_idx);
  EXPECT_THROW(split_dataset(e, 1.0, 0), ContractError);
}

TEST(Mixture, ComponentMomentsMatchDefinition) {
  const int k = 8;
  const double sep = 4.0;
  const Dataset d = gen_mixture2d(k, sep, 40000, 1);
  for (int c : {0, 3}) {
    const auto mu = mixture_center(c, k, sep);
    double mx = 0, my = 0, vx = 0;
    int n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.labels[i] != c) continue;
      mx += d.features.at(i, 0);
      my += d.features.at(i, 1);
      vx += (d.features.at(i, 0) - mu[0]) * (d.features.at(i, 0) - mu[0]);
      ++n;
    }
    EXPECT_EQ(n, 5000);
    EXPECT_NEAR(mx / n, mu[0], 0.03);
    EXPECT_NEAR(my / n, mu[1], 0.03);
    EXPECT_NEAR(vx / n, 0.05 * sep, 0.02);
  }
  EXPECT_NEAR(mixture_center(2, 8, 4.0)[1], 4.0, 1e-15);
}

TEST(Mixture, Validation) {
  EXPECT_THROW(gen_mixture2d(0, 1.0, 10, 0), ContractError);
  EXPECT_THROW(gen_mixture2d(8, 1.0, 4, 0), ContractError);
}

TEST(Digits, TemplatesAreDistinctBinaryGlyphs) {
  std::set<std::vector<double>> seen;
  for (int d = 0; d < 10; ++d) {
    const auto t = digit_template(d);
    ASSERT_EQ(t.size(), 64u);
    for (double v : t) EXPECT_TRUE(v == 0.0 || v == 1.0);
    seen.insert(t);
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_THROW(digit_template(10), std::out_of_range);
}

TEST(Digits, FlipRateIsRespected) {
  const Dataset d = gen_toy_digits(2000, 5, 0.1);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto t = digit_template(d.labels[i]);
    for (std::size_t p = 0; p < 64; ++p) flips += d.features.at(i, p) != t[p];
  }
  EXPECT_NEAR(static_cast<double>(flips) / (2000.0 * 64.0), 0.1, 0.005);
  EXPECT_EQ(d.scale, ScaleKind::UnitInterval);
}

TEST(LinearGaussianData, MarginalMoments) {
  const LinearGaussian lg;
  const Dataset d = gen_linear_gaussian(50000, 2, lg);
  double m = 0, v = 0;
  for (double x : d.features.data()) m += x;
  m /= 50000.0;
  for (double x : d.features.data()) v += (x - m) * (x - m);
  v /= 50000.0;
  EXPECT_NEAR(m, lg.bias, 0.02);
  EXPECT_NEAR(v, lg.marginal_variance(), 0.03);
}

TEST(LinearGaussianData, PosteriorByBayesRule) {
  const LinearGaussian lg{2.0, -1.0, 0.7};
  const double x = 0.4;
  const auto [pm, pv] = lg.posterior(x);
  // Completing the square directly: precision 1 + w^2/s^2.
  const double prec = 1.0 + lg.weight * lg.weight / (lg.noise_std * lg.noise_std);
  EXPECT_NEAR(pv, 1.0 / prec, 1e-15);
  EXPECT_NEAR(pm, (lg.weight * (x - lg.bias) / (lg.noise_std * lg.noise_std)) / prec, 1e-15);
}

TEST(DatasetDir, RoundTrip) {
  const auto dir = asvae::testing::temp_dir("dataset_dir");
  const Dataset d = gen_toy_digits(200, 9);
  save_dataset_dir(dir, d, 0.25, 11);
  const Dataset e = load_dataset_dir(dir);
  EXPECT_EQ(e.name, "digits");
  EXPECT_EQ(e.features, d.features);
  EXPECT_EQ(e.labels, d.labels);
  EXPECT_EQ(e.scale, ScaleKind::UnitInterval);
  EXPECT_EQ(e.val_idx.size(), 50u);
}

TEST(DatasetDir, BadMetaIsNamed) {
  const auto dir = asvae::testing::temp_dir("dataset_bad");
  save_dataset_dir(dir, gen_mixture2d(2, 1.0, 20, 0), 0.1, 0);
  io::write_text(dir / "meta.txt", "name=x\nnum_classes=two\n");
  EXPECT_THROW(load_dataset_dir(dir), FormatError);
  io::write_text(dir / "meta.txt", "name=x\nnum_classes=1\n");
  EXPECT_THROW(load_dataset_dir(dir), FormatError);
  io::write_text(dir / "meta.txt", "just words\n");
  EXPECT_THROW(load_dataset_dir(dir), FormatError);
  std::filesystem::remove(dir / "features.atns");
  EXPECT_THROW(load_dataset_dir(dir), FormatError);
}

TEST(KeyValues, CommentsAndWhitespace) {
  const auto kv = parse_key_values("# header\n a = 1 \nb=two # trailing\n\n");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two");
  EXPECT_EQ(kv.size(), 2u);
}

TEST(Classifier, CrossEntropyMatchesDirect) {
  Tape t;
  Var l = t.constant(Tensor::matrix({{1.0, 2.0, 3.0}, {1000.0, 0.0, -1000.0}}));
  const std::vector<int> y{2, 1};
  const double v = cross_entropy(l, y).value().item();
  const double a = -(3.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  EXPECT_NEAR(v, (a + 1000.0) / 2.0, 1e-12);
}

class ToyClassifier : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new Dataset(gen_toy_digits(2000, 1));
    clf_ = new Classifier(train_toy_classifier(*data_, {}, RngStream(3)));
  }
  static void TearDownTestSuite() {
    delete clf_;
    delete data_;
  }
  static Dataset* data_;
  static Classifier* clf_;
};
Dataset* ToyClassifier::data_ = nullptr;
Classifier* ToyClassifier::clf_ = nullptr;

TEST_F(ToyClassifier, ReachesAccuracyFloor) { EXPECT_GE(clf_->val_accuracy, 0.95); }

TEST_F(ToyClassifier, TemplatesClassifiedPerfectly) {
  Tensor x(Shape{10, 64});
  std::vector<int> y(10);
  for (int d = 0; d < 10; ++d) {
    const auto t = digit_template(d);
    for (std::size_t p = 0; p < 64; ++p) x.at(static_cast<std::size_t>(d), p) = t[p];
    y[static_cast<std::size_t>(d)] = d;
  }
  EXPECT_EQ(classifier_accuracy(*clf_, x, y), 1.0);
}

TEST_F(ToyClassifier, ProbabilityRowsSumToOne) {
  const Tensor p = classifier_probs(*clf_, data_->val_features());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < p.cols(); ++j) s += p.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST_F(ToyClassifier, CheckpointRoundTrip) {
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(classifier_checkpoint(*clf_)));
  const Classifier c = classifier_from_checkpoint(ck);
  EXPECT_EQ(c.net.layers[1].weight, clf_->net.layers[1].weight);
  EXPECT_EQ(c.val_accuracy, clf_->val_accuracy);
  EXPECT_EQ(classifier_probs(c, data_->val_features()), classifier_probs(*clf_, data_->val_features()));
}

TEST(Classifier, FloorMissIsNumericError) {
  const Dataset d = gen_toy_digits(500, 2);
  ClassifierConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train_toy_classifier(d, cfg, RngStream(1)), NumericError);
  EXPECT_THROW(classifier_probs(Classifier{}, d.features), StateError);
  EXPECT_THROW(train_toy_classifier(gen_linear_gaussian(100, 1), {}, RngStream(1)), ContractError);
}
