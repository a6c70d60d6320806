#include <gtest/gtest.h>

#include <vector>

#include "asvae/checkpoint.hpp"
#include "asvae/trainer.hpp"
#include "test_support.hpp"

using namespace asvae;

namespace {

TrainConfig small_config(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.dataset_n = 400;
  c.batch_size = 32;
  c.hidden_width = 16;
  c.max_epochs = 3;
  c.learning_rate = 1e-3;
  c.seed = 5;
  return c;
}

Trainer make_trainer(const TrainConfig& c) { return Trainer(c, load_dataset(c)); }

std::vector<Tensor> snapshot(ModelBundle& m, GroupMask groups) {
  std::vector<Tensor> out;
  for (const NamedTensor& nt : m.named_parameters(groups)) out.push_back(*nt.tensor);
  return out;
}

}  // namespace

TEST(EarlyStop, PatienceCountsNonImprovingValidations) {
  const std::vector<double> h{5, 4, 4, 4, 4};
  const EarlyStopDecision d = early_stop(h, 3);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best_index, 1u);
  const std::vector<double> falling{5, 4, 3, 2, 1, 0};
  EXPECT_FALSE(early_stop(falling, 1).stop);
  EXPECT_FALSE(early_stop(std::vector<double>{5, 4, 4, 4}, 3).stop);
}

TEST(Trainer, RecordValidationMatchesEarlyStop) {
  TrainConfig c = small_config(TrainMode::Vae);
  c.patience = 3;
  Trainer t = make_trainer(c);
  for (double v : {5.0, 4.0, 4.0, 4.0}) t.record_validation(v);
  EXPECT_FALSE(t.stopped());
  t.record_validation(4.0);
  EXPECT_TRUE(t.stopped());
  EXPECT_EQ(t.best_metric(), 4.0);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUntouched) {
  for (TrainMode mode : {TrainMode::Vae, TrainMode::Asvae}) {
    TrainConfig c = small_config(mode);
    c.learning_rate = 0.0;
    Trainer t = make_trainer(c);
    const auto before = snapshot(t.model(), kAllGroups);
    t.train_epoch();
    EXPECT_EQ(snapshot(t.model(), kAllGroups), before) << mode_name(mode);
  }
}

TEST(Trainer, PhasesTouchOnlyTheirOwnGroups) {
  Trainer t = make_trainer(small_config(TrainMode::Asvae));
  const Tensor x = t.data().features.gather_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  const Tensor x2 = t.data().features.gather_rows(std::vector<std::size_t>{8, 9, 10, 11, 12, 13, 14, 15});
  const GroupMask disc = disc_groups(TrainMode::Asvae);

  auto gen = snapshot(t.model(), kGenerator);
  auto dis = snapshot(t.model(), disc);
  t.discriminator_step(x, x2);
  EXPECT_EQ(snapshot(t.model(), kGenerator), gen);
  EXPECT_NE(snapshot(t.model(), disc), dis);

  gen = snapshot(t.model(), kGenerator);
  dis = snapshot(t.model(), disc);
  Tape tape;
  t.generator_step(x, tape);
  EXPECT_EQ(snapshot(t.model(), disc), dis);
  EXPECT_NE(snapshot(t.model(), kGenerator), gen);
}

TEST(Trainer, SameSeedIsBitReproducible) {
  const TrainConfig c = small_config(TrainMode::Asvae);
  Trainer a = make_trainer(c);
  Trainer b = make_trainer(c);
  for (int e = 0; e < 2; ++e) {
    EXPECT_EQ(metrics_csv_row(a.train_epoch()), metrics_csv_row(b.train_epoch()));
  }
  EXPECT_EQ(encode_checkpoint(a.checkpoint()), encode_checkpoint(b.checkpoint()));
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  for (TrainMode mode : {TrainMode::Asvae, TrainMode::AsvaeR, TrainMode::Vae}) {
    const TrainConfig c = small_config(mode);
    Trainer full = make_trainer(c);
    for (int e = 0; e < 3; ++e) {
      full.record_validation(full.train_epoch().val_recon);
    }

    Trainer first = make_trainer(c);
    first.record_validation(first.train_epoch().val_recon);
    const Checkpoint ck = decode_checkpoint(encode_checkpoint(first.checkpoint()));
    Trainer second = Trainer::resume(ck, load_dataset(c));
    EXPECT_EQ(second.epoch(), 1u);
    for (int e = 0; e < 2; ++e) second.record_validation(second.train_epoch().val_recon);

    EXPECT_EQ(encode_checkpoint(second.checkpoint()), encode_checkpoint(full.checkpoint())) << mode_name(mode);
  }
}

TEST(Trainer, RunTrainingWritesArtifactsAndResumes) {
  const auto dir = asvae::testing::temp_dir("run_training");
  TrainConfig c = small_config(TrainMode::AsvaeG);
  Trainer t = make_trainer(c);
  run_training(t, {dir / "full", {}});
  for (const char* f : {"metrics.csv", "last.ckpt", "best.ckpt", "config.resolved.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "full" / f)) << f;
  }
  const io::Bytes full_metrics = io::read_file(dir / "full" / "metrics.csv");

  TrainConfig short_cfg = c;
  short_cfg.max_epochs = 1;
  Trainer s = make_trainer(short_cfg);
  run_training(s, {dir / "split", {}});
  Trainer r = Trainer::resume(load_checkpoint(dir / "split" / "last.ckpt"), c, load_dataset(c));
  run_training(r, {dir / "split", {}});
  EXPECT_EQ(io::read_file(dir / "split" / "last.ckpt"), io::read_file(dir / "full" / "last.ckpt"));
  EXPECT_EQ(io::read_file(dir / "split" / "metrics.csv"), full_metrics);
}

TEST(Trainer, NonFiniteLossWritesAbortCheckpoint) {
  const auto dir = asvae::testing::temp_dir("abort");
  TrainConfig c = small_config(TrainMode::Vae);
  c.learning_rate = 1e200;
  Trainer t = make_trainer(c);
  EXPECT_THROW(run_training(t, {dir, {}}), NumericError);
  EXPECT_TRUE(std::filesystem::exists(dir / "abort.ckpt"));
  EXPECT_NO_THROW(load_checkpoint(dir / "abort.ckpt"));
}

TEST(Trainer, VaeBoundImprovesOnLinearGaussian) {
  TrainConfig c = small_config(TrainMode::Vae);
  c.dataset = "lingauss";
  c.latent_dim = 1;
  c.dataset_n = 2000;
  Trainer t = make_trainer(c);
  const double first = t.train_epoch().get("total").value();
  double last = first;
  for (int e = 0; e < 9; ++e) last = t.train_epoch().get("total").value();
  // total is the negative bound
  EXPECT_LT(last, first - 0.1);
}

TEST(Trainer, RejectsTinyTrainingSplit) {
  TrainConfig c = small_config(TrainMode::Vae);
  c.batch_size = 256;
  EXPECT_THROW(make_trainer(c), ConfigError);
}

TEST(Config, UnknownKeyAndBadValues) {
  TrainConfig c;
  EXPECT_THROW(apply_setting(c, "learning_rat", "0.1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "batch_size", "many"), ConfigError);
  EXPECT_THROW(apply_setting(c, "mode", "gan"), ConfigError);
  c.learning_rate = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = TrainConfig{};
  c.mode = TrainMode::Asvae;
  c.dataset = "digits";
  EXPECT_THROW(validate(c), ConfigError);
  c.mode = TrainMode::AsvaeR;
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, TextRoundTrip) {
  TrainConfig c;
  apply_text(c, "# comment\nmode = asvae-r\nlearning_rate = 0.00025\nseed = 9\nminmax_discriminator = true\n");
  EXPECT_EQ(c.mode, TrainMode::AsvaeR);
  EXPECT_EQ(c.learning_rate, 0.00025);
  EXPECT_EQ(config_from_text(config_text(c)), c);
}

TEST(Metrics, CsvRowLeavesAbsentComponentsEmpty) {
  EpochMetrics m;
  m.epoch = 2;
  m.means = {{"total", 1.5}, {"recon_x", 0.5}};
  m.val_recon = 0.25;
  EXPECT_EQ(metrics_csv_row(m), "2,1.5,0.5,,,,0.25,0");
  EXPECT_EQ(metrics_csv_header(), "epoch,total,recon_x,recon_z,adv_f1,adv_f2,val_recon,wall_seconds");
}
