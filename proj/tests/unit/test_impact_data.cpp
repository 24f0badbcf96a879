#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "headstrain/error.hpp"
#include "headstrain/impact_data.hpp"
#include "test_util.hpp"

using namespace headstrain;

namespace {

ImpactRecording ramp_recording(std::size_t n = 50) {
  ImpactRecording r;
  r.id = "ramp";
  r.sample_rate = 1000.0;
  r.t.resize(n);
  r.lin_acc = Matrix3X::Zero(3, static_cast<Eigen::Index>(n));
  r.ang_vel = Matrix3X::Zero(3, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) r.t[j] = static_cast<double>(j) / 1000.0;
  return r;
}

}  // namespace

TEST(Synth, DeterministicForSeed) {
  DriftConfig cfg;
  cfg.seed = 7;
  const Dataset a = synth_dataset(cfg, 10);
  const Dataset b = synth_dataset(cfg, 10);
  ASSERT_EQ(a.size(), 10u);
  EXPECT_TRUE(a == b);
  cfg.seed = 8;
  EXPECT_FALSE(a == synth_dataset(cfg, 10));
}

TEST(Synth, RecordingsAreValidAndLabelled) {
  DriftConfig cfg;
  cfg.seed = 3;
  const Dataset ds = synth_dataset(cfg, 5, LabelConfig{16, 1});
  EXPECT_NO_THROW(ds.validate());
  ASSERT_TRUE(ds.has_labels());
  EXPECT_EQ(ds.label_matrix(LabelKind::MPS).rows(), 5);
  EXPECT_EQ(ds.label_matrix(LabelKind::MPSR).cols(), 16);
  EXPECT_EQ(ds.recordings[0].samples(), 100u);
}

TEST(Synth, NoiselessPeaksMatchConfiguredPeaks) {
  DriftConfig cfg;
  cfg.noise_std = 0.0;
  cfg.peak_ang_vel = {25.0, 25.0};
  cfg.peak_lin_acc = {400.0, 400.0};
  cfg.pulse_duration = {0.015, 0.015};
  const Dataset ds = synth_dataset(cfg, 2, std::nullopt);
  for (const auto& rec : ds.recordings) {
    EXPECT_NEAR(rec.lin_acc.colwise().norm().maxCoeff(), 400.0, 1e-9);
    EXPECT_NEAR(rec.ang_vel.colwise().norm().maxCoeff(), 25.0, 1e-9);
  }
}

TEST(Synth, SensorDriftLeavesLabelsUnchanged) {
  DriftConfig clean;
  clean.seed = 21;
  DriftConfig drifted = clean;
  drifted.channel_gain = {1.3, 0.8, 1.1};
  drifted.dc_offset = {5, -5, 1, 0.5, 0, -0.5};
  drifted.noise_std = 0.05;
  const Dataset a = synth_dataset(clean, 4);
  const Dataset b = synth_dataset(drifted, 4);
  EXPECT_TRUE(*a.labels_mps == *b.labels_mps);
  EXPECT_TRUE(*a.labels_mpsr == *b.labels_mpsr);
  EXPECT_FALSE(a.recordings[0] == b.recordings[0]);
}

TEST(Synth, RejectsInvalidRanges) {
  DriftConfig cfg;
  cfg.peak_lin_acc = {500.0, 100.0};
  EXPECT_THROW(synth_dataset(cfg, 3), ConfigError);
  cfg = DriftConfig{};
  cfg.channel_gain = {1.0, 0.0, 1.0};
  EXPECT_THROW(synth_dataset(cfg, 3), ConfigError);
}

TEST(DeriveChannels, ConstantAngularVelocity) {
  ImpactRecording r = ramp_recording();
  r.ang_vel.row(0).setOnes();
  const KinematicsChannels ch = derive_channels(r);
  for (const char* name : {"alx", "aly", "alz", "almag", "jx", "jmag"})
    EXPECT_EQ(ch.values.row(static_cast<Eigen::Index>(*KinematicsChannels::index_of(name))).cwiseAbs().maxCoeff(), 0.0)
        << name;
  EXPECT_TRUE((ch.values.row(7).array() == 1.0).all());
}

TEST(DeriveChannels, RampHasUnitAcceleration) {
  ImpactRecording r = ramp_recording();
  for (std::size_t j = 0; j < r.t.size(); ++j) r.ang_vel(0, static_cast<Eigen::Index>(j)) = r.t[j];
  const KinematicsChannels ch = derive_channels(r);
  for (Eigen::Index j = 1; j + 1 < ch.values.cols(); ++j) EXPECT_NEAR(ch.values(8, j), 1.0, 1e-6);
}

TEST(DeriveChannels, ThreeFourFiveNorm) {
  ImpactRecording r = ramp_recording();
  r.lin_acc.row(0).setConstant(3.0);
  r.lin_acc.row(1).setConstant(4.0);
  const KinematicsChannels ch = derive_channels(r);
  EXPECT_TRUE((ch.values.row(3).array() == 5.0).all());
}

TEST(DeriveChannels, LinearInAxisChannels) {
  DriftConfig cfg;
  cfg.seed = 4;
  const Dataset ds = synth_dataset(cfg, 2, std::nullopt);
  const auto& r1 = ds.recordings[0];
  const auto& r2 = ds.recordings[1];
  ImpactRecording mix = r1;
  mix.lin_acc = 2.0 * r1.lin_acc - 0.5 * r2.lin_acc;
  mix.ang_vel = 2.0 * r1.ang_vel - 0.5 * r2.ang_vel;
  const auto c1 = derive_channels(r1).values;
  const auto c2 = derive_channels(r2).values;
  const auto cm = derive_channels(mix).values;
  for (int row : {0, 1, 2, 4, 5, 6, 8, 9, 10, 12, 13, 14}) {
    const Eigen::RowVectorXd expect = 2.0 * c1.row(row) - 0.5 * c2.row(row);
    EXPECT_LE((cm.row(row) - expect).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + expect.cwiseAbs().maxCoeff())) << row;
  }
}

TEST(DeriveChannels, TooShortThrows) {
  EXPECT_THROW(derive_channels(ramp_recording(5)), InsufficientSamplesError);
}

TEST(AugmentAxes, SixfoldWithIdentityFirstAndEqualMagnitudes) {
  DriftConfig cfg;
  cfg.seed = 12;
  const Dataset ds = synth_dataset(cfg, 7);
  const Dataset aug = augment_axes(ds);
  ASSERT_EQ(aug.size(), 42u);
  ASSERT_EQ(aug.labels_mps->size(), 42u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_TRUE(aug.recordings[6 * i] == ds.recordings[i]);
    const auto base = derive_channels(ds.recordings[i]).values;
    for (std::size_t p = 1; p < 6; ++p) {
      const auto ch = derive_channels(aug.recordings[6 * i + p]).values;
      for (int row : {3, 7, 11, 15}) EXPECT_TRUE(ch.row(row) == base.row(row));
      EXPECT_DOUBLE_EQ(aug.recordings[6 * i + p].lin_acc.colwise().norm().sum(),
                       ds.recordings[i].lin_acc.colwise().norm().sum());
    }
  }
}

TEST(SurrogateLabels, ZeroInputGivesZeroFields) {
  const KinematicsChannels ch = derive_channels(ramp_recording());
  const auto [mps, mpsr] = surrogate_labels(ch, 32, 9);
  EXPECT_EQ(mps.element_values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(mpsr.element_values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SurrogateLabels, DeterministicAndMonotoneUnderScaling) {
  DriftConfig cfg;
  cfg.seed = 77;
  const Dataset ds = synth_dataset(cfg, 100, std::nullopt);
  for (const auto& rec : ds.recordings) {
    const auto ch = derive_channels(rec);
    const auto a = surrogate_labels(ch, 64, 5);
    const auto b = surrogate_labels(ch, 64, 5);
    ASSERT_TRUE(a.first == b.first);
    ImpactRecording doubled = rec;
    doubled.lin_acc *= 2.0;
    doubled.ang_vel *= 2.0;
    const auto d = surrogate_labels(derive_channels(doubled), 64, 5);
    ASSERT_TRUE((d.first.element_values.array() > a.first.element_values.array()).all());
    ASSERT_TRUE((d.second.element_values.array() > a.second.element_values.array()).all());
  }
}

TEST(DatasetIo, RoundTrip) {
  DriftConfig cfg;
  cfg.seed = 2;
  const Dataset ds = synth_dataset(cfg, 3, LabelConfig{8, 3}, "cf1");
  const auto dir = testutil::scratch_dir("ds");
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.domain_tag, "cf1");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.recordings[i].id, ds.recordings[i].id);
    EXPECT_LE((back.recordings[i].lin_acc - ds.recordings[i].lin_acc).cwiseAbs().maxCoeff(),
              1e-12 * ds.recordings[i].lin_acc.cwiseAbs().maxCoeff());
    EXPECT_TRUE((*back.labels_mps)[i] == (*ds.labels_mps)[i]);
  }
}

TEST(DatasetIo, MissingColumnNamed) {
  const auto dir = testutil::scratch_dir("csv");
  std::ofstream(dir / "r.csv") << "t,ax,ay,az,wx,wy\n0,1,2,3,4,5\n";
  try {
    load_recording(dir / "r.csv");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("wz"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, DecreasingTimeRejected) {
  const auto dir = testutil::scratch_dir("csv");
  std::ofstream out(dir / "r.csv");
  out << "t,ax,ay,az,wx,wy,wz\n";
  for (int j = 0; j < 10; ++j) out << (j == 5 ? 0.0 : j * 0.001) << ",0,0,0,0,0,0\n";
  out.close();
  try {
    load_recording(dir / "r.csv");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("timestamps"), std::string::npos) << e.what();
  }
}
