#pragma once

// Head-impact kinematics recordings, derived channels, synthetic drifted
// datasets and surrogate strain labels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace headstrain {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Matrix3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

inline constexpr std::size_t kMinSamples = 8;

/// One impact: linear acceleration a(t) [m/s^2] and angular velocity w(t)
/// [rad/s], both 3 x T, sampled uniformly at `sample_rate` Hz.
struct ImpactRecording {
  std::string id;
  double sample_rate = 1000.0;
  std::vector<double> t;
  Matrix3X lin_acc;
  Matrix3X ang_vel;

  std::size_t samples() const noexcept { return t.size(); }

  /// Throws InsufficientSamplesError, DimensionError or IoError.
  void validate() const;

  bool operator==(const ImpactRecording&) const = default;
};

/// Sixteen derived series, one row each, in `kChannelNames` order:
/// {a, w, alpha, jerk} x {x, y, z, mag}.
struct KinematicsChannels {
  static constexpr std::size_t kCount = 16;
  static constexpr std::array<std::string_view, kCount> kChannelNames = {
      "ax",  "ay",  "az",  "amag",  "wx", "wy", "wz", "wmag",
      "alx", "aly", "alz", "almag", "jx", "jy", "jz", "jmag"};

  double sample_rate = 1000.0;
  Eigen::Matrix<double, kCount, Eigen::Dynamic> values;

  std::size_t samples() const noexcept { return static_cast<std::size_t>(values.cols()); }

  /// Row index of `name`, or nullopt.
  static std::optional<std::size_t> index_of(std::string_view name) noexcept;
};

enum class LabelKind { MPS, MPSR };

std::string_view to_string(LabelKind kind) noexcept;
LabelKind label_kind_from_string(std::string_view s);

/// Per-element strain (MPS, unitless) or strain rate (MPSR, 1/s).
struct LabelField {
  LabelKind kind = LabelKind::MPS;
  Vector element_values;

  bool operator==(const LabelField& other) const {
    return kind == other.kind && element_values == other.element_values;
  }
};

struct Dataset {
  std::vector<ImpactRecording> recordings;
  std::optional<std::vector<LabelField>> labels_mps;
  std::optional<std::vector<LabelField>> labels_mpsr;
  std::string domain_tag;

  std::size_t size() const noexcept { return recordings.size(); }
  bool has_labels() const noexcept { return labels_mps.has_value() && labels_mpsr.has_value(); }
  std::vector<std::string> ids() const;

  /// Stacks one label kind into an N x E matrix.
  Matrix label_matrix(LabelKind kind) const;

  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

/// Synthetic impact population plus measurement chain.
///
/// The pulse parameters (duration, peaks, frequency shift) describe the
/// physical impacts and therefore drive the surrogate labels. Gain, DC offset
/// and noise model the sensor and are applied after labelling, so they shift
/// the observed features without changing the ground truth.
struct DriftConfig {
  Interval pulse_duration{0.008, 0.025};  // s
  Interval peak_ang_vel{10.0, 40.0};      // rad/s
  Interval peak_lin_acc{100.0, 600.0};    // m/s^2
  double noise_std = 0.01;                // fraction of the recording's peak
  std::array<double, 3> channel_gain{1.0, 1.0, 1.0};
  std::array<double, 6> dc_offset{};      // ax ay az wx wy wz
  double frequency_shift = 0.0;           // Hz, added to every pulse frequency
  std::uint64_t seed = 0;
  double sample_rate = 1000.0;            // Hz
  double duration = 0.1;                  // s

  void validate() const;
  bool operator==(const DriftConfig&) const = default;
};

/// Surrogate head model: number of elements and the seed of its element basis.
struct LabelConfig {
  std::size_t elements = 128;
  std::uint64_t seed = 0x5EED;
  bool operator==(const LabelConfig&) const = default;
};

/// Generates `n` recordings; recording i draws from stream mix_seed(cfg.seed, i).
/// Labels come from the clean (pre-sensor) kinematics when `labels` is set.
Dataset synth_dataset(const DriftConfig& cfg, std::size_t n,
                      const std::optional<LabelConfig>& labels = LabelConfig{},
                      std::string domain_tag = "source");

/// Central differences (one-sided at the ends) for angular acceleration and
/// jerk; magnitudes per sample.
KinematicsChannels derive_channels(const ImpactRecording& rec);

/// The six axis permutations of each recording, identity first.
Dataset augment_axes(const Dataset& ds);

std::pair<LabelField, LabelField> surrogate_labels(const KinematicsChannels& ch,
                                                   std::size_t elements, std::uint64_t seed);

// CSV / directory I/O. A recording file has header `t,ax,ay,az,wx,wy,wz`; a
// dataset directory holds one such file per recording plus `manifest.json`
// and, when labelled, `labels/<id>_mps.csv` / `labels/<id>_mpsr.csv`.
ImpactRecording load_recording(const std::filesystem::path& path);
void save_recording(const ImpactRecording& rec, const std::filesystem::path& path);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace headstrain
