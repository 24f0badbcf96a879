#pragma once

// Temporal and spectral features of the sixteen kinematics channels.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "headstrain/impact_data.hpp"

namespace headstrain {

/// The 32 per-channel features, in the order the default schema uses them.
///
/// Temporal: peak (max), min, mean, std (population), rms, time_to_peak (s,
/// first maximum), signed_area and abs_area (rectangle rule), zero_crossings
/// (strict sign changes), peak_to_peak, autocorrelation of the mean-removed
/// series at lags 1,2,3,4,6,8,12,16,24,32 (zero when the series is constant
/// or shorter than the lag).
/// Spectral (one-sided, zero-padded, rectangular window): total_power, eight
/// equal-width band powers from 0 Hz to Nyquist, spectral_centroid (Hz),
/// dominant_freq (Hz), spectral_entropy (nats, of the normalized power).
const std::vector<std::string>& feature_names();

/// Ordered (channel, feature) pairs.
struct FeatureSchema {
  std::vector<std::pair<std::string, std::string>> entries;

  /// 16 channels x 32 features = 512 columns, channel-major.
  static FeatureSchema default_schema();

  std::size_t size() const noexcept { return entries.size(); }
  /// "channel.feature" column names.
  std::vector<std::string> names() const;
  /// FNV-1a 64 over the newline-joined column names.
  std::uint64_t fingerprint() const;
  /// Throws SchemaError on duplicates, unknown channels or unknown features.
  void validate() const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);

  bool operator==(const FeatureSchema&) const = default;
};

struct FeatureMatrix {
  Matrix values;  // N x D
  FeatureSchema schema;
  std::string domain_tag;
  std::vector<std::string> ids;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(values.cols()); }
};

/// One-sided power spectrum of the series zero-padded to the next power of
/// two n: bins k = 0..n/2 at k*fs/n. `magnitude` is |X_k|; `power` is
/// |X_k|^2/n with interior bins doubled, so sum(power) == sum(x^2).
struct Spectrum {
  std::vector<double> frequencies;
  std::vector<double> magnitude;
  std::vector<double> power;
  std::size_t padded_length = 0;
};

Spectrum dft_power(std::span<const double> series, double sample_rate);

Vector extract_features(const KinematicsChannels& ch, const FeatureSchema& schema);

/// Row i = extract_features(derive_channels(recording i)).
FeatureMatrix featurize_dataset(const Dataset& ds, const FeatureSchema& schema);

/// CSV with schema names as header plus `schema.json` next to it.
void save_feature_matrix(const FeatureMatrix& fm, const std::filesystem::path& csv_path);
FeatureMatrix load_feature_matrix(const std::filesystem::path& csv_path);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept;

}  // namespace headstrain
