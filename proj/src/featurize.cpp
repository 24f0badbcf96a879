#include "headstrain/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "headstrain/error.hpp"

namespace headstrain {

namespace {

constexpr std::array<std::size_t, 10> kLags = {1, 2, 3, 4, 6, 8, 12, 16, 24, 32};
constexpr std::size_t kBands = 8;
constexpr std::size_t kFeaturesPerChannel = 32;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey; size must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

using ChannelFeatures = std::array<double, kFeaturesPerChannel>;

ChannelFeatures channel_features(std::span<const double> x, double sample_rate) {
  const std::size_t n = x.size();
  const double dt = 1.0 / sample_rate;
  ChannelFeatures f{};

  const auto max_it = std::max_element(x.begin(), x.end());
  const double peak = *max_it;
  const double min = *std::min_element(x.begin(), x.end());
  double sum = 0.0, sum_sq = 0.0, abs_sum = 0.0;
  for (double v : x) {
    sum += v;
    sum_sq += v * v;
    abs_sum += std::abs(v);
  }
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  std::size_t crossings = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (x[i - 1] * x[i] < 0.0) ++crossings;

  std::size_t k = 0;
  f[k++] = peak;
  f[k++] = min;
  f[k++] = mean;
  f[k++] = std::sqrt(var);
  f[k++] = std::sqrt(sum_sq / static_cast<double>(n));
  f[k++] = static_cast<double>(max_it - x.begin()) * dt;
  f[k++] = sum * dt;
  f[k++] = abs_sum * dt;
  f[k++] = static_cast<double>(crossings);
  f[k++] = peak - min;
  const double denom = var * static_cast<double>(n);
  for (std::size_t lag : kLags) {
    double acc = 0.0;
    if (denom > 0.0 && lag < n) {
      for (std::size_t i = 0; i + lag < n; ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
      acc /= denom;
    }
    f[k++] = acc;
  }

  const Spectrum spec = dft_power(x, sample_rate);
  const double nyquist = sample_rate / 2.0;
  const double band_width = nyquist / static_cast<double>(kBands);
  std::array<double, kBands> bands{};
  double total = 0.0, weighted = 0.0;
  std::size_t dominant = 0;
  for (std::size_t b = 0; b < spec.power.size(); ++b) {
    const double p = spec.power[b];
    total += p;
    weighted += p * spec.frequencies[b];
    if (p > spec.power[dominant]) dominant = b;
    auto band = static_cast<std::size_t>(spec.frequencies[b] / band_width);
    bands[std::min(band, kBands - 1)] += p;
  }
  double entropy = 0.0;
  if (total > 0.0) {
    for (double p : spec.power) {
      const double q = p / total;
      if (q > 0.0) entropy -= q * std::log(q);
    }
  }
  f[k++] = total;
  for (double b : bands) f[k++] = b;
  f[k++] = total > 0.0 ? weighted / total : 0.0;
  f[k++] = total > 0.0 ? spec.frequencies[dominant] : 0.0;
  f[k++] = entropy;
  return f;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash) noexcept {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = {"peak",         "min",         "mean",         "std",
                                  "rms",          "time_to_peak", "signed_area", "abs_area",
                                  "zero_crossings", "peak_to_peak"};
    for (std::size_t lag : kLags) v.push_back("autocorr_lag" + std::to_string(lag));
    v.push_back("total_power");
    for (std::size_t b = 0; b < kBands; ++b) v.push_back("band_power_" + std::to_string(b));
    v.push_back("spectral_centroid");
    v.push_back("dominant_freq");
    v.push_back("spectral_entropy");
    return v;
  }();
  return names;
}

FeatureSchema FeatureSchema::default_schema() {
  FeatureSchema s;
  for (auto ch : KinematicsChannels::kChannelNames)
    for (const auto& f : feature_names()) s.entries.emplace_back(std::string(ch), f);
  return s;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& [ch, f] : entries) out.push_back(ch + "." + f);
  return out;
}

std::uint64_t FeatureSchema::fingerprint() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& name : names()) {
    h = fnv1a64(name, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void FeatureSchema::validate() const {
  if (entries.empty()) throw SchemaError("feature schema is empty");
  std::set<std::pair<std::string, std::string>> seen;
  const auto& known = feature_names();
  for (const auto& e : entries) {
    if (!KinematicsChannels::index_of(e.first)) throw SchemaError("schema references unknown channel '" + e.first + "'");
    if (std::find(known.begin(), known.end(), e.second) == known.end())
      throw SchemaError("schema references unknown feature '" + e.second + "'");
    if (!seen.insert(e).second) throw SchemaError("duplicate schema entry '" + e.first + "." + e.second + "'");
  }
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [ch, f] : entries) arr.push_back({{"channel", ch}, {"feature", f}});
  return {{"features", arr}, {"fingerprint", fingerprint()}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  FeatureSchema s;
  try {
    for (const auto& e : j.at("features")) s.entries.emplace_back(e.at("channel").get<std::string>(), e.at("feature").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
  s.validate();
  return s;
}

Spectrum dft_power(std::span<const double> series, double sample_rate) {
  const std::size_t n = next_pow2(std::max<std::size_t>(series.size(), 1));
  std::vector<std::complex<double>> buf(n);
  std::copy(series.begin(), series.end(), buf.begin());
  fft(buf);

  Spectrum s;
  s.padded_length = n;
  const std::size_t half = n / 2;
  s.frequencies.resize(half + 1);
  s.magnitude.resize(half + 1);
  s.power.resize(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    s.frequencies[k] = static_cast<double>(k) * sample_rate / static_cast<double>(n);
    s.magnitude[k] = std::abs(buf[k]);
    const double p = std::norm(buf[k]) / static_cast<double>(n);
    s.power[k] = (k == 0 || k == half) ? p : 2.0 * p;
  }
  if (n == 1) s.power.resize(1);
  return s;
}

Vector extract_features(const KinematicsChannels& ch, const FeatureSchema& schema) {
  if (ch.samples() < kMinSamples)
    throw InsufficientSamplesError("feature extraction needs at least " + std::to_string(kMinSamples) + " samples");
  static const std::unordered_map<std::string, std::size_t> feature_index = [] {
    std::unordered_map<std::string, std::size_t> m;
    const auto& names = feature_names();
    for (std::size_t i = 0; i < names.size(); ++i) m.emplace(names[i], i);
    return m;
  }();

  std::array<std::optional<ChannelFeatures>, KinematicsChannels::kCount> cache;
  std::vector<double> series(ch.samples());
  Vector out(static_cast<Eigen::Index>(schema.size()));
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& [channel, feature] = schema.entries[c];
    const auto row = KinematicsChannels::index_of(channel);
    if (!row) throw SchemaError("schema references unknown channel '" + channel + "'");
    const auto fit = feature_index.find(feature);
    if (fit == feature_index.end()) throw SchemaError("schema references unknown feature '" + feature + "'");
    if (!cache[*row]) {
      for (std::size_t j = 0; j < series.size(); ++j) series[j] = ch.values(static_cast<Eigen::Index>(*row), static_cast<Eigen::Index>(j));
      cache[*row] = channel_features(series, ch.sample_rate);
    }
    out(static_cast<Eigen::Index>(c)) = (*cache[*row])[fit->second];
  }
  return out;
}

FeatureMatrix featurize_dataset(const Dataset& ds, const FeatureSchema& schema) {
  if (ds.recordings.empty()) throw ConfigError("featurize_dataset: dataset '" + ds.domain_tag + "' is empty");
  schema.validate();
  FeatureMatrix fm;
  fm.schema = schema;
  fm.domain_tag = ds.domain_tag;
  fm.ids = ds.ids();
  fm.values.resize(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    try {
      fm.values.row(static_cast<Eigen::Index>(i)) = extract_features(derive_channels(ds.recordings[i]), schema).transpose();
    } catch (const Error& e) {
      throw Error("recording '" + ds.recordings[i].id + "': " + e.what());
    }
  }
  if (!fm.values.allFinite()) throw DimensionError("feature matrix for '" + ds.domain_tag + "' has non-finite entries");
  return fm;
}

void save_feature_matrix(const FeatureMatrix& fm, const std::filesystem::path& csv_path) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out << "impact_id";
  for (const auto& name : fm.schema.names()) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < fm.values.rows(); ++i) {
    out << (static_cast<std::size_t>(i) < fm.ids.size() ? fm.ids[static_cast<std::size_t>(i)] : std::to_string(i));
    for (Eigen::Index c = 0; c < fm.values.cols(); ++c) out << ',' << format_double(fm.values(i, c));
    out << '\n';
  }
  nlohmann::json sidecar = fm.schema.to_json();
  sidecar["domain_tag"] = fm.domain_tag;
  std::ofstream js(csv_path.parent_path() / "schema.json");
  js << sidecar.dump(2) << '\n';
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& csv_path) {
  const auto schema_path = csv_path.parent_path() / "schema.json";
  std::ifstream js(schema_path);
  if (!js) throw IoError("cannot open " + schema_path.string());
  nlohmann::json sidecar;
  try {
    js >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(schema_path.string() + ": " + e.what());
  }
  FeatureMatrix fm;
  fm.schema = FeatureSchema::from_json(sidecar);
  fm.domain_tag = sidecar.value("domain_tag", std::string{});

  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto names = fm.schema.names();
  if (header.size() != names.size() + 1 || !std::equal(names.begin(), names.end(), header.begin() + 1))
    throw SchemaError(csv_path.string() + ": header does not match schema.json");
  std::vector<std::vector<double>> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    fm.ids.push_back(cell);
    std::vector<double> r;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(csv_path.string() + ": cannot parse '" + cell + "' at row " + std::to_string(row));
      }
    }
    if (r.size() != names.size()) throw IoError(csv_path.string() + ": wrong cell count at row " + std::to_string(row));
    rows.push_back(std::move(r));
  }
  fm.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < names.size(); ++c) fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return fm;
}

}  // namespace headstrain
