#include "headstrain/impact_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "headstrain/error.hpp"
#include "headstrain/rng.hpp"

namespace headstrain {

namespace {

constexpr double kTimeTolerance = 1e-9;

// Magnitude whose rounding does not depend on axis order: squares are summed
// smallest first, so every axis permutation gives the same bits.
double ordered_norm(double x, double y, double z) noexcept {
  std::array<double, 3> sq{x * x, y * y, z * z};
  std::sort(sq.begin(), sq.end());
  return std::sqrt((sq[0] + sq[1]) + sq[2]);
}

Eigen::RowVectorXd central_difference(const Eigen::RowVectorXd& x, double dt) {
  const Eigen::Index n = x.size();
  Eigen::RowVectorXd d(n);
  d(0) = (x(1) - x(0)) / dt;
  d(n - 1) = (x(n - 1) - x(n - 2)) / dt;
  for (Eigen::Index i = 1; i + 1 < n; ++i) d(i) = (x(i + 1) - x(i - 1)) / (2.0 * dt);
  return d;
}

void check_interval(const Interval& iv, const char* name) {
  if (!(iv.lo > 0.0) || !std::isfinite(iv.hi))
    throw ConfigError(std::string(name) + ": lower bound must be positive and finite");
  if (iv.lo > iv.hi)
    throw ConfigError(std::string(name) + ": invalid range (lower " + std::to_string(iv.lo) +
                      " > upper " + std::to_string(iv.hi) + ")");
}

Eigen::Vector3d random_direction(Rng& rng) {
  Eigen::Vector3d v;
  do {
    v = {rng.normal(), rng.normal(), rng.normal()};
  } while (v.norm() < 1e-6);
  return v.normalized();
}

struct PulseComponent {
  double amplitude;
  Eigen::Vector3d direction;
  double frequency;
  double tau;
  double onset;
};

// Damped sinusoid A e^{-s/tau} sin(2 pi f s) for s >= 0, zero before onset.
double damped_sine(const PulseComponent& c, double time) noexcept {
  const double s = time - c.onset;
  if (s < 0.0) return 0.0;
  return c.amplitude * std::exp(-s / c.tau) * std::sin(2.0 * std::numbers::pi * c.frequency * s);
}

std::vector<PulseComponent> draw_components(Rng& rng, double base_freq, double tau, double onset,
                                            double duration) {
  const std::size_t count = 1 + rng.below(3);
  std::vector<PulseComponent> comps;
  comps.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    PulseComponent c;
    c.amplitude = k == 0 ? 1.0 : rng.uniform(0.15, 0.45);
    c.direction = random_direction(rng);
    c.frequency = base_freq * (1.0 + 0.75 * static_cast<double>(k));
    c.tau = tau;
    c.onset = k == 0 ? onset : onset + rng.uniform(0.0, duration);
    comps.push_back(c);
  }
  return comps;
}

Matrix3X render(const std::vector<PulseComponent>& comps, const std::vector<double>& t,
                double peak) {
  Matrix3X out = Matrix3X::Zero(3, static_cast<Eigen::Index>(t.size()));
  for (std::size_t j = 0; j < t.size(); ++j)
    for (const auto& c : comps) out.col(static_cast<Eigen::Index>(j)) += c.direction * damped_sine(c, t[j]);
  double max_mag = 0.0;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    max_mag = std::max(max_mag, ordered_norm(out(0, j), out(1, j), out(2, j)));
  if (max_mag > 0.0) out *= peak / max_mag;
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path, std::size_t row,
                  const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ": cannot parse value '" + cell + "' at row " +
                  std::to_string(row) + ", column '" + column + "'");
  }
}

void write_labels(const LabelField& field, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "element_id,value\n";
  for (Eigen::Index e = 0; e < field.element_values.size(); ++e)
    out << e << ',' << format_double(field.element_values(e)) << '\n';
}

LabelField read_labels(const std::filesystem::path& path, LabelKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty label file");
  const auto header = split_csv_line(line);
  if (header.size() != 2 || header[0] != "element_id" || header[1] != "value")
    throw IoError(path.string() + ": expected header 'element_id,value'");
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw IoError(path.string() + ": row " + std::to_string(row) + " must have 2 columns");
    const double id = parse_cell(cells[0], path, row, "element_id");
    if (id != static_cast<double>(values.size()))
      throw IoError(path.string() + ": element_id out of order at row " + std::to_string(row));
    values.push_back(parse_cell(cells[1], path, row, "value"));
  }
  LabelField f;
  f.kind = kind;
  f.element_values = Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------

std::optional<std::size_t> KinematicsChannels::index_of(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kCount; ++i)
    if (kChannelNames[i] == name) return i;
  return std::nullopt;
}

std::string_view to_string(LabelKind kind) noexcept { return kind == LabelKind::MPS ? "MPS" : "MPSR"; }

LabelKind label_kind_from_string(std::string_view s) {
  if (s == "MPS" || s == "mps") return LabelKind::MPS;
  if (s == "MPSR" || s == "mpsr") return LabelKind::MPSR;
  throw ConfigError("unknown label kind '" + std::string(s) + "' (expected MPS or MPSR)");
}

void ImpactRecording::validate() const {
  const std::size_t n = t.size();
  if (n < kMinSamples)
    throw InsufficientSamplesError("recording '" + id + "' has " + std::to_string(n) +
                                   " samples; at least " + std::to_string(kMinSamples) + " required");
  if (static_cast<std::size_t>(lin_acc.cols()) != n || static_cast<std::size_t>(ang_vel.cols()) != n)
    throw DimensionError("recording '" + id + "': channel lengths differ from the time base");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
    throw IoError("recording '" + id + "': sample rate must be positive");
  const double dt = 1.0 / sample_rate;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(t[i] > t[i - 1]))
      throw IoError("recording '" + id + "': timestamps not strictly increasing at row " + std::to_string(i + 1));
    if (std::abs((t[i] - t[i - 1]) - dt) > kTimeTolerance)
      throw IoError("recording '" + id + "': non-uniform timestamps at row " + std::to_string(i + 1));
  }
  if (!lin_acc.allFinite() || !ang_vel.allFinite())
    throw IoError("recording '" + id + "': non-finite kinematics value");
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(recordings.size());
  for (const auto& r : recordings) out.push_back(r.id);
  return out;
}

Matrix Dataset::label_matrix(LabelKind kind) const {
  const auto& labels = kind == LabelKind::MPS ? labels_mps : labels_mpsr;
  if (!labels || labels->empty()) throw DimensionError("dataset '" + domain_tag + "' has no " + std::string(to_string(kind)) + " labels");
  const auto e = labels->front().element_values.size();
  Matrix y(static_cast<Eigen::Index>(labels->size()), e);
  for (std::size_t i = 0; i < labels->size(); ++i) {
    if ((*labels)[i].element_values.size() != e) throw DimensionError("element count differs across the dataset");
    y.row(static_cast<Eigen::Index>(i)) = (*labels)[i].element_values.transpose();
  }
  return y;
}

void Dataset::validate() const {
  for (const auto& r : recordings) r.validate();
  for (const auto* labels : {&labels_mps, &labels_mpsr}) {
    if (!*labels) continue;
    if ((*labels)->size() != recordings.size())
      throw DimensionError("label count " + std::to_string((*labels)->size()) + " != recording count " +
                           std::to_string(recordings.size()));
    for (const auto& f : **labels) {
      if (f.element_values.size() != (*labels)->front().element_values.size())
        throw DimensionError("element count differs across the dataset");
      if ((f.element_values.array() < 0.0).any()) throw DimensionError("negative label value");
    }
  }
}

void DriftConfig::validate() const {
  check_interval(pulse_duration, "pulse_duration");
  check_interval(peak_ang_vel, "peak_ang_vel");
  check_interval(peak_lin_acc, "peak_lin_acc");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
  if (!(duration > 0.0) || duration * sample_rate + 0.5 < static_cast<double>(kMinSamples))
    throw ConfigError("duration too short: need at least " + std::to_string(kMinSamples) + " samples");
  for (double g : channel_gain)
    if (!std::isfinite(g) || g == 0.0) throw ConfigError("channel_gain entries must be finite and nonzero");
  for (double o : dc_offset)
    if (!std::isfinite(o)) throw ConfigError("dc_offset entries must be finite");
  if (!(1.0 / (2.0 * pulse_duration.hi) + frequency_shift > 0.0))
    throw ConfigError("frequency_shift makes the pulse frequency non-positive");
}

Dataset synth_dataset(const DriftConfig& cfg, std::size_t n, const std::optional<LabelConfig>& labels,
                      std::string domain_tag) {
  cfg.validate();
  if (n == 0) throw ConfigError("synth_dataset: n must be >= 1");
  if (labels && labels->elements == 0) throw ConfigError("label element count must be >= 1");

  const auto samples = static_cast<std::size_t>(std::llround(cfg.duration * cfg.sample_rate));
  std::vector<double> t(samples);
  for (std::size_t j = 0; j < samples; ++j) t[j] = static_cast<double>(j) / cfg.sample_rate;

  Dataset ds;
  ds.domain_tag = std::move(domain_tag);
  ds.recordings.resize(n);
  if (labels) {
    ds.labels_mps.emplace(n);
    ds.labels_mpsr.emplace(n);
  }

  char id_buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(cfg.seed, i));
    const double pulse = rng.uniform(cfg.pulse_duration.lo, cfg.pulse_duration.hi);
    const double base_freq = 1.0 / (2.0 * pulse) + cfg.frequency_shift;
    const double onset = rng.uniform(0.01, 0.02);
    const double peak_w = rng.uniform(cfg.peak_ang_vel.lo, cfg.peak_ang_vel.hi);
    const double peak_a = rng.uniform(cfg.peak_lin_acc.lo, cfg.peak_lin_acc.hi);
    const auto w_comps = draw_components(rng, base_freq, pulse, onset, pulse);
    const auto a_comps = draw_components(rng, base_freq, pulse, onset, pulse);

    ImpactRecording& rec = ds.recordings[i];
    std::snprintf(id_buf, sizeof id_buf, "%s%06zu", "imp", i);
    rec.id = id_buf;
    rec.sample_rate = cfg.sample_rate;
    rec.t = t;
    rec.ang_vel = render(w_comps, t, peak_w);
    rec.lin_acc = render(a_comps, t, peak_a);

    if (labels) {
      auto [mps, mpsr] = surrogate_labels(derive_channels(rec), labels->elements, labels->seed);
      (*ds.labels_mps)[i] = std::move(mps);
      (*ds.labels_mpsr)[i] = std::move(mpsr);
    }

    // Sensor chain: per-axis gain, DC offset, additive Gaussian noise.
    for (int axis = 0; axis < 3; ++axis) {
      rec.lin_acc.row(axis) *= cfg.channel_gain[static_cast<std::size_t>(axis)];
      rec.ang_vel.row(axis) *= cfg.channel_gain[static_cast<std::size_t>(axis)];
      rec.lin_acc.row(axis).array() += cfg.dc_offset[static_cast<std::size_t>(axis)];
      rec.ang_vel.row(axis).array() += cfg.dc_offset[static_cast<std::size_t>(axis) + 3];
    }
    if (cfg.noise_std > 0.0) {
      for (Eigen::Index j = 0; j < rec.ang_vel.cols(); ++j)
        for (int axis = 0; axis < 3; ++axis) {
          rec.lin_acc(axis, j) += rng.normal(0.0, cfg.noise_std * peak_a);
          rec.ang_vel(axis, j) += rng.normal(0.0, cfg.noise_std * peak_w);
        }
    }
  }
  return ds;
}

KinematicsChannels derive_channels(const ImpactRecording& rec) {
  if (rec.samples() < kMinSamples)
    throw InsufficientSamplesError("recording '" + rec.id + "' has " + std::to_string(rec.samples()) +
                                   " samples; at least " + std::to_string(kMinSamples) + " required");
  if (static_cast<std::size_t>(rec.lin_acc.cols()) != rec.samples() ||
      static_cast<std::size_t>(rec.ang_vel.cols()) != rec.samples())
    throw DimensionError("recording '" + rec.id + "': channel lengths differ from the time base");

  const auto n = static_cast<Eigen::Index>(rec.samples());
  const double dt = 1.0 / rec.sample_rate;
  KinematicsChannels ch;
  ch.sample_rate = rec.sample_rate;
  ch.values.resize(KinematicsChannels::kCount, n);
  for (int axis = 0; axis < 3; ++axis) {
    ch.values.row(axis) = rec.lin_acc.row(axis);
    ch.values.row(4 + axis) = rec.ang_vel.row(axis);
    ch.values.row(8 + axis) = central_difference(rec.ang_vel.row(axis), dt);
    ch.values.row(12 + axis) = central_difference(ch.values.row(8 + axis), dt);
  }
  for (int q = 0; q < 4; ++q) {
    const int base = 4 * q;
    for (Eigen::Index j = 0; j < n; ++j)
      ch.values(base + 3, j) = ordered_norm(ch.values(base, j), ch.values(base + 1, j), ch.values(base + 2, j));
  }
  return ch;
}

Dataset augment_axes(const Dataset& ds) {
  if (ds.recordings.empty()) throw ConfigError("augment_axes: dataset is empty");
  static constexpr std::array<std::array<int, 3>, 6> kPerms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

  Dataset out;
  out.domain_tag = ds.domain_tag;
  out.recordings.reserve(ds.size() * kPerms.size());
  if (ds.labels_mps) out.labels_mps.emplace();
  if (ds.labels_mpsr) out.labels_mpsr.emplace();

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rec = ds.recordings[i];
    for (std::size_t p = 0; p < kPerms.size(); ++p) {
      ImpactRecording copy;
      copy.id = p == 0 ? rec.id : rec.id + "_perm" + std::to_string(p);
      copy.sample_rate = rec.sample_rate;
      copy.t = rec.t;
      copy.lin_acc.resize(3, rec.lin_acc.cols());
      copy.ang_vel.resize(3, rec.ang_vel.cols());
      for (int axis = 0; axis < 3; ++axis) {
        copy.lin_acc.row(axis) = rec.lin_acc.row(kPerms[p][static_cast<std::size_t>(axis)]);
        copy.ang_vel.row(axis) = rec.ang_vel.row(kPerms[p][static_cast<std::size_t>(axis)]);
      }
      out.recordings.push_back(std::move(copy));
      // The surrogate oracle reads magnitudes only, so labels carry over.
      if (ds.labels_mps) out.labels_mps->push_back((*ds.labels_mps)[i]);
      if (ds.labels_mpsr) out.labels_mpsr->push_back((*ds.labels_mpsr)[i]);
    }
  }
  return out;
}

std::pair<LabelField, LabelField> surrogate_labels(const KinematicsChannels& ch, std::size_t elements,
                                                   std::uint64_t seed) {
  if (elements == 0) throw ConfigError("surrogate_labels: element count must be >= 1");
  const double dt = 1.0 / ch.sample_rate;
  auto peak = [&](int row) { return ch.values.row(row).maxCoeff(); };
  auto integral = [&](int row) { return ch.values.row(row).sum() * dt; };

  // Positively homogeneous summaries of the magnitude channels, scaled to O(1)
  // for the default impact population.
  constexpr std::size_t kSummaries = 8;
  std::array<double, kSummaries> s{};
  s[0] = peak(7) / 25.0;
  s[1] = peak(11) / 6000.0;
  s[2] = peak(3) / 350.0;
  s[3] = peak(15) / 1.5e6;
  s[4] = integral(7) / 0.4;
  s[5] = integral(11) / 50.0;
  s[6] = integral(3) / 5.0;
  s[7] = std::sqrt(s[0] * s[1]);

  static constexpr std::array<double, kSummaries> kMpsEmphasis = {3.0, 1.0, 0.5, 0.2, 2.0, 0.5, 0.3, 1.0};
  static constexpr std::array<double, kSummaries> kMpsrEmphasis = {1.0, 3.0, 0.3, 1.5, 0.3, 1.0, 0.2, 2.0};

  auto field = [&](LabelKind kind, const std::array<double, kSummaries>& emphasis, double ceiling,
                   std::uint64_t stream) {
    Rng rng(mix_seed(seed, stream));
    LabelField f;
    f.kind = kind;
    f.element_values.resize(static_cast<Eigen::Index>(elements));
    std::array<double, kSummaries> w{};
    for (std::size_t e = 0; e < elements; ++e) {
      double total = 0.0;
      for (std::size_t k = 0; k < kSummaries; ++k) total += (w[k] = emphasis[k] * rng.uniform(0.2, 1.0));
      const double gain = rng.uniform(0.6, 1.4);
      double z = 0.0;
      for (std::size_t k = 0; k < kSummaries; ++k) z += w[k] / total * s[k];
      f.element_values(static_cast<Eigen::Index>(e)) = ceiling * (1.0 - std::exp(-gain * z));
    }
    return f;
  };
  return {field(LabelKind::MPS, kMpsEmphasis, 0.6, 1), field(LabelKind::MPSR, kMpsrEmphasis, 200.0, 2)};
}

// ---------------------------------------------------------------------------
// I/O

ImpactRecording load_recording(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recording " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");

  static constexpr std::array<const char*, 7> kColumns = {"t", "ax", "ay", "az", "wx", "wy", "wz"};
  const auto header = split_csv_line(line);
  std::array<std::size_t, 7> pos{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end())
      throw IoError(path.string() + ": missing column '" + kColumns[c] + "'");
    pos[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<std::array<double, 7>> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw IoError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                    " cells, expected " + std::to_string(header.size()));
    std::array<double, 7> r{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) r[c] = parse_cell(cells[pos[c]], path, row, kColumns[c]);
    if (!rows.empty() && !(r[0] > rows.back()[0]))
      throw IoError(path.string() + ": timestamps not strictly increasing at row " + std::to_string(row) +
                    " (timestamp order error)");
    rows.push_back(r);
  }
  if (rows.size() < kMinSamples)
    throw InsufficientSamplesError(path.string() + ": " + std::to_string(rows.size()) + " samples; at least " +
                                   std::to_string(kMinSamples) + " required");

  ImpactRecording rec;
  rec.id = path.stem().string();
  const std::size_t n = rows.size();
  rec.sample_rate = static_cast<double>(n - 1) / (rows.back()[0] - rows.front()[0]);
  rec.t.resize(n);
  rec.lin_acc.resize(3, static_cast<Eigen::Index>(n));
  rec.ang_vel.resize(3, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    rec.t[j] = rows[j][0];
    for (int axis = 0; axis < 3; ++axis) {
      rec.lin_acc(axis, static_cast<Eigen::Index>(j)) = rows[j][1 + static_cast<std::size_t>(axis)];
      rec.ang_vel(axis, static_cast<Eigen::Index>(j)) = rows[j][4 + static_cast<std::size_t>(axis)];
    }
  }
  try {
    rec.validate();
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return rec;
}

void save_recording(const ImpactRecording& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "t,ax,ay,az,wx,wy,wz\n";
  for (std::size_t j = 0; j < rec.samples(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    out << format_double(rec.t[j]);
    for (int axis = 0; axis < 3; ++axis) out << ',' << format_double(rec.lin_acc(axis, c));
    for (int axis = 0; axis < 3; ++axis) out << ',' << format_double(rec.ang_vel(axis, c));
    out << '\n';
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["domain_tag"] = ds.domain_tag;
  manifest["sample_rate"] = ds.recordings.empty() ? 0.0 : ds.recordings.front().sample_rate;
  manifest["ids"] = ds.ids();
  nlohmann::json label_refs = nlohmann::json::object();
  if (ds.labels_mps || ds.labels_mpsr) std::filesystem::create_directories(dir / "labels");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rec = ds.recordings[i];
    save_recording(rec, dir / (rec.id + ".csv"));
    nlohmann::json refs = nlohmann::json::object();
    if (ds.labels_mps) {
      const std::string rel = "labels/" + rec.id + "_mps.csv";
      write_labels((*ds.labels_mps)[i], dir / rel);
      refs["mps"] = rel;
    }
    if (ds.labels_mpsr) {
      const std::string rel = "labels/" + rec.id + "_mpsr.csv";
      write_labels((*ds.labels_mpsr)[i], dir / rel);
      refs["mpsr"] = rel;
    }
    if (!refs.empty()) label_refs[rec.id] = refs;
  }
  manifest["labels"] = label_refs;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("ids") || !manifest["ids"].is_array())
    throw IoError(manifest_path.string() + ": missing 'ids' list");

  Dataset ds;
  ds.domain_tag = manifest.value("domain_tag", std::string{});
  const double rate = manifest.value("sample_rate", 0.0);
  const auto& labels = manifest.contains("labels") ? manifest["labels"] : nlohmann::json::object();
  bool any_labels = false;
  for (const auto& id_json : manifest["ids"]) {
    const auto id = id_json.get<std::string>();
    ImpactRecording rec = load_recording(dir / (id + ".csv"));
    rec.id = id;
    if (rate > 0.0) {
      if (std::abs(rec.sample_rate - rate) > 1e-6 * rate)
        throw IoError(id + ".csv: sample rate " + std::to_string(rec.sample_rate) +
                      " disagrees with manifest " + std::to_string(rate));
      rec.sample_rate = rate;
    }
    ds.recordings.push_back(std::move(rec));
    if (labels.contains(id)) any_labels = true;
  }
  if (any_labels) {
    ds.labels_mps.emplace();
    ds.labels_mpsr.emplace();
    for (const auto& id : ds.ids()) {
      if (!labels.contains(id) || !labels[id].contains("mps") || !labels[id].contains("mpsr"))
        throw IoError(manifest_path.string() + ": label references missing for '" + id + "'");
      ds.labels_mps->push_back(read_labels(dir / labels[id]["mps"].get<std::string>(), LabelKind::MPS));
      ds.labels_mpsr->push_back(read_labels(dir / labels[id]["mpsr"].get<std::string>(), LabelKind::MPSR));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace headstrain
