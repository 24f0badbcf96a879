#include "headstrain/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "headstrain/error.hpp"
#include "headstrain/serialize.hpp"

namespace headstrain {

namespace {

using nlohmann::json;

// Reads keys from one JSON object, remembering every key it was asked about
// so that leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const json* find(const char* key) {
    known_.emplace_back(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string at(const char* key) const { return path_ + "." + key; }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key) + ": expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(at(key) + ": must be finite");
    }
  }

  template <class Int>
  void integer(const char* key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
        throw ConfigError(at(key) + ": expected a non-negative integer");
      out = static_cast<Int>(v->get<std::uint64_t>());
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  template <std::size_t N>
  void numbers(const char* key, std::array<double, N>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != N) throw ConfigError(at(key) + ": expected an array of " + std::to_string(N) + " numbers");
      for (std::size_t i = 0; i < N; ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a number");
        out[i] = (*v)[i].get<double>();
      }
    }
  }

  void interval(const char* key, Interval& out) {
    std::array<double, 2> a{out.lo, out.hi};
    numbers(key, a);
    out = {a[0], a[1]};
  }

  void widths(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key) + ": expected an array of layer widths");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer() || (*v)[i].get<long long>() <= 0) throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a positive integer");
        out.push_back((*v)[i].get<std::size_t>());
      }
    }
  }

  void finish() const {
    std::string msg;
    for (const auto& [key, value] : j_.items()) {
      if (std::find(known_.begin(), known_.end(), key) != known_.end()) continue;
      if (!msg.empty()) msg += "; ";
      msg += path_ + ": unknown key '" + key + "'";
      std::string best;
      std::size_t best_d = std::string::npos;
      for (const auto& k : known_) {
        const std::size_t d = edit_distance(key, k);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (!best.empty() && best_d <= std::max<std::size_t>(2, key.size() / 2)) msg += " (did you mean '" + best + "'?)";
    }
    if (!msg.empty()) throw ConfigError(msg);
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> known_;
};

// Re-throws validation errors with the config path in front.
template <class F>
void with_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

DriftConfig parse_drift(const json& j, const std::string& path, std::uint64_t default_seed) {
  DriftConfig c;
  c.seed = default_seed;
  Reader r(j, path);
  r.interval("pulse_duration", c.pulse_duration);
  r.interval("peak_ang_vel", c.peak_ang_vel);
  r.interval("peak_lin_acc", c.peak_lin_acc);
  r.number("noise_std", c.noise_std);
  r.numbers("channel_gain", c.channel_gain);
  r.numbers("dc_offset", c.dc_offset);
  r.number("frequency_shift", c.frequency_shift);
  r.integer("seed", c.seed);
  r.number("sample_rate", c.sample_rate);
  r.number("duration", c.duration);
  r.finish();
  with_path(path, [&] { c.validate(); });
  return c;
}

json drift_to_json(const DriftConfig& c) {
  return {{"pulse_duration", {c.pulse_duration.lo, c.pulse_duration.hi}},
          {"peak_ang_vel", {c.peak_ang_vel.lo, c.peak_ang_vel.hi}},
          {"peak_lin_acc", {c.peak_lin_acc.lo, c.peak_lin_acc.hi}},
          {"noise_std", c.noise_std},
          {"channel_gain", c.channel_gain},
          {"dc_offset", c.dc_offset},
          {"frequency_shift", c.frequency_shift},
          {"seed", c.seed},
          {"sample_rate", c.sample_rate},
          {"duration", c.duration}};
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
  });
}

DataSpec parse_data(const json& j, const std::string& path, const std::string& default_name, std::size_t default_n,
                    std::uint64_t default_seed) {
  DataSpec d;
  d.name = default_name;
  Reader r(j, path);
  r.string("name", d.name);
  if (!valid_name(d.name)) throw ConfigError(path + ".name: use letters, digits, '_', '-' or '.'");
  const json* synth = r.find("synth");
  const json* p = r.find("path");
  d.n = default_n;
  r.integer("n", d.n);
  r.finish();
  if (synth && p) throw ConfigError(path + ": give either 'synth' or 'path', not both");
  if (p) {
    if (!p->is_string()) throw ConfigError(path + ".path: expected a string");
    d.path = p->get<std::string>();
    d.n = 0;
  } else {
    d.synth = parse_drift(synth ? *synth : json::object(), path + ".synth", default_seed);
    if (d.n < 1) throw ConfigError(path + ".n: must be >= 1");
  }
  return d;
}

json data_to_json(const DataSpec& d) {
  json j{{"name", d.name}};
  if (d.path) {
    j["path"] = d.path->string();
  } else if (d.synth) {
    j["synth"] = drift_to_json(*d.synth);
    j["n"] = d.n;
  }
  return j;
}

std::vector<LayerSpec> parse_arch(const json& j, const std::string& path) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "desk") return MlhmArch::desk(1, 1).hidden;
    if (s == "large") return MlhmArch::large(1, 1).hidden;
    throw ConfigError(path + ": unknown preset '" + s + "' (expected desk, large or an object with 'hidden')");
  }
  Reader r(j, path);
  const json* h = r.find("hidden");
  r.finish();
  if (!h || !h->is_array()) throw ConfigError(path + ".hidden: expected an array of layers");
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i < h->size(); ++i) {
    const std::string lp = path + ".hidden[" + std::to_string(i) + "]";
    Reader lr((*h)[i], lp);
    LayerSpec l;
    std::string act = "relu";
    lr.integer("width", l.width);
    lr.string("activation", act);
    lr.number("dropout", l.dropout);
    lr.finish();
    with_path(lp, [&] { l.activation = activation_from_string(act); });
    if (l.width == 0) throw ConfigError(lp + ".width: must be >= 1");
    if (!(l.dropout >= 0.0 && l.dropout < 1.0)) throw ConfigError(lp + ".dropout: must be in [0, 1)");
    out.push_back(l);
  }
  return out;
}

std::string validate_method(const std::string& m, const std::string& path) {
  for (const char* known : kMethodNames)
    if (m == known) return m;
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const char* known : kMethodNames) {
    const std::size_t d = edit_distance(m, known);
    if (d < best_d) {
      best_d = d;
      best = known;
    }
  }
  std::string msg = path + ": unknown method '" + m + "'";
  if (best_d <= std::max<std::size_t>(2, m.size() / 2)) msg += " (did you mean '" + best + "'?)";
  throw ConfigError(msg + "; expected baseline, drca, cyclegan, shiftgan or gan+drca");
}

std::vector<std::string> normalize_methods(const std::vector<std::string>& in, const std::string& path) {
  std::vector<std::string> out{"baseline"};
  for (const auto& m : in) {
    validate_method(m, path);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

}  // namespace

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> parse_method_list(const std::string& list) {
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = list.find(',', start);
    std::string item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) items.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (items.empty()) throw ConfigError("--methods: empty method list");
  return normalize_methods(items, "--methods");
}

bool PipelineConfig::has_method(const std::string& m) const {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

void PipelineConfig::validate() const {
  if (elements == 0) throw ConfigError("config.elements: must be >= 1");
  if (targets.empty()) throw ConfigError("config.targets: at least one target dataset is required");
  if (methods.empty() || methods.front() != "baseline") throw ConfigError("config.methods: baseline must be present");
  std::set<std::string> names{source.name};
  for (const auto* list : {&targets, &holdout})
    for (const auto& t : *list)
      if (!names.insert(t.name).second) throw ConfigError("config: dataset name '" + t.name + "' is used twice");
  if (source.synth && source.n < 10) throw ConfigError("config.source.n: need at least 10 source impacts");
  with_path("config", [&] {
    if (drca.dim < 1) throw ConfigError("drca.dim must be >= 1");
    if (!(drca.alpha >= 0.0)) throw ConfigError("drca.alpha must be >= 0");
    if (!(drca.epsilon > 0.0)) throw ConfigError("drca.epsilon must be positive");
    gan.validate();
    kmm.validate();
    train.validate();
    thresholds.validate();
    MlhmArch{1, hidden, 1}.validate();
  });
}

PipelineConfig parse_config(const json& j, std::optional<std::uint64_t> seed_override) {
  PipelineConfig c;
  Reader r(j, "config");
  r.integer("seed", c.seed);
  if (seed_override) c.seed = *seed_override;
  c.label_seed = mix_seed(c.seed, 7);
  c.train.seed = mix_seed(c.seed, 8);
  c.gan.seed = mix_seed(c.seed, 9);
  r.integer("elements", c.elements);
  r.integer("label_seed", c.label_seed);

  const json* src = r.find("source");
  c.source = parse_data(src ? *src : json::object(), "config.source", "source", 2000, mix_seed(c.seed, 100));
  if (const json* t = r.find("targets")) {
    if (!t->is_array()) throw ConfigError("config.targets: expected an array");
    for (std::size_t k = 0; k < t->size(); ++k)
      c.targets.push_back(parse_data((*t)[k], "config.targets[" + std::to_string(k) + "]", "target" + std::to_string(k),
                                     300, mix_seed(c.seed, 200 + k)));
  }
  if (const json* h = r.find("holdout")) {
    if (!h->is_array()) throw ConfigError("config.holdout: expected an array");
    for (std::size_t k = 0; k < h->size(); ++k)
      c.holdout.push_back(parse_data((*h)[k], "config.holdout[" + std::to_string(k) + "]", "holdout" + std::to_string(k),
                                     300, mix_seed(c.seed, 300 + k)));
  }
  r.boolean("augment", c.augment);
  r.string("schema", c.schema);

  if (const json* d = r.find("drca")) {
    Reader dr(*d, "config.drca");
    dr.integer("dim", c.drca.dim);
    dr.number("alpha", c.drca.alpha);
    dr.number("epsilon", c.drca.epsilon);
    dr.boolean("standardize", c.drca.standardize);
    dr.finish();
  }
  if (const json* g = r.find("gan")) {
    Reader gr(*g, "config.gan");
    gr.widths("generator_widths", c.gan.generator_widths);
    gr.widths("discriminator_widths", c.gan.discriminator_widths);
    gr.number("lambda_s", c.gan.lambda_s);
    gr.number("lambda_t", c.gan.lambda_t);
    gr.number("noise_dropout", c.gan.noise_dropout);
    gr.number("lr_g", c.gan.lr_g);
    gr.number("lr_d", c.gan.lr_d);
    gr.integer("epochs", c.gan.epochs);
    gr.integer("batch_size", c.gan.batch_size);
    gr.integer("seed", c.gan.seed);
    std::string norm = to_string(c.gan.norm);
    gr.string("norm", norm);
    gr.boolean("identity_init", c.gan.identity_init);
    gr.boolean("freeze_generators", c.gan.freeze_generators);
    gr.finish();
    with_path("config.gan", [&] { c.gan.norm = cycle_norm_from_string(norm); });
  }
  if (const json* k = r.find("kmm")) {
    Reader kr(*k, "config.kmm");
    if (const json* bw = kr.find("bandwidth")) {
      if (bw->is_string() && bw->get<std::string>() == "median")
        c.kmm.bandwidth.reset();
      else if (bw->is_number())
        c.kmm.bandwidth = bw->get<double>();
      else
        throw ConfigError("config.kmm.bandwidth: expected a number or \"median\"");
    }
    kr.number("weight_cap", c.kmm.weight_cap);
    kr.number("slack", c.kmm.slack);
    kr.integer("iterations", c.kmm.iterations);
    kr.number("tolerance", c.kmm.tolerance);
    kr.finish();
  }
  if (const json* t = r.find("train")) {
    Reader tr(*t, "config.train");
    tr.number("lr", c.train.lr);
    tr.number("l2_weight", c.train.l2_weight);
    tr.integer("batch_size", c.train.batch_size);
    tr.integer("epochs", c.train.epochs);
    tr.integer("early_stop_patience", c.train.early_stop_patience);
    tr.number("train_fraction", c.train.train_fraction);
    tr.number("val_fraction", c.train.val_fraction);
    tr.number("test_fraction", c.train.test_fraction);
    tr.integer("seed", c.train.seed);
    tr.finish();
  }
  c.hidden = MlhmArch::desk(1, 1).hidden;
  if (const json* a = r.find("arch")) c.hidden = parse_arch(*a, "config.arch");

  std::vector<std::string> methods;
  if (const json* m = r.find("methods")) {
    if (m->is_string()) {
      methods = parse_method_list(m->get<std::string>());
    } else if (m->is_array()) {
      for (std::size_t i = 0; i < m->size(); ++i) {
        if (!(*m)[i].is_string()) throw ConfigError("config.methods[" + std::to_string(i) + "]: expected a string");
        methods.push_back((*m)[i].get<std::string>());
      }
    } else {
      throw ConfigError("config.methods: expected an array of method names");
    }
  }
  c.methods = normalize_methods(methods, "config.methods");

  if (const json* t = r.find("thresholds")) {
    Reader tr(*t, "config.thresholds");
    tr.number("mps", c.thresholds.mps_threshold);
    tr.number("mpsr", c.thresholds.mpsr_threshold);
    tr.number("percentile", c.thresholds.percentile);
    tr.finish();
  }
  std::string out = c.output.string();
  r.string("output", out);
  c.output = out;
  r.finish();
  c.validate();
  return c;
}

PipelineConfig parse_config_file(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = read_json(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(j, seed_override);
}

json to_json(const PipelineConfig& c) {
  json targets = json::array(), holdout = json::array();
  for (const auto& t : c.targets) targets.push_back(data_to_json(t));
  for (const auto& t : c.holdout) holdout.push_back(data_to_json(t));
  json hidden = json::array();
  for (const auto& h : c.hidden) hidden.push_back({{"width", h.width}, {"activation", to_string(h.activation)}, {"dropout", h.dropout}});
  json kmm{{"weight_cap", c.kmm.weight_cap},
           {"slack", c.kmm.slack},
           {"iterations", c.kmm.iterations},
           {"tolerance", c.kmm.tolerance}};
  if (c.kmm.bandwidth)
    kmm["bandwidth"] = *c.kmm.bandwidth;
  else
    kmm["bandwidth"] = "median";
  return {{"seed", c.seed},
          {"elements", c.elements},
          {"label_seed", c.label_seed},
          {"source", data_to_json(c.source)},
          {"targets", targets},
          {"holdout", holdout},
          {"augment", c.augment},
          {"schema", c.schema},
          {"drca", {{"dim", c.drca.dim}, {"alpha", c.drca.alpha}, {"epsilon", c.drca.epsilon}, {"standardize", c.drca.standardize}}},
          {"gan",
           {{"generator_widths", c.gan.generator_widths},
            {"discriminator_widths", c.gan.discriminator_widths},
            {"lambda_s", c.gan.lambda_s},
            {"lambda_t", c.gan.lambda_t},
            {"noise_dropout", c.gan.noise_dropout},
            {"lr_g", c.gan.lr_g},
            {"lr_d", c.gan.lr_d},
            {"epochs", c.gan.epochs},
            {"batch_size", c.gan.batch_size},
            {"seed", c.gan.seed},
            {"norm", to_string(c.gan.norm)},
            {"identity_init", c.gan.identity_init},
            {"freeze_generators", c.gan.freeze_generators}}},
          {"kmm", kmm},
          {"train",
           {{"lr", c.train.lr},
            {"l2_weight", c.train.l2_weight},
            {"batch_size", c.train.batch_size},
            {"epochs", c.train.epochs},
            {"early_stop_patience", c.train.early_stop_patience},
            {"train_fraction", c.train.train_fraction},
            {"val_fraction", c.train.val_fraction},
            {"test_fraction", c.train.test_fraction},
            {"seed", c.train.seed}}},
          {"arch", {{"hidden", hidden}}},
          {"methods", c.methods},
          {"thresholds", {{"mps", c.thresholds.mps_threshold}, {"mpsr", c.thresholds.mpsr_threshold}, {"percentile", c.thresholds.percentile}}},
          {"output", c.output.string()}};
}

}  // namespace headstrain
