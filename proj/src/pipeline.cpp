#include "headstrain/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "headstrain/adversarial.hpp"
#include "headstrain/drca.hpp"
#include "headstrain/error.hpp"
#include "headstrain/featurize.hpp"
#include "headstrain/mlhm.hpp"
#include "headstrain/serialize.hpp"

namespace headstrain {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr LabelKind kKinds[] = {LabelKind::MPS, LabelKind::MPSR};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string lower(LabelKind k) { return k == LabelKind::MPS ? "mps" : "mpsr"; }

std::string file_stem(const std::string& method) { return method == "gan+drca" ? "gan_drca" : method; }

// Collects every file written under the output root with its content hash and
// writes manifest.json last.
class Artifacts {
 public:
  explicit Artifacts(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const noexcept { return root_; }

  std::uint64_t text(const std::string& rel, const std::string& content) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("write failed for " + p.string());
    return record(rel, fnv1a64(content));
  }

  std::uint64_t json_file(const std::string& rel, const json& j) { return record(rel, write_json(j, root_ / rel)); }

  std::uint64_t record(const std::string& rel, std::uint64_t hash) {
    std::lock_guard lock(mu_);
    files_[rel] = hash_hex(hash);
    return hash;
  }

  json files() const {
    std::lock_guard lock(mu_);
    json j = json::object();
    for (const auto& [k, v] : files_) j[k] = v;
    return j;
  }

 private:
  fs::path root_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> files_;
};

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

Dataset load_spec(const DataSpec& d, const PipelineConfig& cfg) {
  Dataset ds;
  if (d.path) {
    ds = load_dataset(*d.path);
    ds.domain_tag = d.name;
  } else {
    ds = synth_dataset(*d.synth, d.n, LabelConfig{cfg.elements, cfg.label_seed}, d.name);
  }
  if (ds.has_labels() && !ds.labels_mps->empty() &&
      static_cast<std::size_t>(ds.labels_mps->front().element_values.size()) != cfg.elements)
    throw DimensionError("dataset '" + d.name + "' has " + std::to_string(ds.labels_mps->front().element_values.size()) +
                         " elements per field, config expects " + std::to_string(cfg.elements));
  return ds;
}

std::string errors_csv(const ErrorSummary& s, const Vector* weights) {
  std::ostringstream out;
  out << "impact_id,mae,rmse" << (weights ? ",kmm_weight" : "") << '\n';
  for (std::size_t i = 0; i < s.impacts.size(); ++i) {
    out << s.impacts[i].impact_id << ',' << num(s.impacts[i].mae) << ',' << num(s.impacts[i].rmse);
    if (weights) out << ',' << num((*weights)(static_cast<Eigen::Index>(i)));
    out << '\n';
  }
  return out.str();
}

MethodErrors read_errors_csv(const fs::path& path, LabelKind kind, const std::string& dataset, const std::string& method) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const bool weighted = line.find("kmm_weight") != std::string::npos;
  MethodErrors me;
  me.target = kind;
  me.dataset = dataset;
  me.method = method;
  std::vector<double> weights;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != (weighted ? 4u : 3u)) throw IoError(path.string() + ": malformed row " + std::to_string(row));
    try {
      me.errors.impacts.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2])});
      if (weighted) weights.push_back(std::stod(cells[3]));
    } catch (const std::exception&) {
      throw IoError(path.string() + ": unparseable number at row " + std::to_string(row));
    }
  }
  if (me.errors.impacts.empty()) throw IoError(path.string() + ": no rows");
  double mae = 0.0, rmse = 0.0;
  for (const auto& e : me.errors.impacts) {
    mae += e.mae;
    rmse += e.rmse;
  }
  me.errors.mean_mae = mae / static_cast<double>(me.errors.impacts.size());
  me.errors.mean_rmse = rmse / static_cast<double>(me.errors.impacts.size());
  if (weighted) me.weights = std::move(weights);
  return me;
}

std::vector<LabelField> fields_from(const Matrix& m, LabelKind kind) {
  std::vector<LabelField> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back({kind, m.row(i).transpose().cwiseMax(0.0)});
  return out;
}

struct SourceModels {
  MlhmModel model[2];
  std::string path[2];
  std::string hash[2];
  TrainConfig train[2];
};

struct Job {
  const DataSpec* spec;
  std::string role;
  std::size_t index;
};

struct JobOutcome {
  std::vector<MethodErrors> errors;
  json error_index = json::array();
  std::string flag_rows;
  json provenance = json::object();
  json dataset;
};

class TargetRunner {
 public:
  TargetRunner(const PipelineConfig& cfg, const RunOptions& opts, Artifacts& art, const FeatureSchema& schema,
               const FeatureMatrix& xs, const SourceModels& src)
      : cfg_(cfg), opts_(opts), art_(art), schema_(schema), xs_(xs), src_(src) {}

  JobOutcome run(const Job& job) const {
    JobOutcome out;
    const std::string& name = job.spec->name;
    const Dataset ds = stage("load:" + name, [&] { return load_spec(*job.spec, cfg_); });
    const FeatureMatrix xt = stage("featurize:" + name, [&] { return featurize_dataset(ds, schema_); });
    out.dataset = {{"name", name}, {"role", job.role}, {"impacts", ds.size()}, {"labeled", ds.has_labels()}};
    log("[" + name + "] " + std::to_string(ds.size()) + " impacts featurized");

    // predictions[method][kind]
    std::map<std::string, std::array<Matrix, 2>> pred;
    Vector kmm_w;
    const std::string mdir = "models/" + name + "/";

    for (int k = 0; k < 2; ++k) pred["baseline"][k] = predict(src_.model[k], xt.values);
    for (int k = 0; k < 2; ++k)
      out.provenance["baseline"][lower(kKinds[k])] = provenance(src_.path[k], src_.hash[k], false, nullptr, nullptr);

    auto drca_branch = [&](const std::string& method, const FeatureMatrix& target) {
      const std::string st = method + ":" + name;
      stage(st, [&] {
        const ProjectionModel pm = fit_drca(xs_, target, cfg_.drca);
        const std::string ppath = mdir + file_stem(method) + "_projection.json";
        const std::uint64_t ph = art_.json_file(ppath, pm.to_json());
        const Matrix zs = drca_transform(pm, xs_);
        const Matrix zt = drca_transform(pm, target);
        for (int k = 0; k < 2; ++k) {
          TrainConfig tc = src_.train[k];
          tc.input_scaling = InputScaling::Isotropic;
          const Matrix y = label_matrix(kKinds[k]);
          MlhmModel m = train_mlhm(zs, y, tc, MlhmArch{static_cast<std::size_t>(zs.cols()), cfg_.hidden, static_cast<std::size_t>(y.cols())});
          m.input_space = "drca:" + hash_hex(ph);
          m.input_fingerprint = ph;
          const std::string mpath = mdir + file_stem(method) + "_mlhm_" + lower(kKinds[k]) + ".json";
          const std::uint64_t mh = art_.json_file(mpath, m.to_json());
          pred[method][k] = predict(m, zt);
          const std::string phex = hash_hex(ph);
          out.provenance[method][lower(kKinds[k])] = provenance(mpath, hash_hex(mh), true, &ppath, &phex);
          log("[" + name + "] " + method + " " + std::string(to_string(kKinds[k])) + " estimator retrained in " +
              std::to_string(zs.cols()) + "-d subspace (" + std::to_string(m.history.train_loss.size()) + " epochs)");
        }
      });
    };

    if (cfg_.has_method("drca")) drca_branch("drca", xt);

    const bool needs_gan = cfg_.has_method("cyclegan") || cfg_.has_method("shiftgan") || cfg_.has_method("gan+drca");
    if (needs_gan) {
      FeatureMatrix translated;
      std::string gpath, ghex;
      CycleGanModel gan;
      stage("cyclegan:" + name, [&] {
        GanConfig gc = cfg_.gan;
        gc.seed = mix_seed(cfg_.gan.seed, job.index);
        gan = train_cyclegan(xs_, xt, gc);
        gpath = mdir + "cyclegan.json";
        ghex = hash_hex(art_.json_file(gpath, gan.to_json()));
        translated = translate_to_source(gan, xt);
        const auto& last = gan.history.back();
        log("[" + name + "] cycle-gan trained (" + std::to_string(gan.history.size()) + " epochs, cycle " +
            num(last.cycle_s) + " / " + num(last.cycle_t) + ")");
      });
      if (cfg_.has_method("cyclegan") || cfg_.has_method("shiftgan")) {
        std::array<Matrix, 2> p;
        for (int k = 0; k < 2; ++k) p[k] = predict(src_.model[k], translated.values);
        for (const char* m : {"cyclegan", "shiftgan"}) {
          if (!cfg_.has_method(m)) continue;
          pred[m] = p;
          for (int k = 0; k < 2; ++k)
            out.provenance[m][lower(kKinds[k])] = provenance(src_.path[k], src_.hash[k], false, &gpath, &ghex);
        }
      }
      if (cfg_.has_method("shiftgan")) {
        stage("shiftgan:" + name, [&] {
          auto standardized = [&](const Matrix& x) -> Matrix {
            return (x.rowwise() - gan.center.transpose()).array().rowwise() / gan.scale.transpose().array();
          };
          const KmmResult kmm = kmm_weights(standardized(xs_.values), standardized(translated.values), cfg_.kmm);
          kmm_w = kmm.weights;
          std::ostringstream w;
          w << "impact_id,weight\n";
          for (Eigen::Index i = 0; i < kmm.weights.size(); ++i) w << xt.ids[static_cast<std::size_t>(i)] << ',' << num(kmm.weights(i)) << '\n';
          art_.text(mdir + "kmm_weights.csv", w.str());
          out.provenance["shiftgan"]["kmm"] = {{"objective", kmm.objective},
                                               {"uniform_objective", kmm.uniform_objective},
                                               {"bandwidth", kmm.bandwidth},
                                               {"iterations", kmm.iterations},
                                               {"converged", kmm.converged}};
          log("[" + name + "] KMM objective " + num(kmm.objective) + " vs uniform " + num(kmm.uniform_objective) +
              (kmm.converged ? "" : " (warning: iteration cap reached)"));
        });
      }
      if (cfg_.has_method("gan+drca")) drca_branch("gan+drca", translated);
    }

    // Errors and flags.
    stage("evaluate:" + name, [&] {
      std::ostringstream flags;
      auto add_flags = [&](const std::string& method, const Matrix& m, LabelKind kind) {
        const auto fields = fields_from(m, kind);
        for (const auto& f : threshold_flags(fields, cfg_.thresholds, xt.ids))
          flags << name << ',' << method << ',' << f.impact_id << ',' << to_string(f.kind) << ',' << num(f.percentile_value)
                << ',' << (f.flagged ? 1 : 0) << '\n';
      };
      for (int k = 0; k < 2; ++k) {
        if (ds.has_labels()) add_flags("reference", ds.label_matrix(kKinds[k]), kKinds[k]);
        for (const auto& method : cfg_.methods) add_flags(method, pred.at(method)[k], kKinds[k]);
      }
      out.flag_rows = flags.str();
      if (!ds.has_labels()) return;
      for (const auto& method : cfg_.methods) {
        for (int k = 0; k < 2; ++k) {
          MethodErrors me;
          me.target = kKinds[k];
          me.dataset = name;
          me.method = method;
          me.errors = error_metrics(pred.at(method)[k], ds.label_matrix(kKinds[k]), xt.ids);
          const Vector* w = nullptr;
          if (method == "shiftgan") {
            w = &kmm_w;
            me.weights = std::vector<double>(kmm_w.data(), kmm_w.data() + kmm_w.size());
          }
          const std::string rel = "errors/" + name + "/" + file_stem(method) + "_" + lower(kKinds[k]) + ".csv";
          art_.text(rel, errors_csv(me.errors, w));
          out.error_index.push_back({{"dataset", name}, {"method", method}, {"target", to_string(kKinds[k])}, {"path", rel}});
          out.errors.push_back(std::move(me));
        }
      }
    });
    return out;
  }

 private:
  Matrix label_matrix(LabelKind kind) const { return kind == LabelKind::MPS ? y_source_[0] : y_source_[1]; }

  static json provenance(const std::string& mlhm, const std::string& hash, bool retrained, const std::string* adapter,
                         const std::string* adapter_hash) {
    return {{"mlhm", mlhm},
            {"mlhm_hash", hash},
            {"retrained", retrained},
            {"adapter", adapter ? json(*adapter) : json(nullptr)},
            {"adapter_hash", adapter_hash ? json(*adapter_hash) : json(nullptr)}};
  }

  void log(const std::string& s) const {
    if (opts_.log) {
      std::lock_guard lock(log_mu_);
      opts_.log(s);
    }
  }

 public:
  Matrix y_source_[2];

 private:
  const PipelineConfig& cfg_;
  const RunOptions& opts_;
  Artifacts& art_;
  const FeatureSchema& schema_;
  const FeatureMatrix& xs_;
  const SourceModels& src_;
  static inline std::mutex log_mu_;
};

}  // namespace

const char* to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Synth:
      return "synth";
    case Stage::Featurize:
      return "featurize";
    case Stage::Train:
      return "train";
    case Stage::Adapt:
      return "adapt";
    case Stage::Evaluate:
      return "evaluate";
  }
  return "evaluate";
}

std::size_t worker_count(std::size_t jobs, std::optional<std::size_t> requested) {
  std::size_t n = 0;
  if (requested) {
    n = *requested;
  } else if (const char* env = std::getenv("DRIFT_ADAPT_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("DRIFT_ADAPT_THREADS must be a positive integer, got '" + std::string(env) + "'");
    n = static_cast<std::size_t>(v);
  } else {
    n = std::max(1u, std::thread::hardware_concurrency());
  }
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(jobs, 1));
}

RunResult run_pipeline(const PipelineConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  RunResult result;
  result.output = cfg.output;
  fs::create_directories(cfg.output);
  Artifacts art(cfg.output);
  auto log = [&](const std::string& s) {
    if (opts.log) opts.log(s);
  };

  const json resolved = to_json(cfg);
  const std::string config_hash = hash_hex(art.json_file("resolved_config.json", resolved));
  json manifest{{"seed", cfg.seed}, {"config_hash", config_hash}, {"stop_after", to_string(opts.stop_after)}};
  json datasets = json::array();
  json provenance = json::object();
  json error_index = json::array();

  auto finalize = [&](const std::string& status, const StageError* failure) {
    manifest["status"] = status;
    if (failure) {
      manifest["failed_stage"] = failure->stage();
      manifest["error"] = failure->what();
    }
    manifest["datasets"] = datasets;
    manifest["provenance"] = provenance;
    manifest["errors"] = error_index;
    manifest["files"] = art.files();
    write_json(manifest, cfg.output / "manifest.json");
  };

  try {
    const FeatureSchema schema = stage("schema", [&] {
      if (cfg.schema == "default") return FeatureSchema::default_schema();
      FeatureSchema s = FeatureSchema::from_json(read_json(cfg.schema));
      s.validate();
      return s;
    });

    Dataset source = stage("load:" + cfg.source.name, [&] {
      Dataset ds = load_spec(cfg.source, cfg);
      if (!ds.has_labels()) throw SchemaError("the source dataset needs MPS and MPSR labels");
      if (cfg.augment) {
        ds = augment_axes(ds);
        log("[source] axis-switching augmentation: " + std::to_string(ds.size()) + " recordings");
      }
      return ds;
    });
    datasets.push_back({{"name", cfg.source.name}, {"role", "source"}, {"impacts", source.size()}, {"labeled", true}});

    std::vector<Job> jobs;
    for (std::size_t k = 0; k < cfg.targets.size(); ++k) jobs.push_back({&cfg.targets[k], "target", k});
    for (std::size_t k = 0; k < cfg.holdout.size(); ++k) jobs.push_back({&cfg.holdout[k], "holdout", cfg.targets.size() + k});

    if (opts.stop_after == Stage::Synth) {
      stage("synth", [&] {
        save_dataset(source, cfg.output / "data" / cfg.source.name);
        for (const auto& j : jobs) {
          const Dataset ds = load_spec(*j.spec, cfg);
          save_dataset(ds, cfg.output / "data" / j.spec->name);
          datasets.push_back({{"name", j.spec->name}, {"role", j.role}, {"impacts", ds.size()}, {"labeled", ds.has_labels()}});
        }
      });
      log("datasets written under " + (cfg.output / "data").string());
      finalize("complete", nullptr);
      return result;
    }

    const FeatureMatrix xs = stage("featurize:" + cfg.source.name, [&] { return featurize_dataset(source, schema); });
    log("[source] " + std::to_string(xs.rows()) + " impacts x " + std::to_string(xs.cols()) + " features");

    if (opts.stop_after == Stage::Featurize) {
      stage("featurize", [&] {
        auto save = [&](const FeatureMatrix& fm, const std::string& name) {
          const fs::path p = cfg.output / "features" / name / "features.csv";
          save_feature_matrix(fm, p);
        };
        save(xs, cfg.source.name);
        for (const auto& j : jobs) {
          const Dataset ds = load_spec(*j.spec, cfg);
          save(featurize_dataset(ds, schema), j.spec->name);
          datasets.push_back({{"name", j.spec->name}, {"role", j.role}, {"impacts", ds.size()}, {"labeled", ds.has_labels()}});
        }
      });
      finalize("complete", nullptr);
      return result;
    }

    SourceModels src;
    Matrix y_source[2];
    stage("train:" + cfg.source.name, [&] {
      json test_mae = json::object();
      for (int k = 0; k < 2; ++k) {
        y_source[k] = source.label_matrix(kKinds[k]);
        src.train[k] = cfg.train;
        src.train[k].seed = mix_seed(cfg.train.seed, static_cast<std::uint64_t>(k));
        const MlhmArch arch{xs.cols(), cfg.hidden, static_cast<std::size_t>(y_source[k].cols())};
        src.model[k] = train_mlhm(xs.values, y_source[k], src.train[k], arch);
        src.model[k].input_space = "raw";
        src.model[k].input_fingerprint = schema.fingerprint();
        src.path[k] = "models/source_mlhm_" + lower(kKinds[k]) + ".json";
        src.hash[k] = hash_hex(art.json_file(src.path[k], src.model[k].to_json()));
        const auto& rows = src.model[k].test_rows;
        Matrix xt(static_cast<Eigen::Index>(rows.size()), xs.values.cols());
        Matrix yt(static_cast<Eigen::Index>(rows.size()), y_source[k].cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          xt.row(static_cast<Eigen::Index>(i)) = xs.values.row(static_cast<Eigen::Index>(rows[i]));
          yt.row(static_cast<Eigen::Index>(i)) = y_source[k].row(static_cast<Eigen::Index>(rows[i]));
        }
        const ErrorSummary es = error_metrics(predict(src.model[k], xt), yt);
        result.source_test_mae[std::string(to_string(kKinds[k]))] = es.mean_mae;
        test_mae[std::string(to_string(kKinds[k]))] = {{"mean_mae", es.mean_mae}, {"mean_rmse", es.mean_rmse}, {"impacts", rows.size()}};
        log("[source] " + std::string(to_string(kKinds[k])) + " estimator: " +
            std::to_string(src.model[k].history.train_loss.size()) + " epochs, source-test MAE " + num(es.mean_mae));
      }
      manifest["source_test"] = test_mae;
    });

    if (opts.stop_after == Stage::Train) {
      finalize("complete", nullptr);
      return result;
    }

    TargetRunner runner(cfg, opts, art, schema, xs, src);
    runner.y_source_[0] = y_source[0];
    runner.y_source_[1] = y_source[1];
    std::vector<JobOutcome> outcomes(jobs.size());
    std::vector<std::exception_ptr> failures(jobs.size());
    const std::size_t workers = worker_count(jobs.size(), opts.threads);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        try {
          outcomes[i] = runner.run(jobs[i]);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      }
    };
    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (failures[i]) {
        try {
          std::rethrow_exception(failures[i]);
        } catch (const StageError&) {
          throw;
        } catch (const std::exception& e) {
          throw StageError("target:" + jobs[i].spec->name, e.what());
        }
      }
    }

    std::vector<MethodErrors> all_errors;
    std::string flags = "dataset,method,impact_id,kind,percentile_value,flagged\n";
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      auto& o = outcomes[i];
      datasets.push_back(o.dataset);
      provenance[jobs[i].spec->name] = o.provenance;
      for (auto& e : o.error_index) error_index.push_back(e);
      for (auto& e : o.errors) all_errors.push_back(std::move(e));
      flags += o.flag_rows;
    }
    art.text("flags.csv", flags);

    if (opts.stop_after == Stage::Adapt) {
      finalize("complete", nullptr);
      return result;
    }

    stage("report", [&] {
      if (!all_errors.empty()) result.report = build_report(all_errors);
      art.text("report.csv", result.report.to_csv());
      art.text("report.txt", result.report.to_text());
    });
    finalize("complete", nullptr);
    log("report written to " + (cfg.output / "report.txt").string());
    return result;
  } catch (const StageError& e) {
    finalize("incomplete", &e);
    throw;
  }
}

Report evaluate_directory(const fs::path& out_dir) {
  const fs::path mpath = out_dir / "manifest.json";
  json manifest = read_json(mpath);
  std::vector<MethodErrors> errors;
  try {
    for (const auto& e : manifest.at("errors"))
      errors.push_back(read_errors_csv(out_dir / e.at("path").get<std::string>(),
                                       label_kind_from_string(e.at("target").get<std::string>()),
                                       e.at("dataset").get<std::string>(), e.at("method").get<std::string>()));
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("malformed manifest " + mpath.string() + ": " + ex.what());
  }
  Report report;
  if (!errors.empty()) report = build_report(errors);
  Artifacts art(out_dir);
  const std::string csv = report.to_csv();
  const std::string txt = report.to_text();
  art.text("report.csv", csv);
  art.text("report.txt", txt);
  manifest["files"]["report.csv"] = hash_hex(fnv1a64(csv));
  manifest["files"]["report.txt"] = hash_hex(fnv1a64(txt));
  write_json(manifest, mpath);
  return report;
}

}  // namespace headstrain
