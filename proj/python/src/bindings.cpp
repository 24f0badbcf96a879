#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "headstrain/adversarial.hpp"
#include "headstrain/config.hpp"
#include "headstrain/drca.hpp"
#include "headstrain/error.hpp"
#include "headstrain/eval.hpp"
#include "headstrain/featurize.hpp"
#include "headstrain/impact_data.hpp"
#include "headstrain/linalg.hpp"
#include "headstrain/mlhm.hpp"
#include "headstrain/pipeline.hpp"

namespace py = pybind11;
using namespace headstrain;

namespace {

Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::Synth, Stage::Featurize, Stage::Train, Stage::Adapt, Stage::Evaluate})
    if (s == to_string(st)) return st;
  throw ConfigError("unknown stage '" + s + "'");
}

py::dict report_dict(const Report& r) {
  py::list rows;
  for (const auto& m : r.rows) {
    py::dict d;
    d["method"] = m.method;
    d["target"] = std::string(to_string(m.target));
    d["dataset"] = m.dataset;
    d["mean_mae"] = m.mean_mae;
    d["mean_rmse"] = m.mean_rmse;
    d["relative_mae_change"] = m.relative_mae_change;
    d["relative_rmse_change"] = m.relative_rmse_change;
    d["t_statistic"] = m.t_statistic;
    d["p_value"] = m.p_value;
    d["weighted_mae"] = m.weighted_mae;
    d["impacts"] = m.impacts;
    rows.append(d);
  }
  py::dict out;
  out["rows"] = rows;
  out["csv"] = r.to_csv();
  out["text"] = r.to_text();
  return out;
}

MlhmArch arch_for(const std::string& name, std::size_t in, std::size_t out) {
  if (name == "desk") return MlhmArch::desk(in, out);
  if (name == "large") return MlhmArch::large(in, out);
  throw ConfigError("unknown architecture '" + name + "' (expected desk or large)");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Head-impact strain estimation with unsupervised domain adaptation";

  static py::exception<Error> base(m, "HeadstrainError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<InsufficientSamplesError>(m, "InsufficientSamplesError", base.ptr());
  py::register_exception<SymmetryError>(m, "SymmetryError", base.ptr());
  py::register_exception<NotPositiveDefiniteError>(m, "NotPositiveDefiniteError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<DegenerateTestError>(m, "DegenerateTestError", base.ptr());
  py::register_exception<ReportError>(m, "ReportError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  // Data

  py::class_<Interval>(m, "Interval")
      .def(py::init<double, double>(), py::arg("lo"), py::arg("hi"))
      .def_readwrite("lo", &Interval::lo)
      .def_readwrite("hi", &Interval::hi);

  py::class_<DriftConfig>(m, "DriftConfig")
      .def(py::init<>())
      .def_readwrite("pulse_duration", &DriftConfig::pulse_duration)
      .def_readwrite("peak_ang_vel", &DriftConfig::peak_ang_vel)
      .def_readwrite("peak_lin_acc", &DriftConfig::peak_lin_acc)
      .def_readwrite("noise_std", &DriftConfig::noise_std)
      .def_readwrite("channel_gain", &DriftConfig::channel_gain)
      .def_readwrite("dc_offset", &DriftConfig::dc_offset)
      .def_readwrite("frequency_shift", &DriftConfig::frequency_shift)
      .def_readwrite("seed", &DriftConfig::seed)
      .def_readwrite("sample_rate", &DriftConfig::sample_rate)
      .def_readwrite("duration", &DriftConfig::duration);

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_property_readonly("ids", &Dataset::ids)
      .def_property_readonly("has_labels", &Dataset::has_labels)
      .def_readonly("domain_tag", &Dataset::domain_tag)
      .def(
          "labels", [](const Dataset& d, const std::string& kind) { return d.label_matrix(label_kind_from_string(kind)); },
          py::arg("kind"), "N x elements label matrix for 'MPS' or 'MPSR'")
      .def(
          "lin_acc", [](const Dataset& d, std::size_t i) -> Matrix { return d.recordings.at(i).lin_acc; }, py::arg("index"))
      .def(
          "ang_vel", [](const Dataset& d, std::size_t i) -> Matrix { return d.recordings.at(i).ang_vel; }, py::arg("index"));

  m.def(
      "synth_dataset",
      [](const DriftConfig& cfg, std::size_t n, bool labels, std::size_t elements, std::string domain_tag) {
        std::optional<LabelConfig> lc;
        if (labels) lc = LabelConfig{elements, LabelConfig{}.seed};
        return synth_dataset(cfg, n, lc, std::move(domain_tag));
      },
      py::arg("config"), py::arg("n"), py::arg("labels") = true, py::arg("elements") = 128,
      py::arg("domain_tag") = "source");
  m.def("augment_axes", &augment_axes, py::arg("dataset"));
  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));

  // Features

  py::class_<FeatureMatrix>(m, "FeatureMatrix")
      .def_readonly("values", &FeatureMatrix::values)
      .def_readonly("ids", &FeatureMatrix::ids)
      .def_readonly("domain_tag", &FeatureMatrix::domain_tag)
      .def_property_readonly("names", [](const FeatureMatrix& f) { return f.schema.names(); })
      .def_property_readonly("shape", [](const FeatureMatrix& f) { return py::make_tuple(f.rows(), f.cols()); });

  m.def(
      "featurize", [](const Dataset& ds) { return featurize_dataset(ds, FeatureSchema::default_schema()); },
      py::arg("dataset"), "Default 512-column kinematic feature matrix");

  // Linear algebra and DRCA

  m.def("cholesky", &cholesky, py::arg("a"));
  m.def(
      "generalized_eig",
      [](const Matrix& a, const Matrix& b) {
        const EigenPairs e = generalized_eig(a, b);
        return py::make_tuple(e.values, e.vectors);
      },
      py::arg("m"), py::arg("b"), "Solves M p = theta B p; returns (values descending, vectors)");

  py::class_<DrcaConfig>(m, "DrcaConfig")
      .def(py::init<>())
      .def_readwrite("dim", &DrcaConfig::dim)
      .def_readwrite("alpha", &DrcaConfig::alpha)
      .def_readwrite("epsilon", &DrcaConfig::epsilon)
      .def_readwrite("standardize", &DrcaConfig::standardize);

  py::class_<ProjectionModel>(m, "ProjectionModel")
      .def_readonly("projection", &ProjectionModel::projection)
      .def_readonly("theta", &ProjectionModel::theta)
      .def_readonly("eigenvalues", &ProjectionModel::eigenvalues)
      .def_readonly("ridge", &ProjectionModel::ridge)
      .def(
          "transform", [](const ProjectionModel& pm, const Matrix& x) { return drca_transform(pm, x); }, py::arg("x"))
      .def("to_json", [](const ProjectionModel& pm) { return pm.to_json().dump(); });

  m.def(
      "fit_drca", [](const Matrix& xs, const Matrix& xt, const DrcaConfig& cfg) { return fit_drca(xs, xt, cfg); },
      py::arg("source"), py::arg("target"), py::arg("config") = DrcaConfig{});

  // MLHM

  py::enum_<InputScaling>(m, "InputScaling")
      .value("PerColumn", InputScaling::PerColumn)
      .value("Isotropic", InputScaling::Isotropic);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("l2_weight", &TrainConfig::l2_weight)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("early_stop_patience", &TrainConfig::early_stop_patience)
      .def_readwrite("train_fraction", &TrainConfig::train_fraction)
      .def_readwrite("val_fraction", &TrainConfig::val_fraction)
      .def_readwrite("test_fraction", &TrainConfig::test_fraction)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("input_scaling", &TrainConfig::input_scaling);

  py::class_<MlhmModel>(m, "MlhmModel")
      .def("predict", [](const MlhmModel& model, const Matrix& x) { return predict(model, x); }, py::arg("x"))
      .def_property_readonly("train_loss", [](const MlhmModel& model) { return model.history.train_loss; })
      .def_property_readonly("val_loss", [](const MlhmModel& model) { return model.history.val_loss; })
      .def_property_readonly("best_epoch", [](const MlhmModel& model) { return model.history.best_epoch; })
      .def_readonly("train_rows", &MlhmModel::train_rows)
      .def_readonly("val_rows", &MlhmModel::val_rows)
      .def_readonly("test_rows", &MlhmModel::test_rows)
      .def("to_json", [](const MlhmModel& model) { return model.to_json().dump(); });

  m.def(
      "train_mlhm",
      [](const Matrix& x, const Matrix& y, const TrainConfig& cfg, const std::string& arch) {
        return train_mlhm(x, y, cfg, arch_for(arch, static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(y.cols())));
      },
      py::arg("x"), py::arg("y"), py::arg("config") = TrainConfig{}, py::arg("arch") = "desk");

  // Adversarial adaptation

  py::class_<GanConfig>(m, "GanConfig")
      .def(py::init<>())
      .def_readwrite("generator_widths", &GanConfig::generator_widths)
      .def_readwrite("discriminator_widths", &GanConfig::discriminator_widths)
      .def_readwrite("lambda_s", &GanConfig::lambda_s)
      .def_readwrite("lambda_t", &GanConfig::lambda_t)
      .def_readwrite("noise_dropout", &GanConfig::noise_dropout)
      .def_readwrite("lr_g", &GanConfig::lr_g)
      .def_readwrite("lr_d", &GanConfig::lr_d)
      .def_readwrite("epochs", &GanConfig::epochs)
      .def_readwrite("batch_size", &GanConfig::batch_size)
      .def_readwrite("seed", &GanConfig::seed)
      .def_property(
          "norm", [](const GanConfig& c) { return std::string(to_string(c.norm)); },
          [](GanConfig& c, const std::string& s) { c.norm = cycle_norm_from_string(s); })
      .def_readwrite("identity_init", &GanConfig::identity_init)
      .def_readwrite("freeze_generators", &GanConfig::freeze_generators);

  py::class_<CycleGanModel>(m, "CycleGanModel")
      .def(
          "translate_to_source", [](const CycleGanModel& g, const Matrix& xt) { return translate_to_source(g, xt); },
          py::arg("xt"))
      .def(
          "cycle_losses", [](const CycleGanModel& g, const Matrix& xs, const Matrix& xt) { return cycle_losses(g, xs, xt); },
          py::arg("xs"), py::arg("xt"))
      .def_property_readonly("history", [](const CycleGanModel& g) {
        py::list out;
        for (const auto& e : g.history) {
          py::dict d;
          d["cycle_s"] = e.cycle_s;
          d["cycle_t"] = e.cycle_t;
          d["adv_g"] = e.adv_g;
          d["loss_d"] = e.loss_d;
          out.append(d);
        }
        return out;
      });

  m.def(
      "train_cyclegan",
      [](const Matrix& xs, const Matrix& xt, const GanConfig& cfg) { return train_cyclegan(xs, xt, cfg); },
      py::arg("source"), py::arg("target"), py::arg("config") = GanConfig{});

  py::class_<KmmConfig>(m, "KmmConfig")
      .def(py::init<>())
      .def_readwrite("bandwidth", &KmmConfig::bandwidth)
      .def_readwrite("weight_cap", &KmmConfig::weight_cap)
      .def_readwrite("slack", &KmmConfig::slack)
      .def_readwrite("iterations", &KmmConfig::iterations)
      .def_readwrite("tolerance", &KmmConfig::tolerance);

  py::class_<KmmResult>(m, "KmmResult")
      .def_readonly("weights", &KmmResult::weights)
      .def_readonly("objective", &KmmResult::objective)
      .def_readonly("uniform_objective", &KmmResult::uniform_objective)
      .def_readonly("bandwidth", &KmmResult::bandwidth)
      .def_readonly("iterations", &KmmResult::iterations)
      .def_readonly("converged", &KmmResult::converged);

  m.def("kmm_weights", &kmm_weights, py::arg("reference"), py::arg("adjusted"), py::arg("config") = KmmConfig{});

  // Evaluation

  py::class_<TTestResult>(m, "TTestResult")
      .def_readonly("t", &TTestResult::t)
      .def_readonly("p_two_sided", &TTestResult::p_two_sided)
      .def_readonly("n", &TTestResult::n);

  m.def(
      "paired_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) { return paired_t_test(a, b); }, py::arg("a"),
      py::arg("b"));
  m.def("student_t_cdf", &student_t_cdf, py::arg("t"), py::arg("df"));
  m.def("relative_change", &relative_change, py::arg("baseline"), py::arg("value"));
  m.def(
      "error_metrics",
      [](const Matrix& pred, const Matrix& ref) {
        const ErrorSummary s = error_metrics(pred, ref);
        return py::make_tuple(s.mean_mae, s.mean_rmse, s.maes());
      },
      py::arg("pred"), py::arg("ref"), "Returns (mean MAE, mean RMSE, per-impact MAE)");

  // Pipeline

  m.def(
      "run",
      [](const std::string& config_json, std::optional<std::uint64_t> seed, std::optional<std::string> out,
         std::optional<std::size_t> threads, const std::string& stop_after) {
        PipelineConfig cfg = parse_config(nlohmann::json::parse(config_json), seed);
        if (out) cfg.output = *out;
        RunOptions opts;
        opts.stop_after = stage_from_string(stop_after);
        opts.threads = threads;
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(cfg, opts);
        }
        py::dict d = report_dict(r.report);
        d["source_test_mae"] = r.source_test_mae;
        d["output"] = r.output.string();
        return d;
      },
      py::arg("config_json"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      py::arg("threads") = py::none(), py::arg("stop_after") = "evaluate");
  m.def(
      "resolve_config",
      [](const std::string& config_json, std::optional<std::uint64_t> seed) {
        return to_json(parse_config(nlohmann::json::parse(config_json), seed)).dump();
      },
      py::arg("config_json"), py::arg("seed") = py::none());
  m.def(
      "evaluate_directory", [](const std::string& dir) { return report_dict(evaluate_directory(dir)); },
      py::arg("out_dir"));
}
