#pragma once

// End-to-end experiment runner: data, features, source estimators, per-target
// adaptation, evaluation and the output directory layout
//
//   models/  errors/  report.csv  report.txt  flags.csv  manifest.json
//   resolved_config.json
//
// Targets (and hold-out sets) are independent and may run concurrently; the
// environment variable DRIFT_ADAPT_THREADS caps the worker count. Results do
// not depend on the worker count.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "headstrain/config.hpp"
#include "headstrain/eval.hpp"

namespace headstrain {

enum class Stage { Synth, Featurize, Train, Adapt, Evaluate };

const char* to_string(Stage s) noexcept;

struct RunOptions {
  Stage stop_after = Stage::Evaluate;
  std::optional<std::size_t> threads;  // overrides DRIFT_ADAPT_THREADS
  std::function<void(const std::string&)> log;  // progress lines; null is silent
};

struct RunResult {
  Report report;
  std::map<std::string, double> source_test_mae;  // "MPS" / "MPSR"
  std::filesystem::path output;
};

/// Runs the stages up to `opts.stop_after`, writing under cfg.output. A failing
/// stage raises StageError after the manifest has been written with status
/// "incomplete".
RunResult run_pipeline(const PipelineConfig& cfg, const RunOptions& opts = {});

/// Rebuilds report.csv and report.txt from the per-impact error files listed
/// in an existing output directory's manifest.
Report evaluate_directory(const std::filesystem::path& out_dir);

/// Worker count from DRIFT_ADAPT_THREADS (at least 1, at most `jobs`).
std::size_t worker_count(std::size_t jobs, std::optional<std::size_t> requested = std::nullopt);

}  // namespace headstrain
