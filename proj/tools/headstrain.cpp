// headstrain command-line driver.
//
//   headstrain run --config cfg.json [--seed N] [--out DIR] [--methods baseline,drca]
//
// synth, featurize, train and adapt rerun the pipeline up to that stage;
// evaluate rebuilds the report from the error files in an existing output
// directory.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "headstrain/config.hpp"
#include "headstrain/error.hpp"
#include "headstrain/pipeline.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kStageExit = 3;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string methods;
  std::size_t threads = 0;
  bool quiet = false;
};

void add_common(CLI::App* sub, Args& a, bool config_required) {
  auto* opt = sub->add_option("--config,-c", a.config, "experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", a.seed, "global seed (overrides the config)");
  sub->add_option("--out,-o", a.out, "output directory (overrides the config)");
  sub->add_option("--threads", a.threads, "worker threads for target datasets (overrides DRIFT_ADAPT_THREADS)");
  sub->add_flag("--quiet,-q", a.quiet, "suppress progress output");
}

headstrain::PipelineConfig load(const Args& a) {
  headstrain::PipelineConfig cfg = headstrain::parse_config_file(a.config, a.seed);
  if (!a.out.empty()) cfg.output = a.out;
  if (!a.methods.empty()) cfg.methods = headstrain::parse_method_list(a.methods);
  cfg.validate();
  return cfg;
}

int run_stage(const Args& a, headstrain::Stage stage) {
  const headstrain::PipelineConfig cfg = load(a);
  headstrain::RunOptions opts;
  opts.stop_after = stage;
  if (a.threads > 0) opts.threads = a.threads;
  if (!a.quiet) opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
  const headstrain::RunResult r = headstrain::run_pipeline(cfg, opts);
  if (stage == headstrain::Stage::Evaluate && !a.quiet) std::cout << r.report.to_text();
  return 0;
}

int evaluate(const Args& a) {
  std::string out = a.out;
  if (out.empty()) {
    if (a.config.empty()) throw headstrain::ConfigError("evaluate needs --out or --config");
    out = load(a).output.string();
  }
  const headstrain::Report report = headstrain::evaluate_directory(out);
  if (!a.quiet) std::cout << report.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Head-impact brain strain estimation under domain drift"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "headstrain 0.1.0");

  Args args;
  struct Sub {
    const char* name;
    const char* help;
    headstrain::Stage stage;
  };
  const Sub stages[] = {
      {"synth", "generate (or load) the datasets and write them under data/", headstrain::Stage::Synth},
      {"featurize", "write feature matrices under features/", headstrain::Stage::Featurize},
      {"train", "train the source MPS and MPSR estimators", headstrain::Stage::Train},
      {"adapt", "run the adaptation methods and write per-impact errors", headstrain::Stage::Adapt},
      {"run", "full pipeline including the report", headstrain::Stage::Evaluate},
  };
  std::vector<std::pair<CLI::App*, headstrain::Stage>> subs;
  for (const auto& s : stages) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, args, true);
    sub->add_option("--methods,-m", args.methods, "comma-separated methods: baseline,drca,cyclegan,shiftgan,gan+drca");
    subs.emplace_back(sub, s.stage);
  }
  CLI::App* eval = app.add_subcommand("evaluate", "rebuild report.csv and report.txt from an output directory");
  add_common(eval, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (eval->parsed()) return evaluate(args);
    for (const auto& [sub, stage] : subs)
      if (sub->parsed()) return run_stage(args, stage);
  } catch (const headstrain::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const headstrain::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageExit;
  }
  return 0;
}
