// alsim: convert corpora, run active-learning simulations, report curves.
//
// Exit codes: 0 success, 1 IO error or failed seed run, 2 invalid config or
// input, 130 interrupted (SIGINT or --interrupt-after).

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "alsim/config.hpp"
#include "alsim/errors.hpp"
#include "alsim/log.hpp"
#include "alsim/simulator.hpp"
#include "alsim/tracking.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitInterrupted = 130;

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) {
  g_cancel.store(true);
  // A second Ctrl-C kills the process outright.
  std::signal(SIGINT, SIG_DFL);
}

struct Globals {
  std::string config;
  std::vector<std::string> sets;
  std::string store;
  bool verbose = false;
};

std::filesystem::path store_root(const Globals& g, const alsim::ExperimentConfig* cfg) {
  if (!g.store.empty()) return g.store;
  if (const char* env = std::getenv("ALSIM_STORE"); env && *env) return env;
  if (cfg) return cfg->store_dir();
  return "runs";
}

alsim::ExperimentConfig load_config(const Globals& g) {
  if (g.config.empty()) throw alsim::ValidationError("--config", "a config file is required");
  return alsim::parse_config(g.config, g.sets);
}

int cmd_convert(const Globals& g) {
  const auto cfg = load_config(g);
  alsim::RunStore store(store_root(g, &cfg));
  const auto split = alsim::prepare_data(cfg, store);
  fmt::print("converted: {} train / {} dev / {} test documents, {} labels\n", split.train.size(), split.dev.size(),
             split.test.size(), split.labels.size());
  return kExitOk;
}

int cmd_run(const Globals& g, bool resume, std::optional<std::int64_t> interrupt_after) {
  const auto cfg = load_config(g);
  alsim::RunStore store(store_root(g, &cfg));
  alsim::RunOptions options;
  options.resume = resume;
  options.hooks.cancel = &g_cancel;
  options.hooks.interrupt_after_step = interrupt_after;

  std::signal(SIGINT, on_sigint);
  const auto result = alsim::run_experiment(cfg, store, options);
  std::signal(SIGINT, SIG_DFL);

  bool interrupted = false;
  for (const auto& s : result.seeds) {
    std::string note = s.cache_hit ? " (cached)" : s.resumed ? " (resumed)" : "";
    if (s.status == alsim::RunStatus::success) {
      const auto& last = s.curve.points.back();
      fmt::print("seed {}: {} success{}, {} steps, final test macro-F1 {:.4f} at {} labeled\n", s.seed, s.run_id,
                 note, s.curve.points.size(), last.metrics.at(std::string(alsim::kTestMacroF1)),
                 last.labeled_count);
    } else {
      fmt::print("seed {}: {} failed: {}\n", s.seed, s.run_id.empty() ? "-" : s.run_id, s.error);
    }
    interrupted = interrupted || s.interrupted;
  }
  if (result.success) {
    fmt::print("aggregate: {}\n", result.aggregate_run_id);
    return kExitOk;
  }
  fmt::print("aggregate: skipped (rerun with --resume to continue)\n");
  return interrupted || g_cancel.load() ? kExitInterrupted : kExitFailure;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_report(const Globals& g, const std::string& runs, const std::string& out_dir, const std::string& metric) {
  std::optional<alsim::ExperimentConfig> cfg;
  if (!g.config.empty()) cfg = load_config(g);
  alsim::RunStore store(store_root(g, cfg ? &*cfg : nullptr));

  const auto ids = split_list(runs);
  if (ids.empty()) throw alsim::ValidationError("--runs", "no run ids given");
  std::vector<alsim::PlotSeries> series;
  for (const auto& id : ids) {
    const auto run = store.get_run(id);
    if (!run) throw alsim::ValidationError("--runs", "unknown run id " + id);
    if (run->step_name != "aggregate") {
      throw alsim::ValidationError("--runs", fmt::format("run {} is a {} run, not an aggregate", id, run->step_name));
    }
    if (run->status != alsim::RunStatus::success) {
      throw alsim::ValidationError("--runs", fmt::format("run {} has status {}", id, alsim::to_string(run->status)));
    }
    const auto params = store.params(*run);
    std::string label = params.at("teacher").at("strategy").get<std::string>();
    for (const auto& s : series) {
      if (s.label == label) {
        label += " (" + id + ")";
        break;
      }
    }
    series.push_back({label, alsim::aggregate_from_csv(store.get_artifact(*run, "aggregate.csv"))});
  }

  std::filesystem::create_directories(out_dir);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto path = std::filesystem::path(out_dir) / (ids[i] + ".csv");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw alsim::IoError("cannot write " + path.string());
    out << alsim::aggregate_to_csv(series[i].curve);
    fmt::print("wrote {}\n", path.string());
  }
  const auto svg_path = std::filesystem::path(out_dir) / "comparison.svg";
  std::ofstream svg(svg_path, std::ios::binary | std::ios::trunc);
  if (!svg) throw alsim::IoError("cannot write " + svg_path.string());
  svg << alsim::render_svg(series, metric, "Learning curves: " + metric);
  fmt::print("wrote {}\n", svg_path.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-learning strategy simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Experiment config (YAML)");
  app.add_option("--set", g.sets, "Override a config leaf: key.path=value (repeatable)");
  app.add_option("--store", g.store, "Run store root (default: $ALSIM_STORE, then tracking.store)");
  app.add_flag("-v,--verbose", g.verbose, "Log every step");

  auto* convert = app.add_subcommand("convert", "Load and convert the raw corpus into the run store");

  auto* run = app.add_subcommand("run", "Convert, simulate every seed and aggregate");
  bool resume = false;
  std::optional<std::int64_t> interrupt_after;
  run->add_flag("--resume", resume, "Continue failed seed runs from their last checkpoint");
  run->add_option("--interrupt-after", interrupt_after, "Stop every seed run after committing this step")
      ->check(CLI::NonNegativeNumber);

  auto* report = app.add_subcommand("report", "Export aggregate CSVs and an overlay plot");
  std::string runs;
  std::string out_dir;
  std::string metric = std::string(alsim::kTestMacroF1);
  report->add_option("--runs", runs, "Comma-separated aggregate run ids")->required();
  report->add_option("--out", out_dir, "Output directory")->required();
  report->add_option("--metric", metric, "Metric to plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }
  alsim::log::set_level(g.verbose ? alsim::log::Level::debug : alsim::log::Level::info);

  try {
    if (*convert) return cmd_convert(g);
    if (*run) return cmd_run(g, resume, interrupt_after);
    if (*report) return cmd_report(g, runs, out_dir, metric);
  } catch (const alsim::ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInvalid;
  } catch (const alsim::ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
