#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "alsim/errors.hpp"
#include "alsim/log.hpp"
#include "alsim/simulator.hpp"
#include "alsim/synthetic.hpp"
#include "support.hpp"

using namespace alsim;

namespace {

struct Fixture {
  testing::TempDir dir;
  ExperimentConfig cfg;

  explicit Fixture(std::size_t train = 100) {
    SyntheticSpec spec;
    spec.train = train;
    spec.dev = 30;
    spec.test = 30;
    write_jsonl_splits(generate_synthetic(spec, 5), dir / "raw");
    cfg.data.source = (dir / "raw").string();
    cfg.experiment.step_size = 10;
    cfg.experiment.initial_ratio = 0.05;
    cfg.experiment.budget = 1000;
    cfg.experiment.seeds = {42, 4711};
    cfg.tracking.revision = "t1";
  }

  std::filesystem::path store_path(std::string_view name = "store") const { return dir / std::string(name); }
};

// In-memory inputs for a config; keeps the fitted objects alive.
struct Inputs {
  DatasetSplit split;
  Vocabulary vocab;
  FeatureTable features;
  SimulationInputs in;

  Inputs(const ExperimentConfig& cfg, DatasetSplit s)
      : split(std::move(s)),
        vocab(fit_vocabulary(split.train, cfg.trainer)),
        features(split, vocab),
        in{cfg, split, vocab, features} {}
};

struct WarningCapture {
  std::vector<std::string> lines;
  WarningCapture() {
    log::set_sink([this](log::Level l, std::string_view m) {
      if (l == log::Level::warn) lines.emplace_back(m);
    });
  }
  ~WarningCapture() { log::set_sink({}); }
};

std::size_t count(const std::vector<std::string>& lines, std::string_view needle) {
  return static_cast<std::size_t>(
      std::count_if(lines.begin(), lines.end(), [&](const std::string& l) { return l == needle; }));
}

bool contains(const std::vector<std::string>& lines, std::string_view needle) { return count(lines, needle) > 0; }

std::vector<std::string> log_since(const RunStore& store, std::size_t from) {
  auto all = store.execution_log();
  return {all.begin() + static_cast<std::ptrdiff_t>(from), all.end()};
}

}  // namespace

TEST_CASE("initial set size is the ceiling of ratio times pool") {
  CHECK(initial_set_size(0.05, 100) == 5);
  CHECK(initial_set_size(0.05, 25000) == 1250);
  CHECK(initial_set_size(0.1, 7) == 1);
  CHECK(initial_set_size(0.07, 100) == 7);
  CHECK(initial_set_size(0.0, 10) == 0);
  CHECK(initial_set_size(1.0, 10) == 10);
}

TEST_CASE("labeled counts grow by the step size and end at the pool") {
  Fixture f;
  Inputs in(f.cfg, convert_raw(f.dir / "raw", f.cfg));
  const auto steps = run_seed_steps(in.in, 42);
  std::vector<std::uint64_t> counts;
  for (const auto& s : steps) counts.push_back(s.labeled_count);
  CHECK(counts == std::vector<std::uint64_t>{5, 15, 25, 35, 45, 55, 65, 75, 85, 95, 100});
  for (std::size_t i = 0; i < steps.size(); ++i) CHECK(steps[i].step_index == static_cast<std::int64_t>(i));
}

TEST_CASE("the labeled order is the concatenation of batches and covers the pool") {
  Fixture f;
  for (const char* strategy : {"random", "margin", "kmeans"}) {
    CAPTURE(strategy);
    f.cfg.teacher.strategy = strategy;
    Inputs in(f.cfg, convert_raw(f.dir / "raw", f.cfg));
    SeedRun run(in.in, 4711);
    run.initialize();
    while (run.advance()) {
    }
    std::vector<DocId> concatenated;
    for (const auto& s : run.steps()) concatenated.insert(concatenated.end(), s.batch.begin(), s.batch.end());
    CHECK(run.annotation().labeled() == concatenated);
    std::vector<DocId> sorted = concatenated;
    std::sort(sorted.begin(), sorted.end());
    std::vector<DocId> pool(100);
    std::iota(pool.begin(), pool.end(), DocId{0});
    CHECK(sorted == pool);
    CHECK(run.annotation().unlabeled().empty());
    CHECK(run.finished());
    CHECK_FALSE(run.advance());
  }
}

TEST_CASE("strategies share the initial set for a seed") {
  Fixture f;
  const auto split = convert_raw(f.dir / "raw", f.cfg);
  std::vector<std::vector<DocId>> initial;
  for (const char* strategy : {"random", "margin", "kmeans"}) {
    auto cfg = f.cfg;
    cfg.teacher.strategy = strategy;
    Inputs in(cfg, split);
    SeedRun run(in.in, 42);
    run.initialize();
    initial.push_back(run.steps().front().batch);
  }
  CHECK(initial[0] == initial[1]);
  CHECK(initial[0] == initial[2]);
  CHECK(initial[0].size() == 5);
}

TEST_CASE("runs are deterministic per seed and differ across seeds") {
  Fixture f;
  f.cfg.teacher.strategy = "margin";
  const auto split = convert_raw(f.dir / "raw", f.cfg);
  CHECK(run_seed(f.cfg, split, 42) == run_seed(f.cfg, split, 42));
  Inputs in(f.cfg, split);
  CHECK(run_seed_steps(in.in, 42).front().batch != run_seed_steps(in.in, 768).front().batch);
}

TEST_CASE("stop conditions") {
  Fixture f;
  const auto split = convert_raw(f.dir / "raw", f.cfg);
  SUBCASE("max_steps") {
    f.cfg.experiment.max_steps = 2;
    Inputs in(f.cfg, split);
    const auto steps = run_seed_steps(in.in, 42);
    CHECK(steps.size() == 3);
    CHECK(steps.back().labeled_count == 25);
  }
  SUBCASE("threshold already met after the initial step") {
    f.cfg.experiment.stop_threshold = 0.0;
    Inputs in(f.cfg, split);
    CHECK(run_seed_steps(in.in, 42).size() == 1);
  }
  SUBCASE("budget caps the batch but not the step") {
    f.cfg.experiment.step_size = 30;
    f.cfg.experiment.budget = 30;
    Inputs in(f.cfg, split);
    const auto steps = run_seed_steps(in.in, 42);
    CHECK(steps[1].labeled_count == 35);
    CHECK(steps.back().labeled_count == 100);
  }
}

TEST_CASE("hooks run in propose, annotate, train, evaluate order") {
  Fixture f;
  f.cfg.experiment.max_steps = 1;
  Inputs in(f.cfg, convert_raw(f.dir / "raw", f.cfg));
  std::vector<std::string> events;
  SimulationHooks hooks;
  hooks.trace = [&](std::string_view e) { events.emplace_back(e); };
  run_seed_steps(in.in, 42, hooks);
  const std::vector<std::string> expected = {"propose",       "annotate",           "train",   "evaluate_dev",
                                             "evaluate_test", "after_initial_train", "propose", "annotate",
                                             "train",         "evaluate_dev",       "evaluate_test", "after_train"};
  CHECK(events == expected);
}

TEST_CASE("an empty initial set evaluates the untrained model") {
  Fixture f;
  f.cfg.experiment.initial_ratio = 0.0;
  f.cfg.experiment.max_steps = 1;
  Inputs in(f.cfg, convert_raw(f.dir / "raw", f.cfg));
  std::vector<std::string> events;
  SimulationHooks hooks;
  hooks.trace = [&](std::string_view e) { events.emplace_back(e); };
  const auto steps = run_seed_steps(in.in, 42, hooks);
  CHECK(steps[0].labeled_count == 0);
  CHECK(steps[0].batch.empty());
  CHECK(std::find(events.begin(), events.begin() + 4, std::string("train")) == events.begin() + 4);
  CHECK(steps[1].labeled_count == 10);
}

TEST_CASE("oracle annotation") {
  Fixture f;
  Inputs in(f.cfg, convert_raw(f.dir / "raw", f.cfg));
  SeedRun run(in.in, 42);
  CHECK(run.oracle_annotate(std::vector<DocId>{}).empty());
  const std::vector<DocId> ids = {3, 0, 7};
  const auto labels = run.oracle_annotate(ids);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(labels[i] == in.split.train[ids[i]].gold_label);
  const DocId test_id = in.split.test.front().id;
  CHECK_THROWS_AS(run.oracle_annotate(std::vector<DocId>{test_id}), ValidationError);
}

TEST_CASE("span corpora are rejected by the simulator") {
  DataConfig data;
  std::vector<RawDocument> one = {parse_raw_record(R"({"text":"Berlin","labels":[[0,6,"LOC"]]})", data, "t:1")};
  const auto split = convert_records(one, one, one);
  ExperimentConfig cfg;
  Inputs in(cfg, split);
  try {
    SeedRun run(in.in, 1);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "data");
  }
}

TEST_CASE("a misbehaving teacher fails the seed run and blocks aggregation") {
  struct Duplicates final : Teacher {
    std::vector<DocId> propose(const ProposeContext& ctx) override {
      return std::vector<DocId>(ctx.step_size, ctx.potential_ids.front());
    }
  };
  TeacherRegistry::instance().add("duplicates", [](const TeacherEnv&) { return std::make_unique<Duplicates>(); });
  Fixture f;
  f.cfg.teacher.strategy = "duplicates";
  RunStore store(f.store_path());
  log::set_level(log::Level::off);
  const auto result = run_experiment(f.cfg, store);
  log::set_level(log::Level::info);
  CHECK_FALSE(result.success);
  CHECK(result.aggregate_run_id.empty());
  for (const auto& s : result.seeds) {
    CHECK(s.status == RunStatus::failed);
    CHECK(s.error.find("duplicate") != std::string::npos);
    CHECK(store.get_run(s.run_id)->status == RunStatus::failed);
  }
  CHECK(contains(store.execution_log(), "skip aggregate (seed run failed)"));
}

TEST_CASE("progress encoding round-trips and rejects garbage") {
  Fixture f;
  f.cfg.experiment.max_steps = 2;
  Inputs in(f.cfg, convert_raw(f.dir / "raw", f.cfg));
  SeedRun run(in.in, 42);
  run.initialize();
  run.advance();
  const auto text = encode_progress(run.progress());
  const auto back = decode_progress(text);
  REQUIRE(back.steps.size() == 2);
  CHECK(back.steps[1].batch == run.steps()[1].batch);
  CHECK(back.steps[1].test.macro_f1 == run.steps()[1].test.macro_f1);
  CHECK(encode_progress(back) == text);
  CHECK_THROWS_AS(decode_progress("{not json"), CorruptArtifact);
}

TEST_CASE("worker count does not change results") {
  Fixture f;
  f.cfg.experiment.seeds = {42, 4711, 768, 4656, 32213};
  f.cfg.tracking.worker_count = 1;
  RunStore one(f.store_path("one"));
  const auto a = run_experiment(f.cfg, one);
  f.cfg.tracking.worker_count = 5;
  RunStore five(f.store_path("five"));
  const auto b = run_experiment(f.cfg, five);
  REQUIRE(a.success);
  REQUIRE(b.success);
  REQUIRE(a.seeds.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.seeds[i].seed == b.seeds[i].seed);
    CHECK(a.seeds[i].curve == b.seeds[i].curve);
    CHECK(a.seeds[i].run_id == b.seeds[i].run_id);
  }
  CHECK(aggregate_to_csv(a.aggregate) == aggregate_to_csv(b.aggregate));
}

TEST_CASE("tracked curves match the in-memory run; one seed aggregates to itself") {
  Fixture f;
  f.cfg.experiment.seeds = {42};
  f.cfg.teacher.strategy = "margin";
  RunStore store(f.store_path());
  const auto result = run_experiment(f.cfg, store);
  REQUIRE(result.success);
  const auto direct = run_seed(f.cfg, convert_raw(f.dir / "raw", f.cfg), 42);
  CHECK(result.seeds[0].curve == direct);
  REQUIRE(result.aggregate.points.size() == direct.points.size());
  for (std::size_t i = 0; i < direct.points.size(); ++i) {
    for (const auto& [name, v] : direct.points[i].metrics) {
      CHECK(result.aggregate.points[i].metrics.at(name).mean == v);
    }
  }
  const auto run = store.get_run(result.seeds[0].run_id);
  CHECK(store.metrics(*run).size() == 3 * direct.points.size());
  for (const char* name : {"progress.json", "curve.csv", "labeled_order.txt", "vocabulary.tsv"}) {
    CHECK(store.has_artifact(*run, name));
  }
  // Only the latest checkpoint is kept.
  CHECK(store.has_artifact(*run, "checkpoint-10.bin"));
  CHECK_FALSE(store.has_artifact(*run, "checkpoint-9.bin"));
}

TEST_CASE("rerunning an unchanged experiment executes nothing") {
  Fixture f;
  RunStore store(f.store_path());
  const auto first = run_experiment(f.cfg, store);
  REQUIRE(first.success);
  const auto before = store.execution_log().size();
  const auto second = run_experiment(f.cfg, store);
  REQUIRE(second.success);
  const auto log = store.execution_log();
  CHECK(log.size() == before + 4);
  CHECK(log.back() == "skip aggregate (cache hit)");
  for (std::size_t i = before; i < log.size(); ++i) CHECK(log[i].rfind("skip ", 0) == 0);
  CHECK(second.aggregate_run_id == first.aggregate_run_id);
  for (std::size_t i = 0; i < 2; ++i) CHECK(second.seeds[i].curve == first.seeds[i].curve);
}

TEST_CASE("changing the step size reruns seed runs only; a new revision recomputes everything") {
  Fixture f;
  f.cfg.experiment.seeds = {42};
  RunStore store(f.store_path());
  REQUIRE(run_experiment(f.cfg, store).success);

  auto before = store.execution_log().size();
  f.cfg.experiment.step_size = 20;
  REQUIRE(run_experiment(f.cfg, store).success);
  auto log = log_since(store, before);
  CHECK(contains(log, "skip load_raw (cache hit)"));
  CHECK(contains(log, "skip convert (cache hit)"));
  CHECK(contains(log, "execute seed_run(42)"));
  CHECK(contains(log, "execute aggregate"));

  before = store.execution_log().size();
  f.cfg.tracking.revision = "t2";
  REQUIRE(run_experiment(f.cfg, store).success);
  log = log_since(store, before);
  CHECK(contains(log, "execute load_raw"));
  CHECK(contains(log, "execute convert"));
  CHECK(contains(log, "execute seed_run(42)"));
}

TEST_CASE("editing a raw file invalidates the cached conversion") {
  Fixture f;
  f.cfg.experiment.seeds = {42};
  RunStore store(f.store_path());
  REQUIRE(run_experiment(f.cfg, store).success);
  const auto before = store.execution_log().size();
  auto dev = testing::read_file(f.dir / "raw" / "dev.jsonl");
  testing::write_file(f.dir / "raw" / "dev.jsonl", dev + "{\"text\":\"alpha1 extra\",\"label\":\"pos\"}\n");
  REQUIRE(run_experiment(f.cfg, store).success);
  const auto log = store.execution_log();
  CHECK(std::find(log.begin() + static_cast<std::ptrdiff_t>(before), log.end(), "execute convert") != log.end());
}

TEST_CASE("an interrupted run resumed later equals an uninterrupted twin") {
  for (std::int64_t j : {0, 1, 3}) {
    CAPTURE(j);
    Fixture f;
    f.cfg.experiment.seeds = {42};
    f.cfg.teacher.strategy = "margin";

    RunStore twin(f.store_path("twin"));
    const auto full = run_experiment(f.cfg, twin);
    REQUIRE(full.success);

    RunStore store(f.store_path("broken"));
    RunOptions stop;
    stop.hooks.interrupt_after_step = j;
    log::set_level(log::Level::off);
    const auto partial = run_experiment(f.cfg, store, stop);
    log::set_level(log::Level::info);
    CHECK_FALSE(partial.success);
    REQUIRE(partial.seeds.size() == 1);
    CHECK(partial.seeds[0].interrupted);
    CHECK(store.get_run(partial.seeds[0].run_id)->status == RunStatus::failed);

    const auto before = store.execution_log().size();
    RunOptions resume;
    resume.resume = true;
    const auto resumed = run_experiment(f.cfg, store, resume);
    REQUIRE(resumed.success);
    CHECK(resumed.seeds[0].resumed);
    CHECK(resumed.seeds[0].curve == full.seeds[0].curve);

    const auto a = *twin.get_run(full.seeds[0].run_id);
    const auto b = *store.get_run(resumed.seeds[0].run_id);
    CHECK(twin.get_artifact(a, "curve.csv") == store.get_artifact(b, "curve.csv"));
    CHECK(twin.get_artifact(a, "labeled_order.txt") == store.get_artifact(b, "labeled_order.txt"));
    const auto ma = twin.metrics(a);
    const auto mb = store.metrics(b);
    REQUIRE(ma.size() == mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) {
      CHECK(ma[i].step_index == mb[i].step_index);
      CHECK(ma[i].name == mb[i].name);
      CHECK(ma[i].value == mb[i].value);
    }

    // Completed steps are not retrained.
    const auto log = store.execution_log();
    for (std::int64_t s = 0; s <= j; ++s) {
      CHECK(std::find(log.begin() + static_cast<std::ptrdiff_t>(before), log.end(),
                      "train seed=42 step=" + std::to_string(s)) == log.end());
    }
    CHECK(count(log, "train seed=42 step=" + std::to_string(j + 1)) == 1);
  }
}

TEST_CASE("cancellation stops after the step in flight") {
  Fixture f;
  f.cfg.experiment.seeds = {42, 4711};
  std::atomic<bool> cancel{true};
  RunStore store(f.store_path());
  RunOptions opts;
  opts.hooks.cancel = &cancel;
  log::set_level(log::Level::off);
  const auto r = run_experiment(f.cfg, store, opts);
  log::set_level(log::Level::info);
  CHECK_FALSE(r.success);
  for (const auto& s : r.seeds) CHECK(s.interrupted);
  CHECK(contains(store.execution_log(), "skip aggregate (seed run failed)"));
}

TEST_CASE("without resume a failed run starts over") {
  Fixture f;
  f.cfg.experiment.seeds = {42};
  RunStore store(f.store_path());
  RunOptions stop;
  stop.hooks.interrupt_after_step = 2;
  log::set_level(log::Level::off);
  run_experiment(f.cfg, store, stop);
  log::set_level(log::Level::info);
  const auto again = run_experiment(f.cfg, store);
  REQUIRE(again.success);
  CHECK_FALSE(again.seeds[0].resumed);
  CHECK(count(store.execution_log(), "train seed=42 step=0") == 2);
  // Metrics are not duplicated for steps logged before the restart.
  const auto run = store.get_run(again.seeds[0].run_id);
  CHECK(store.metrics(*run).size() == 3 * again.seeds[0].curve.points.size());
}

TEST_CASE("a corrupt checkpoint restarts the seed run with a warning") {
  Fixture f;
  f.cfg.experiment.seeds = {42};
  RunStore twin(f.store_path("twin"));
  const auto full = run_experiment(f.cfg, twin);

  RunStore store(f.store_path());
  RunOptions stop;
  stop.hooks.interrupt_after_step = 2;
  log::set_level(log::Level::off);
  const auto partial = run_experiment(f.cfg, store, stop);
  log::set_level(log::Level::info);
  const auto run = *store.get_run(partial.seeds[0].run_id);
  testing::write_file(store.artifact_path(run, "checkpoint-2.bin"), "garbage");

  WarningCapture warnings;
  RunOptions resume;
  resume.resume = true;
  const auto r = run_experiment(f.cfg, store, resume);
  REQUIRE(r.success);
  CHECK_FALSE(r.seeds[0].resumed);
  CHECK(r.seeds[0].curve == full.seeds[0].curve);
  REQUIRE_FALSE(warnings.lines.empty());
  CHECK(warnings.lines.front().find("restarting from scratch") != std::string::npos);
}

TEST_CASE("resuming under a different configuration is refused") {
  Fixture f;
  f.cfg.experiment.seeds = {42};
  RunStore store(f.store_path());
  RunOptions stop;
  stop.hooks.interrupt_after_step = 1;
  log::set_level(log::Level::off);
  const auto partial = run_experiment(f.cfg, store, stop);
  log::set_level(log::Level::info);
  const auto run_id = partial.seeds[0].run_id;

  auto changed = f.cfg;
  changed.trainer.learning_rate = 0.25;
  {
    Experiment exp(changed, store);
    try {
      exp.resume_seed_run(run_id, {});
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "config");
    }
  }
  Experiment exp(f.cfg, store);
  const auto r = exp.resume_seed_run(run_id, {});
  CHECK(r.status == RunStatus::success);
  CHECK(r.resumed);
  CHECK_THROWS_AS(exp.resume_seed_run("no-such-run", {}), ValidationError);
}
