#include "alsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "alsim/digest.hpp"
#include "alsim/errors.hpp"
#include "alsim/log.hpp"

namespace alsim {

using nlohmann::json;

namespace {

constexpr std::string_view kProgressArtifact = "progress.json";
constexpr std::string_view kCurveArtifact = "curve.csv";
constexpr std::string_view kOrderArtifact = "labeled_order.txt";
constexpr std::string_view kVocabularyArtifact = "vocabulary.tsv";
constexpr std::string_view kAggregateArtifact = "aggregate.csv";

const char* const kRawNames[3] = {"train.jsonl", "dev.jsonl", "test.jsonl"};

std::string checkpoint_name(std::int64_t step) { return fmt::format("checkpoint-{}.bin", step); }

std::string seed_step_name(std::int64_t seed) { return fmt::format("seed_run({})", seed); }

json report_to_json(const EvaluationReport& r) {
  json per = json::array();
  for (const auto& s : r.per_label) {
    per.push_back({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}});
  }
  return {{"split", r.split},
          {"labeled_count", r.labeled_count},
          {"macro_f1", r.macro_f1},
          {"accuracy", r.accuracy},
          {"per_label", per}};
}

EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  r.split = j.at("split").get<std::string>();
  r.labeled_count = j.at("labeled_count").get<std::uint64_t>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  for (const auto& s : j.at("per_label")) {
    r.per_label.push_back({s.at("precision").get<double>(), s.at("recall").get<double>(), s.at("f1").get<double>(),
                           s.at("support").get<std::uint64_t>()});
  }
  return r;
}

json without(json j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) j.erase(k);
  return j;
}

std::string labeled_order_text(std::span<const DocId> ids) {
  std::string out;
  for (DocId id : ids) out += fmt::format("{}\n", id);
  return out;
}

}  // namespace

LearningCurve to_learning_curve(std::int64_t seed, std::span<const StepRecord> steps) {
  LearningCurve curve;
  curve.seed = seed;
  for (const auto& s : steps) {
    CurvePoint p;
    p.step_index = s.step_index;
    p.labeled_count = s.labeled_count;
    p.metrics[std::string(kDevMacroF1)] = s.dev.macro_f1;
    p.metrics[std::string(kTestMacroF1)] = s.test.macro_f1;
    curve.points.push_back(std::move(p));
  }
  return curve;
}

std::size_t initial_set_size(double initial_ratio, std::size_t pool_size) {
  const double x = initial_ratio * static_cast<double>(pool_size);
  auto n = static_cast<std::size_t>(std::ceil(x - 1e-9));
  return std::min(n, pool_size);
}

std::string stream_fingerprint(const ExperimentConfig& cfg) {
  const json tree = config_to_json(cfg);
  json key;
  key["data"] = without(tree.at("data"), {"source"});
  key["trainer"] = tree.at("trainer");
  const auto& e = tree.at("experiment");
  key["experiment"] = {{"step_size", e.at("step_size")},
                       {"initial_ratio", e.at("initial_ratio")},
                       {"budget", e.at("budget")},
                       {"tracking_metric", e.at("tracking_metric")}};
  return sha256_hex(canonical_serialize(key));
}

std::string encode_progress(const SeedProgress& progress) {
  json steps = json::array();
  for (const auto& s : progress.steps) {
    steps.push_back({{"step_index", s.step_index},
                     {"labeled_count", s.labeled_count},
                     {"batch", s.batch},
                     {"dev", report_to_json(s.dev)},
                     {"test", report_to_json(s.test)}});
  }
  return json{{"finished", progress.finished}, {"steps", steps}}.dump() + "\n";
}

SeedProgress decode_progress(std::string_view text) {
  try {
    const json j = json::parse(text);
    SeedProgress p;
    p.finished = j.at("finished").get<bool>();
    for (const auto& s : j.at("steps")) {
      StepRecord r;
      r.step_index = s.at("step_index").get<std::int64_t>();
      r.labeled_count = s.at("labeled_count").get<std::uint64_t>();
      r.batch = s.at("batch").get<std::vector<DocId>>();
      r.dev = report_from_json(s.at("dev"));
      r.test = report_from_json(s.at("test"));
      p.steps.push_back(std::move(r));
    }
    return p;
  } catch (const json::exception& e) {
    throw CorruptArtifact(std::string("progress: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// SeedRun

SeedRun::SeedRun(const SimulationInputs& inputs, std::int64_t seed, SimulationHooks hooks)
    : inputs_(inputs), seed_(seed), hooks_(std::move(hooks)), stream_fp_(stream_fingerprint(inputs.config)) {
  if (inputs.split.task != TaskKind::classification) {
    throw ValidationError("data", "span tasks unsupported: the simulator trains classifiers only");
  }
  const auto& cfg = inputs.config;
  trainer_ = std::make_unique<OnlineTrainer>(inputs.split, inputs.features, inputs.vocabulary.size(), cfg.trainer);
  Rng fit_rng = Rng::derive(stream_fp_, seed_, "teacher.fit:" + cfg.teacher.strategy);
  TeacherEnv env{cfg, inputs.split, inputs.features, inputs.vocabulary.size(), inputs.split.labels.size(), fit_rng};
  teacher_ = TeacherRegistry::instance().create(cfg.teacher.strategy, env);

  std::vector<DocId> pool;
  pool.reserve(inputs.split.train.size());
  for (const auto& d : inputs.split.train) pool.push_back(d.id);
  state_ = AnnotationState(pool);
}

SeedRun::~SeedRun() = default;

void SeedRun::trace(std::string_view event) const {
  if (hooks_.trace) hooks_.trace(event);
}

std::vector<LabelIndex> SeedRun::oracle_annotate(std::span<const DocId> ids) const {
  std::vector<LabelIndex> out;
  out.reserve(ids.size());
  const auto& train = inputs_.split.train;
  for (DocId id : ids) {
    // Train ids are dense from 0, so the id doubles as the index.
    if (id >= train.size()) throw ValidationError("ids", fmt::format("unknown id {} (not in the train pool)", id));
    out.push_back(train[id].gold_label);
  }
  return out;
}

std::vector<DocId> SeedRun::checked_proposal(std::vector<DocId> proposal, std::span<const DocId> potential,
                                             std::size_t expected) const {
  if (proposal.size() != expected) {
    throw ValidationError("teacher", fmt::format("proposal has {} ids, expected {}", proposal.size(), expected));
  }
  std::set<DocId> seen;
  for (DocId id : proposal) {
    if (!seen.insert(id).second) throw ValidationError("teacher", fmt::format("duplicate id {} in proposal", id));
    if (!std::binary_search(potential.begin(), potential.end(), id)) {
      throw ValidationError("teacher", fmt::format("proposed id {} is not in the unlabeled pool", id));
    }
  }
  return proposal;
}

void SeedRun::record_step(std::int64_t step_index, std::vector<DocId> batch, bool initial) {
  const auto labels = oracle_annotate(batch);
  trace("annotate");
  state_.mark_labeled(batch);
  labels_.insert(labels_.end(), labels.begin(), labels.end());

  if (!state_.labeled().empty()) {
    trace("train");
    Rng rng = Rng::derive(stream_fp_, seed_, "trainer", static_cast<std::int64_t>(trainer_->model().step_counter));
    trainer_->train(state_.labeled(), labels_, rng);
    trainer_rng_state_ = rng.state();
  }

  trace("evaluate_dev");
  StepRecord rec;
  rec.step_index = step_index;
  rec.labeled_count = state_.labeled().size();
  rec.batch = std::move(batch);
  rec.dev = trainer_->evaluate_dev();
  rec.dev.labeled_count = rec.labeled_count;
  trace("evaluate_test");
  rec.test = trainer_->evaluate_test();
  rec.test.labeled_count = rec.labeled_count;

  if (initial) {
    teacher_->after_initial_train(rec.dev);
    trace("after_initial_train");
  } else {
    teacher_->after_train(rec.dev);
    trace("after_train");
  }
  steps_.push_back(std::move(rec));
}

void SeedRun::initialize() {
  if (!steps_.empty()) throw std::logic_error("seed run already initialized");
  const auto& cfg = inputs_.config;
  const auto potential = state_.unlabeled_ids();
  const std::size_t n0 = initial_set_size(cfg.experiment.initial_ratio, potential.size());

  std::vector<DocId> batch;
  if (n0 > 0) {
    Rng fit_rng = Rng::derive(stream_fp_, seed_, "initial.fit:" + cfg.teacher.initial_strategy);
    TeacherEnv env{cfg, inputs_.split, inputs_.features, inputs_.vocabulary.size(), inputs_.split.labels.size(),
                   fit_rng};
    auto initial = TeacherRegistry::instance().create(cfg.teacher.initial_strategy, env);
    const auto clamp = clamp_step(potential.size(), n0, static_cast<std::size_t>(cfg.experiment.budget));
    Rng rng = Rng::derive(stream_fp_, seed_, "initial:" + cfg.teacher.initial_strategy);
    trace("propose");
    batch = checked_proposal(initial->propose({potential, clamp.step_size, clamp.budget, *trainer_, rng}),
                             potential, clamp.step_size);
  }
  record_step(0, std::move(batch), true);
}

bool SeedRun::finished() const {
  if (stopped_) return true;
  if (steps_.empty()) return false;
  if (state_.unlabeled().empty()) return true;
  const auto& e = inputs_.config.experiment;
  if (e.max_steps && steps_.back().step_index >= *e.max_steps) return true;
  if (e.stop_threshold && steps_.back().test.macro_f1 >= *e.stop_threshold) return true;
  return false;
}

bool SeedRun::advance() {
  if (steps_.empty()) throw std::logic_error("seed run not initialized");
  if (finished()) return false;
  const auto& cfg = inputs_.config;
  const auto step_index = steps_.back().step_index + 1;
  const auto potential = state_.unlabeled_ids();
  const auto clamp = clamp_step(potential.size(), static_cast<std::size_t>(cfg.experiment.step_size),
                                static_cast<std::size_t>(cfg.experiment.budget));
  Rng rng = Rng::derive(stream_fp_, seed_, "propose:" + cfg.teacher.strategy, step_index);
  trace("propose");
  auto batch = checked_proposal(teacher_->propose({potential, clamp.step_size, clamp.budget, *trainer_, rng}),
                                potential, clamp.step_size);
  record_step(step_index, std::move(batch), false);
  return true;
}

void SeedRun::restore(const SeedProgress& progress, const Checkpoint& checkpoint) {
  if (!steps_.empty()) throw std::logic_error("restore needs a fresh seed run");
  if (progress.steps.empty()) throw CorruptArtifact("progress: no steps recorded");
  AnnotationState state = state_;
  std::vector<LabelIndex> labels;
  std::uint64_t trainings = 0;
  for (std::size_t i = 0; i < progress.steps.size(); ++i) {
    const auto& s = progress.steps[i];
    if (s.step_index != static_cast<std::int64_t>(i)) throw CorruptArtifact("progress: step indices not dense");
    try {
      state.mark_labeled(s.batch);
      const auto l = oracle_annotate(s.batch);
      labels.insert(labels.end(), l.begin(), l.end());
    } catch (const ValidationError& e) {
      throw CorruptArtifact(std::string("progress: ") + e.what());
    }
    if (state.labeled().size() != s.labeled_count) throw CorruptArtifact("progress: labeled count mismatch");
    if (!state.labeled().empty()) ++trainings;
  }
  if (checkpoint.model.step_counter != trainings) {
    throw CorruptArtifact(fmt::format("checkpoint step counter {} does not match {} recorded trainings",
                                      checkpoint.model.step_counter, trainings));
  }
  try {
    trainer_->set_model(checkpoint.model);
  } catch (const ValidationError& e) {
    throw CorruptArtifact(std::string("checkpoint: ") + e.what());
  }
  state_ = std::move(state);
  labels_ = std::move(labels);
  steps_ = progress.steps;
  trainer_rng_state_ = checkpoint.rng_state;
}

Checkpoint SeedRun::checkpoint() const { return {trainer_->model(), trainer_rng_state_}; }

SeedProgress SeedRun::progress() const { return {steps_, finished()}; }

std::vector<StepRecord> run_seed_steps(const SimulationInputs& inputs, std::int64_t seed, SimulationHooks hooks) {
  SeedRun run(inputs, seed, std::move(hooks));
  run.initialize();
  while (run.advance()) {
  }
  return run.steps();
}

LearningCurve run_seed(const ExperimentConfig& cfg, const DatasetSplit& split, std::int64_t seed) {
  const Vocabulary vocab = fit_vocabulary(split.train, cfg.trainer);
  const FeatureTable features(split, vocab);
  const SimulationInputs inputs{cfg, split, vocab, features};
  return to_learning_curve(seed, run_seed_steps(inputs, seed));
}

// ---------------------------------------------------------------------------
// Fingerprints and data steps

std::string data_fingerprint(const ExperimentConfig& cfg) {
  const json tree = config_to_json(cfg);
  // The source path itself is left out: the file digests cover the content.
  std::string key = canonical_serialize(without(tree.at("data"), {"source"}));
  const auto dir = cfg.source_dir();
  for (const auto& name : {cfg.data.train_file, cfg.data.dev_file, cfg.data.test_file}) {
    key += "\n" + sha256_file(dir / name);
  }
  return sha256_hex(key);
}

namespace {

json seed_run_key(const ExperimentConfig& cfg, std::string_view data_fp) {
  const json tree = config_to_json(cfg);
  return {{"data", std::string(data_fp)},
          {"experiment", without(tree.at("experiment"), {"seeds"})},
          {"teacher", tree.at("teacher")},
          {"trainer", tree.at("trainer")}};
}

}  // namespace

std::string seed_run_fingerprint(const ExperimentConfig& cfg, std::string_view data_fp, std::int64_t seed) {
  json key = seed_run_key(cfg, data_fp);
  key["seed"] = seed;
  return sha256_hex(canonical_serialize(key));
}

std::string aggregate_fingerprint(const ExperimentConfig& cfg, std::string_view data_fp) {
  json key = seed_run_key(cfg, data_fp);
  key["seeds"] = cfg.experiment.seeds;
  return sha256_hex(canonical_serialize(key));
}

DatasetSplit prepare_data(const ExperimentConfig& cfg, RunStore& store) {
  const std::string fp = data_fingerprint(cfg);
  const std::string& rev = cfg.tracking.revision;
  const json params = config_to_json(cfg).at("data");

  auto raw = store.find_matching_run("load_raw", fp, rev);
  if (raw && raw->status == RunStatus::success) {
    store.log_execution("skip load_raw (cache hit)");
  } else {
    store.log_execution("execute load_raw");
    auto run = store.begin_run("load_raw", fp, rev, params);
    try {
      const auto dir = cfg.source_dir();
      const std::string files[3] = {cfg.data.train_file, cfg.data.dev_file, cfg.data.test_file};
      for (int i = 0; i < 3; ++i) {
        std::ifstream probe(dir / files[i], std::ios::binary);
        if (!probe) throw IoError("cannot open " + (dir / files[i]).string());
        std::string bytes((std::istreambuf_iterator<char>(probe)), std::istreambuf_iterator<char>());
        store.put_artifact(run, kRawNames[i], bytes);
      }
      store.set_status(run, RunStatus::success);
    } catch (...) {
      store.set_status(run, RunStatus::failed);
      throw;
    }
    raw = run;
  }

  auto conv = store.find_matching_run("convert", fp, rev);
  if (conv && conv->status == RunStatus::success) {
    store.log_execution("skip convert (cache hit)");
  } else {
    store.log_execution("execute convert");
    auto run = store.begin_run("convert", fp, rev, params);
    try {
      std::vector<RawDocument> parts[3];
      const std::string files[3] = {cfg.data.train_file, cfg.data.dev_file, cfg.data.test_file};
      for (int i = 0; i < 3; ++i) {
        parts[i] = parse_raw_jsonl(store.get_artifact(*raw, kRawNames[i]), cfg.data, files[i]);
      }
      const DatasetSplit split = convert_records(std::move(parts[0]), std::move(parts[1]), std::move(parts[2]));
      store.put_artifact(run, kCorpusFile, encode_corpus(split));
      store.put_artifact(run, kLabelsFile, encode_labels(split.labels));
      store.log_metric(run, 0, "train_docs", static_cast<double>(split.train.size()));
      store.log_metric(run, 0, "dev_docs", static_cast<double>(split.dev.size()));
      store.log_metric(run, 0, "test_docs", static_cast<double>(split.test.size()));
      store.log_metric(run, 0, "labels", static_cast<double>(split.labels.size()));
      store.set_status(run, RunStatus::success);
    } catch (...) {
      store.set_status(run, RunStatus::failed);
      throw;
    }
    conv = run;
  }

  DatasetSplit split = decode_corpus(store.get_artifact(*conv, kCorpusFile), store.get_artifact(*conv, kLabelsFile));
  auto loaded = store.find_matching_run("load_converted", fp, rev);
  if (loaded && loaded->status == RunStatus::success) {
    store.log_execution("skip load_converted (cache hit)");
  } else {
    store.log_execution("execute load_converted");
    auto run = store.begin_run("load_converted", fp, rev, params);
    store.log_metric(run, 0, "documents",
                     static_cast<double>(split.train.size() + split.dev.size() + split.test.size()));
    store.set_status(run, RunStatus::success);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Experiment

Experiment::Experiment(const ExperimentConfig& cfg, RunStore& store)
    : cfg_(cfg), store_(store), split_(prepare_data(cfg, store)), data_fp_(data_fingerprint(cfg)) {}

Experiment::~Experiment() = default;

const SimulationInputs& Experiment::inputs() {
  std::call_once(features_once_, [this] {
    vocabulary_ = std::make_unique<Vocabulary>(fit_vocabulary(split_.train, cfg_.trainer));
    features_ = std::make_unique<FeatureTable>(split_, *vocabulary_);
    inputs_ = std::make_unique<SimulationInputs>(SimulationInputs{cfg_, split_, *vocabulary_, *features_});
  });
  return *inputs_;
}

SeedRunResult Experiment::run_seed(std::int64_t seed, const RunOptions& options) {
  const std::string fp = seed_run_fingerprint(cfg_, data_fp_, seed);
  const std::string step = seed_step_name(seed);
  if (auto existing = store_.find_matching_run(step, fp, cfg_.tracking.revision)) {
    if (existing->status == RunStatus::success) {
      store_.log_execution(fmt::format("skip {} (cache hit)", step));
      SeedRunResult r;
      r.seed = seed;
      r.run_id = existing->run_id;
      r.status = RunStatus::success;
      r.cache_hit = true;
      r.curve = curve_from_csv(store_.get_artifact(*existing, kCurveArtifact), seed);
      return r;
    }
  }
  json params = seed_run_key(cfg_, data_fp_);
  params["seed"] = seed;
  auto run = store_.begin_run(step, fp, cfg_.tracking.revision, params);
  return execute(seed, std::move(run), options.resume, options);
}

SeedRunResult Experiment::resume_seed_run(std::string_view run_id, const RunOptions& options) {
  auto run = store_.get_run(run_id);
  if (!run) throw ValidationError("run", "unknown run id " + std::string(run_id));
  const json params = store_.params(*run);
  if (!params.contains("seed")) throw ValidationError("run", std::string(run_id) + " is not a seed run");
  const auto seed = params.at("seed").get<std::int64_t>();
  if (seed_run_fingerprint(cfg_, data_fp_, seed) != run->fingerprint || cfg_.tracking.revision != run->revision) {
    throw ValidationError("config", "fingerprint mismatch: run " + std::string(run_id) +
                                        " was recorded under a different configuration");
  }
  if (run->status == RunStatus::success) {
    store_.log_execution(fmt::format("skip {} (cache hit)", run->step_name));
    SeedRunResult r;
    r.seed = seed;
    r.run_id = run->run_id;
    r.status = RunStatus::success;
    r.cache_hit = true;
    r.curve = curve_from_csv(store_.get_artifact(*run, kCurveArtifact), seed);
    return r;
  }
  auto reopened = store_.begin_run(run->step_name, run->fingerprint, run->revision, params);
  return execute(seed, std::move(reopened), true, options);
}

SeedRunResult Experiment::execute(std::int64_t seed, RunRecord run, bool try_resume, const RunOptions& options) {
  SeedRunResult result;
  result.seed = seed;
  result.run_id = run.run_id;
  const std::string step = run.step_name;
  try {
    const auto& in = inputs();
    auto sr = std::make_unique<SeedRun>(in, seed, options.hooks);

    std::set<std::int64_t> logged;
    if (try_resume && store_.has_artifact(run, kProgressArtifact)) {
      try {
        const auto progress = decode_progress(store_.get_artifact(run, kProgressArtifact));
        if (progress.steps.empty()) throw CorruptArtifact("progress: no steps recorded");
        const auto ckpt =
            decode_checkpoint(store_.get_artifact(run, checkpoint_name(progress.steps.back().step_index)));
        sr->restore(progress, ckpt);
        result.resumed = true;
        for (const auto& m : store_.metrics(run)) logged.insert(m.step_index);
        store_.log_execution(fmt::format("resume {} from step {}", step, progress.steps.back().step_index));
      } catch (const std::exception& e) {
        log::warn("{}: cannot resume ({}); restarting from scratch", step, e.what());
        sr = std::make_unique<SeedRun>(in, seed, options.hooks);
      }
    }
    if (!result.resumed) {
      store_.log_execution(fmt::format("execute {}", step));
      for (const auto& m : store_.metrics(run)) logged.insert(m.step_index);
    }
    if (!store_.has_artifact(run, kVocabularyArtifact)) {
      store_.put_artifact(run, kVocabularyArtifact, in.vocabulary.serialize());
    }

    std::optional<std::int64_t> previous_checkpoint;
    if (result.resumed) previous_checkpoint = sr->steps().back().step_index;
    auto commit = [&] {
      const auto& s = sr->steps().back();
      if (!logged.contains(s.step_index)) {
        store_.log_metric(run, s.step_index, "labeled_count", static_cast<double>(s.labeled_count));
        store_.log_metric(run, s.step_index, kDevMacroF1, s.dev.macro_f1);
        store_.log_metric(run, s.step_index, kTestMacroF1, s.test.macro_f1);
        logged.insert(s.step_index);
      }
      store_.log_execution(fmt::format("train seed={} step={}", seed, s.step_index));
      log::debug("{}: step {} labeled {} test macro-F1 {:.4f}", step, s.step_index, s.labeled_count,
                 s.test.macro_f1);
      store_.put_artifact(run, checkpoint_name(s.step_index), encode_checkpoint(sr->checkpoint()));
      store_.put_artifact(run, kProgressArtifact, encode_progress(sr->progress()));
      if (previous_checkpoint && *previous_checkpoint != s.step_index) {
        store_.remove_artifact(run, checkpoint_name(*previous_checkpoint));
      }
      previous_checkpoint = s.step_index;
      const auto& hooks = options.hooks;
      const bool cancelled = hooks.cancel && hooks.cancel->load();
      if (!sr->finished() &&
          (cancelled || (hooks.interrupt_after_step && *hooks.interrupt_after_step == s.step_index))) {
        throw Interrupted(fmt::format("interrupted after step {}", s.step_index));
      }
    };

    if (!result.resumed) {
      sr->initialize();
      commit();
    }
    while (sr->advance()) commit();

    const auto curve = to_learning_curve(seed, sr->steps());
    std::vector<DocId> order;
    for (const auto& s : sr->steps()) order.insert(order.end(), s.batch.begin(), s.batch.end());
    store_.put_artifact(run, kCurveArtifact, curve_to_csv(curve));
    store_.put_artifact(run, kOrderArtifact, labeled_order_text(order));
    store_.set_status(run, RunStatus::success);
    result.status = RunStatus::success;
    result.curve = curve;
    log::info("{}: finished after {} steps", step, sr->steps().size());
  } catch (const std::exception& e) {
    result.status = RunStatus::failed;
    result.error = e.what();
    result.interrupted = dynamic_cast<const Interrupted*>(&e) != nullptr;
    try {
      store_.set_status(run, RunStatus::failed);
    } catch (const std::exception& inner) {
      log::error("{}: cannot record failure: {}", step, inner.what());
    }
    if (result.interrupted) {
      log::warn("{}: {}", step, e.what());
    } else {
      log::error("{}: {}", step, e.what());
    }
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, RunStore& store, const RunOptions& options) {
  cfg.validate();
  Experiment exp(cfg, store);
  ExperimentResult result;
  const std::string agg_fp = aggregate_fingerprint(cfg, exp.data_fp());
  const auto& seeds = cfg.experiment.seeds;

  if (auto agg = store.find_matching_run("aggregate", agg_fp, cfg.tracking.revision);
      agg && agg->status == RunStatus::success) {
    store.log_execution("skip aggregate (cache hit)");
    result.success = true;
    result.aggregate_run_id = agg->run_id;
    result.aggregate = aggregate_from_csv(store.get_artifact(*agg, kAggregateArtifact));
    for (auto seed : seeds) {
      SeedRunResult r;
      r.seed = seed;
      r.status = RunStatus::success;
      r.cache_hit = true;
      r.run_id = RunStore::run_id_for(seed_step_name(seed), seed_run_fingerprint(cfg, exp.data_fp(), seed),
                                      cfg.tracking.revision);
      r.curve = curve_from_csv(store.get_artifact(*agg, fmt::format("curve-{}.csv", seed)), seed);
      result.seeds.push_back(std::move(r));
    }
    return result;
  }

  result.seeds.resize(seeds.size());
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.tracking.worker_count), seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      if (options.hooks.cancel && options.hooks.cancel->load()) {
        result.seeds[i].seed = seeds[i];
        result.seeds[i].error = "interrupted before start";
        result.seeds[i].interrupted = true;
        continue;
      }
      try {
        result.seeds[i] = exp.run_seed(seeds[i], options);
      } catch (const std::exception& e) {
        result.seeds[i].seed = seeds[i];
        result.seeds[i].status = RunStatus::failed;
        result.seeds[i].error = e.what();
        log::error("seed {}: {}", seeds[i], e.what());
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  for (const auto& r : result.seeds) {
    if (r.status != RunStatus::success) {
      store.log_execution("skip aggregate (seed run failed)");
      return result;
    }
  }

  std::vector<LearningCurve> curves;
  for (const auto& r : result.seeds) curves.push_back(r.curve);
  result.aggregate = aggregate_seed_runs(curves);

  store.log_execution("execute aggregate");
  json params = seed_run_key(cfg, exp.data_fp());
  params["seeds"] = seeds;
  auto run = store.begin_run("aggregate", agg_fp, cfg.tracking.revision, params);
  try {
    store.put_artifact(run, kAggregateArtifact, aggregate_to_csv(result.aggregate));
    for (const auto& c : curves) store.put_artifact(run, fmt::format("curve-{}.csv", c.seed), curve_to_csv(c));
    for (const auto& p : result.aggregate.points) {
      for (const auto& [name, st] : p.metrics) store.log_metric(run, p.step_index, name + "_mean", st.mean);
    }
    store.set_status(run, RunStatus::success);
  } catch (...) {
    store.set_status(run, RunStatus::failed);
    throw;
  }
  result.aggregate_run_id = run.run_id;
  result.success = true;
  return result;
}

}  // namespace alsim
