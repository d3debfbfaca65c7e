#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "alsim/config.hpp"
#include "alsim/errors.hpp"
#include "support.hpp"

using namespace alsim;

namespace {

const char* kBase = R"(
data:
  source: corpus
experiment:
  step_size: 1000
  initial_ratio: 0.05
  budget: 5000
  seeds: [42, 4711, 768, 4656, 32213]
teacher:
  strategy: margin
trainer:
  learning_rate: 0.25
tracking:
  revision: r1
)";

// Same content, keys in a different order at every level.
const char* kReordered = R"(
tracking:
  revision: r1
trainer:
  learning_rate: 0.25
teacher:
  strategy: margin
experiment:
  seeds: [42, 4711, 768, 4656, 32213]
  budget: 5000
  initial_ratio: 0.05
  step_size: 1000
data:
  source: corpus
)";

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("the standard seeds and initial ratio are accepted") {
  const auto cfg = parse_config_text(kBase, ".");
  CHECK(cfg.experiment.seeds == std::vector<std::int64_t>{42, 4711, 768, 4656, 32213});
  CHECK(cfg.experiment.initial_ratio == 0.05);
  CHECK(cfg.experiment.budget == 5000);
  CHECK(cfg.teacher.strategy == "margin");
  CHECK(cfg.trainer.epochs_per_step == 5);  // defaulted
  CHECK(cfg.data.text_field == "text");
}

TEST_CASE("validation names the offending field") {
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.step_size=0"}); }) == "experiment.step_size");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.budget=10"}); }) == "experiment.budget");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.initial_ratio=1.0"}); }) ==
        "experiment.initial_ratio");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.initial_ratio=-0.1"}); }) ==
        "experiment.initial_ratio");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.seeds=[1, 1]"}); }) == "experiment.seeds");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.seeds=[]"}); }) == "experiment.seeds");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"trainer.ngram_order=4"}); }) == "trainer.ngram_order");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"trainer.vocabulary_cap=0"}); }) == "trainer.vocabulary_cap");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"tracking.worker_count=0"}); }) == "tracking.worker_count");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.tracking_metric=accuracy"}); }) ==
        "experiment.tracking_metric");
}

TEST_CASE("unknown keys and missing required fields are rejected") {
  CHECK(field_of([] { parse_config_text(std::string(kBase) + "extra: 1\n", "."); }) == "extra");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"trainer.momentum=0.9"}); }) == "trainer.momentum");
  CHECK(field_of([] { parse_config_text("data:\n  source: x\n", "."); }) == "tracking.revision");
  CHECK(field_of([] { parse_config_text("tracking:\n  revision: r\n", "."); }) == "data.source");
  CHECK(field_of([] { parse_config_text(kBase, ".", {"experiment.step_size=many"}); }) == "experiment.step_size");
}

TEST_CASE("malformed text is a parse error") {
  CHECK_THROWS_AS(parse_config_text("data: [unclosed", "."), ParseError);
  CHECK_THROWS_AS(parse_config_text("- just\n- a list\n", "."), ParseError);
  CHECK_THROWS_AS(parse_config_text(kBase, ".", {"no_equals_sign"}), ParseError);
}

TEST_CASE("fingerprint ignores key order and tracks meaningful fields") {
  const auto a = parse_config_text(kBase, ".");
  const auto b = parse_config_text(kReordered, ".");
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  CHECK(config_fingerprint(a).size() == 64);

  const auto c = parse_config_text(kBase, ".", {"experiment.step_size=500"});
  CHECK(config_fingerprint(a) != config_fingerprint(c));
  const auto d = parse_config_text(kBase, ".", {"trainer.learning_rate=0.250000001"});
  CHECK(config_fingerprint(a) != config_fingerprint(d));
  const auto e = parse_config_text(kBase, ".", {"teacher.params.extra=3"});
  CHECK(config_fingerprint(a) != config_fingerprint(e));

  // tracking.* does not take part.
  const auto f = parse_config_text(kBase, ".", {"tracking.worker_count=4", "tracking.revision=r2"});
  CHECK(config_fingerprint(a) == config_fingerprint(f));
}

TEST_CASE("fingerprint equals an independent canonical serializer on both files") {
  // Oracle: nlohmann's std::map-backed json already sorts keys; dump both
  // sides and compare the texts.
  const auto a = parse_config_text(kBase, ".");
  const auto b = parse_config_text(kReordered, ".");
  CHECK(config_to_json(a).dump() == config_to_json(b).dump());
  CHECK(canonical_serialize(config_to_json(a)) == canonical_serialize(config_to_json(b)));
}

TEST_CASE("integer and float spellings of the same number agree") {
  const auto a = parse_config_text(kBase, ".", {"trainer.learning_rate=1"});
  const auto b = parse_config_text(kBase, ".", {"trainer.learning_rate=1.0"});
  CHECK(config_fingerprint(a) == config_fingerprint(b));
}

TEST_CASE("serialize then parse round-trips") {
  auto cfg = parse_config_text(kBase, ".", {"experiment.max_steps=7", "experiment.stop_threshold=0.85",
                                            "teacher.k=3", "trainer.vocabulary_cap=5000"});
  const std::string text = serialize_config(cfg);
  const auto again = parse_config_text(text, ".");
  CHECK(again == cfg);
  CHECK(config_fingerprint(again) == config_fingerprint(cfg));
  CHECK(serialize_config(again) == text);
  CHECK(config_from_json(config_to_json(cfg)) == cfg);
}

TEST_CASE("canonical floats use 17 significant digits") {
  const nlohmann::json v = {{"b", 0.1}, {"a", 1.0}, {"c", 3}};
  CHECK(canonical_serialize(v) == R"({"a":1.0,"b":0.10000000000000001,"c":3})");
}

TEST_CASE("overrides parse their value as YAML") {
  const auto cfg = parse_config_text(kBase, ".", {"experiment.seeds=[1, 2]", "teacher.strategy=kmeans",
                                                  "experiment.step_size=1000", "tracking.revision='007'"});
  CHECK(cfg.experiment.seeds == std::vector<std::int64_t>{1, 2});
  CHECK(cfg.teacher.strategy == "kmeans");
  CHECK(cfg.tracking.revision == "007");
}

TEST_CASE("includes compose fragments; the including file wins") {
  testing::TempDir dir;
  testing::write_file(dir / "frag/trainer.yaml", "trainer:\n  learning_rate: 0.9\n  epochs_per_step: 3\n");
  testing::write_file(dir / "frag/teacher.yaml", "include: trainer.yaml\nteacher:\n  strategy: kmeans\n");
  testing::write_file(dir / "main.yaml", std::string("include: [frag/teacher.yaml]\n") + kBase);
  const auto cfg = parse_config(dir / "main.yaml");
  CHECK(cfg.trainer.learning_rate == 0.25);  // main overrides the fragment
  CHECK(cfg.trainer.epochs_per_step == 3);   // from the nested fragment
  CHECK(cfg.teacher.strategy == "margin");
  CHECK(cfg.source_dir() == dir.path() / "corpus");
}

TEST_CASE("include depth is capped") {
  testing::TempDir dir;
  // main -> f1 -> f2 -> f3 -> f4 is depth 4 and allowed; one more is not.
  for (int i = 1; i <= 5; ++i) {
    testing::write_file(dir / ("f" + std::to_string(i) + ".yaml"),
                        "include: f" + std::to_string(i + 1) + ".yaml\n");
  }
  testing::write_file(dir / "f6.yaml", "trainer:\n  epochs_per_step: 9\n");
  testing::write_file(dir / "f4.yaml", "trainer:\n  epochs_per_step: 4\n");
  testing::write_file(dir / "ok.yaml", std::string("include: f1.yaml\n") + kBase);
  CHECK(parse_config(dir / "ok.yaml").trainer.epochs_per_step == 4);

  testing::write_file(dir / "f4.yaml", "include: f5.yaml\n");
  testing::write_file(dir / "f5.yaml", "trainer:\n  epochs_per_step: 5\n");
  CHECK(field_of([&] { parse_config(dir / "ok.yaml"); }) == "include");
}

TEST_CASE("missing config file is an IO error") {
  CHECK_THROWS_AS(parse_config("/nonexistent/alsim.yaml"), IoError);
}

TEST_CASE("section fingerprints only see their sections") {
  const auto a = parse_config_text(kBase, ".");
  const auto b = parse_config_text(kBase, ".", {"teacher.strategy=random"});
  CHECK(section_fingerprint(a, {"data"}) == section_fingerprint(b, {"data"}));
  CHECK(section_fingerprint(a, {"data", "teacher"}) != section_fingerprint(b, {"data", "teacher"}));
}
