#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace alsim {

struct DataConfig {
  std::string source;  // raw JSONL directory, relative to the config file
  std::string text_field = "text";
  std::string label_field = "label";
  std::string spans_field = "labels";
  std::string train_file = "train.jsonl";
  std::string dev_file = "dev.jsonl";
  std::string test_file = "test.jsonl";
};

struct ExperimentParams {
  std::int64_t step_size = 1000;
  double initial_ratio = 0.05;
  std::int64_t budget = 5000;
  std::string tracking_metric = "macro_f1";
  std::vector<std::int64_t> seeds = {42, 4711, 768, 4656, 32213};
  std::optional<std::int64_t> max_steps;
  std::optional<double> stop_threshold;
};

struct TeacherConfig {
  std::string strategy = "random";
  std::string initial_strategy = "random";
  std::optional<std::int64_t> k;  // k-means cluster count; label count when absent
  nlohmann::json params = nlohmann::json::object();  // free-form, for registered strategies
};

struct TrainerConfig {
  double learning_rate = 0.5;
  std::int64_t epochs_per_step = 5;
  double l2_penalty = 1e-4;
  std::int64_t batch_size = 16;
  std::int64_t ngram_order = 1;
  std::optional<std::int64_t> vocabulary_cap;
};

struct TrackingConfig {
  std::string store = "runs";
  std::int64_t worker_count = 1;
  std::string revision;
};

struct ExperimentConfig {
  DataConfig data;
  ExperimentParams experiment;
  TeacherConfig teacher;
  TrainerConfig trainer;
  TrackingConfig tracking;

  // Directory of the root config file; relative paths resolve against it.
  // Not part of the serialized form.
  std::filesystem::path base_dir;

  std::filesystem::path source_dir() const;
  std::filesystem::path store_dir() const;

  // Throws ValidationError naming the first offending field.
  void validate() const;
};

inline constexpr int kMaxIncludeDepth = 4;

// Reads a YAML config, resolving `include:` fragments (depth <= 4, fragment
// keys are overridden by the including file), then applies `key.path=value`
// overrides. Unknown keys are rejected.
ExperimentConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides = {});

// Same, from in-memory text. Includes resolve against base_dir.
ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir,
                                   const std::vector<std::string>& overrides = {});

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& tree);

// Canonical text: compact JSON, sorted keys, doubles with 17 significant
// digits. Valid YAML, so it can be fed back to parse_config.
std::string canonical_serialize(const nlohmann::json& value);
std::string serialize_config(const ExperimentConfig& cfg);

// SHA-256 over the canonical form of every section except `tracking`.
std::string config_fingerprint(const ExperimentConfig& cfg);

// SHA-256 over the canonical form of the named top-level sections only.
std::string section_fingerprint(const ExperimentConfig& cfg,
                                std::initializer_list<std::string_view> sections);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace alsim
