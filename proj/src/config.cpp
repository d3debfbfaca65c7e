#include "alsim/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <fmt/format.h>

#include "alsim/digest.hpp"
#include "alsim/errors.hpp"

namespace alsim {

using nlohmann::json;

namespace {

json scalar_to_json(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  // Quoted scalars carry the non-specific "!" tag and are always strings.
  if (node.Tag() == "!") return text;
  if (text.empty() || text == "~" || text == "null" || text == "Null" || text == "NULL") return nullptr;
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used, 10);
    if (used == text.size()) return static_cast<std::int64_t>(v);
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  return text;
}

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

json load_yaml(std::string_view text, const std::string& origin) {
  try {
    return yaml_to_json(YAML::Load(std::string(text)));
  } catch (const YAML::Exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

// Right-biased deep merge of objects; everything else is replaced.
void merge_into(json& base, const json& overlay) {
  if (!base.is_object() || !overlay.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    if (base.contains(key)) {
      merge_into(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

json resolve_includes(json tree, const std::filesystem::path& base_dir, int depth) {
  if (tree.is_null()) tree = json::object();
  if (!tree.is_object()) throw ParseError("config root must be a mapping");
  if (!tree.contains("include")) return tree;

  if (depth >= kMaxIncludeDepth) {
    throw ValidationError("include", fmt::format("include depth exceeds {}", kMaxIncludeDepth));
  }
  json includes = tree["include"];
  tree.erase("include");
  if (includes.is_string()) includes = json::array({includes});
  if (!includes.is_array()) throw ValidationError("include", "must be a path or list of paths");

  json merged = json::object();
  for (const auto& item : includes) {
    if (!item.is_string()) throw ValidationError("include", "entries must be strings");
    const std::filesystem::path frag = base_dir / item.get<std::string>();
    std::ifstream in(frag);
    if (!in) throw IoError("cannot open included config " + frag.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    merge_into(merged, resolve_includes(load_yaml(text, frag.string()), frag.parent_path(), depth + 1));
  }
  merge_into(merged, tree);
  return merged;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParseError("override must look like key.path=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const json value = load_yaml(assignment.substr(eq + 1), "--set " + path);

  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ParseError("empty key segment in override " + path);
    if (!node->is_object()) throw ValidationError(path, "cannot descend into a non-mapping value");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

// Typed field extraction. Every accessor names the dotted path on failure.
class Section {
 public:
  Section(const json& tree, std::string name) : name_(std::move(name)) {
    if (tree.contains(name_)) {
      node_ = tree.at(name_);
      if (node_.is_null()) node_ = json::object();
      if (!node_.is_object()) throw ValidationError(name_, "must be a mapping");
    } else {
      node_ = json::object();
    }
  }

  void reject_unknown(std::initializer_list<std::string_view> known) const {
    for (const auto& [key, _] : node_.items()) {
      bool ok = false;
      for (auto k : known) ok = ok || k == key;
      if (!ok) throw ValidationError(path(key), "unknown key");
    }
  }

  const json* find(const std::string& key) const {
    auto it = node_.find(key);
    if (it == node_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void get(const std::string& key, std::string& out) const {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ValidationError(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void get(const std::string& key, std::int64_t& out) const {
    if (const json* v = find(key)) out = as_int(key, *v);
  }

  void get(const std::string& key, double& out) const {
    if (const json* v = find(key)) out = as_double(key, *v);
  }

  void get(const std::string& key, std::optional<std::int64_t>& out) const {
    if (const json* v = find(key)) out = as_int(key, *v);
  }

  void get(const std::string& key, std::optional<double>& out) const {
    if (const json* v = find(key)) out = as_double(key, *v);
  }

  void get(const std::string& key, std::vector<std::int64_t>& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ValidationError(path(key), "expected a list of integers");
      out.clear();
      for (const auto& item : *v) out.push_back(as_int(key, item));
    }
  }

  void get(const std::string& key, json& out) const {
    if (const json* v = find(key)) {
      if (!v->is_object()) throw ValidationError(path(key), "expected a mapping");
      out = *v;
    }
  }

 private:
  std::string path(const std::string& key) const { return name_ + "." + key; }

  std::int64_t as_int(const std::string& key, const json& v) const {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    throw ValidationError(path(key), "expected an integer");
  }

  double as_double(const std::string& key, const json& v) const {
    if (v.is_number()) return v.get<double>();
    throw ValidationError(path(key), "expected a number");
  }

  std::string name_;
  json node_;
};

json optional_json(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_canonical(const json& value, std::string& out) {
  switch (value.type()) {
    case json::value_t::object: {
      // nlohmann::json objects are std::map backed, so iteration is key-sorted.
      out.push_back('{');
      bool first = true;
      for (const auto& [key, item] : value.items()) {
        if (!first) out.push_back(',');
        first = false;
        out += json(key).dump();
        out.push_back(':');
        write_canonical(item, out);
      }
      out.push_back('}');
      break;
    }
    case json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& item : value) {
        if (!first) out.push_back(',');
        first = false;
        write_canonical(item, out);
      }
      out.push_back(']');
      break;
    }
    case json::value_t::number_float: {
      std::string text = fmt::format("{:.17g}", value.get<double>());
      // Keep floats typed as floats on re-read.
      if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
      out += text;
      break;
    }
    default:
      out += value.dump(-1, ' ', false, json::error_handler_t::strict);
  }
}

}  // namespace

std::filesystem::path ExperimentConfig::source_dir() const {
  const std::filesystem::path p(data.source);
  return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path ExperimentConfig::store_dir() const {
  const std::filesystem::path p(tracking.store);
  return p.is_absolute() ? p : base_dir / p;
}

void ExperimentConfig::validate() const {
  if (data.source.empty()) throw ValidationError("data.source", "required");
  for (const auto* f : {&data.text_field, &data.label_field, &data.train_file, &data.dev_file, &data.test_file}) {
    if (f->empty()) throw ValidationError("data", "field and file names must be non-empty");
  }

  const auto& e = experiment;
  if (e.step_size < 1) throw ValidationError("experiment.step_size", "must be >= 1");
  if (e.budget < e.step_size) throw ValidationError("experiment.budget", "must be >= step_size");
  if (!(e.initial_ratio >= 0.0 && e.initial_ratio < 1.0)) {
    throw ValidationError("experiment.initial_ratio", "must lie in [0, 1)");
  }
  if (e.tracking_metric != "macro_f1") {
    throw ValidationError("experiment.tracking_metric", "unsupported metric '" + e.tracking_metric + "'");
  }
  if (e.seeds.empty()) throw ValidationError("experiment.seeds", "must be non-empty");
  if (std::set<std::int64_t>(e.seeds.begin(), e.seeds.end()).size() != e.seeds.size()) {
    throw ValidationError("experiment.seeds", "must be pairwise distinct");
  }
  if (e.max_steps && *e.max_steps < 1) throw ValidationError("experiment.max_steps", "must be >= 1");
  if (e.stop_threshold && !std::isfinite(*e.stop_threshold)) {
    throw ValidationError("experiment.stop_threshold", "must be finite");
  }

  if (teacher.strategy.empty()) throw ValidationError("teacher.strategy", "required");
  if (teacher.initial_strategy.empty()) throw ValidationError("teacher.initial_strategy", "required");
  if (teacher.k && *teacher.k < 1) throw ValidationError("teacher.k", "must be >= 1");

  const auto& t = trainer;
  if (!(t.learning_rate > 0.0) || !std::isfinite(t.learning_rate)) {
    throw ValidationError("trainer.learning_rate", "must be positive and finite");
  }
  if (t.epochs_per_step < 1) throw ValidationError("trainer.epochs_per_step", "must be >= 1");
  if (!(t.l2_penalty >= 0.0) || !std::isfinite(t.l2_penalty)) {
    throw ValidationError("trainer.l2_penalty", "must be >= 0 and finite");
  }
  if (t.batch_size < 1) throw ValidationError("trainer.batch_size", "must be >= 1");
  if (t.ngram_order < 1 || t.ngram_order > 3) throw ValidationError("trainer.ngram_order", "must lie in 1..3");
  if (t.vocabulary_cap && *t.vocabulary_cap < 1) {
    throw ValidationError("trainer.vocabulary_cap", "must be >= 1");
  }

  if (tracking.worker_count < 1) throw ValidationError("tracking.worker_count", "must be >= 1");
  if (tracking.revision.empty()) throw ValidationError("tracking.revision", "required");
  if (tracking.store.empty()) throw ValidationError("tracking.store", "required");
}

ExperimentConfig config_from_json(const json& tree) {
  if (!tree.is_object()) throw ParseError("config root must be a mapping");
  for (const auto& [key, _] : tree.items()) {
    if (key != "data" && key != "experiment" && key != "teacher" && key != "trainer" && key != "tracking") {
      throw ValidationError(key, "unknown key");
    }
  }

  ExperimentConfig cfg;

  const Section data(tree, "data");
  data.reject_unknown({"source", "text_field", "label_field", "spans_field", "train_file", "dev_file", "test_file"});
  data.get("source", cfg.data.source);
  data.get("text_field", cfg.data.text_field);
  data.get("label_field", cfg.data.label_field);
  data.get("spans_field", cfg.data.spans_field);
  data.get("train_file", cfg.data.train_file);
  data.get("dev_file", cfg.data.dev_file);
  data.get("test_file", cfg.data.test_file);

  const Section exp(tree, "experiment");
  exp.reject_unknown({"step_size", "initial_ratio", "budget", "tracking_metric", "seeds", "max_steps", "stop_threshold"});
  exp.get("step_size", cfg.experiment.step_size);
  exp.get("initial_ratio", cfg.experiment.initial_ratio);
  exp.get("budget", cfg.experiment.budget);
  exp.get("tracking_metric", cfg.experiment.tracking_metric);
  exp.get("seeds", cfg.experiment.seeds);
  exp.get("max_steps", cfg.experiment.max_steps);
  exp.get("stop_threshold", cfg.experiment.stop_threshold);

  const Section teacher(tree, "teacher");
  teacher.reject_unknown({"strategy", "initial_strategy", "k", "params"});
  teacher.get("strategy", cfg.teacher.strategy);
  teacher.get("initial_strategy", cfg.teacher.initial_strategy);
  teacher.get("k", cfg.teacher.k);
  teacher.get("params", cfg.teacher.params);

  const Section trainer(tree, "trainer");
  trainer.reject_unknown({"learning_rate", "epochs_per_step", "l2_penalty", "batch_size", "ngram_order", "vocabulary_cap"});
  trainer.get("learning_rate", cfg.trainer.learning_rate);
  trainer.get("epochs_per_step", cfg.trainer.epochs_per_step);
  trainer.get("l2_penalty", cfg.trainer.l2_penalty);
  trainer.get("batch_size", cfg.trainer.batch_size);
  trainer.get("ngram_order", cfg.trainer.ngram_order);
  trainer.get("vocabulary_cap", cfg.trainer.vocabulary_cap);

  const Section tracking(tree, "tracking");
  tracking.reject_unknown({"store", "worker_count", "revision"});
  tracking.get("store", cfg.tracking.store);
  tracking.get("worker_count", cfg.tracking.worker_count);
  tracking.get("revision", cfg.tracking.revision);

  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json tree = json::object();
  tree["data"] = {
      {"source", cfg.data.source},         {"text_field", cfg.data.text_field},
      {"label_field", cfg.data.label_field}, {"spans_field", cfg.data.spans_field},
      {"train_file", cfg.data.train_file}, {"dev_file", cfg.data.dev_file},
      {"test_file", cfg.data.test_file},
  };
  tree["experiment"] = {
      {"step_size", cfg.experiment.step_size},
      {"initial_ratio", cfg.experiment.initial_ratio},
      {"budget", cfg.experiment.budget},
      {"tracking_metric", cfg.experiment.tracking_metric},
      {"seeds", cfg.experiment.seeds},
      {"max_steps", optional_json(cfg.experiment.max_steps)},
      {"stop_threshold", optional_json(cfg.experiment.stop_threshold)},
  };
  tree["teacher"] = {
      {"strategy", cfg.teacher.strategy},
      {"initial_strategy", cfg.teacher.initial_strategy},
      {"k", optional_json(cfg.teacher.k)},
      {"params", cfg.teacher.params},
  };
  tree["trainer"] = {
      {"learning_rate", cfg.trainer.learning_rate},
      {"epochs_per_step", cfg.trainer.epochs_per_step},
      {"l2_penalty", cfg.trainer.l2_penalty},
      {"batch_size", cfg.trainer.batch_size},
      {"ngram_order", cfg.trainer.ngram_order},
      {"vocabulary_cap", optional_json(cfg.trainer.vocabulary_cap)},
  };
  tree["tracking"] = {
      {"store", cfg.tracking.store},
      {"worker_count", cfg.tracking.worker_count},
      {"revision", cfg.tracking.revision},
  };
  return tree;
}

ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir,
                                   const std::vector<std::string>& overrides) {
  json tree = resolve_includes(load_yaml(text, "config"), base_dir, 0);
  for (const auto& o : overrides) apply_override(tree, o);
  ExperimentConfig cfg = config_from_json(tree);
  cfg.base_dir = base_dir;
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json tree = resolve_includes(load_yaml(text, path.string()), path.parent_path(), 0);
  for (const auto& o : overrides) apply_override(tree, o);
  ExperimentConfig cfg = config_from_json(tree);
  cfg.base_dir = std::filesystem::absolute(path).parent_path();
  return cfg;
}

std::string canonical_serialize(const json& value) {
  std::string out;
  write_canonical(value, out);
  return out;
}

std::string serialize_config(const ExperimentConfig& cfg) { return canonical_serialize(config_to_json(cfg)); }

std::string config_fingerprint(const ExperimentConfig& cfg) {
  return section_fingerprint(cfg, {"data", "experiment", "teacher", "trainer"});
}

std::string section_fingerprint(const ExperimentConfig& cfg, std::initializer_list<std::string_view> sections) {
  const json full = config_to_json(cfg);
  json subset = json::object();
  for (auto s : sections) subset[std::string(s)] = full.at(std::string(s));
  return sha256_hex(canonical_serialize(subset));
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return config_to_json(a) == config_to_json(b);
}

}  // namespace alsim
