#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "alsim/config.hpp"

namespace alsim {

using DocId = std::uint64_t;
using LabelIndex = std::uint32_t;

enum class TaskKind : std::uint8_t { classification = 0, spans = 1 };

struct RawSpan {
  std::int64_t start = 0;  // codepoint offsets, end exclusive
  std::int64_t end = 0;
  std::string label;
};

struct RawDocument {
  std::string text;
  std::optional<std::string> label;
  std::vector<RawSpan> spans;
  std::optional<std::int64_t> id;

  TaskKind kind() const { return label ? TaskKind::classification : TaskKind::spans; }
};

struct SpanAnnotation {
  std::int64_t start = 0;
  std::int64_t end = 0;
  LabelIndex label = 0;
  bool operator==(const SpanAnnotation&) const = default;
};

struct AnnotatedDocument {
  DocId id = 0;
  std::string text;
  LabelIndex gold_label = 0;  // classification only
  std::vector<SpanAnnotation> spans;

  bool operator==(const AnnotatedDocument&) const = default;
};

// Label names frozen in first-appearance order.
class LabelVocabulary {
 public:
  LabelIndex intern(const std::string& name);
  std::optional<LabelIndex> find(std::string_view name) const;
  const std::string& name(LabelIndex index) const { return names_.at(index); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const LabelVocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelIndex> index_;
};

// Train, dev and test documents with globally unique ids: train occupies
// 0..|train|-1, dev follows, then test.
struct DatasetSplit {
  TaskKind task = TaskKind::classification;
  LabelVocabulary labels;
  std::vector<AnnotatedDocument> train;
  std::vector<AnnotatedDocument> dev;
  std::vector<AnnotatedDocument> test;

  bool operator==(const DatasetSplit&) const = default;
};

// Number of Unicode codepoints in a UTF-8 string.
std::size_t codepoint_length(std::string_view utf8);

// Parses one JSONL record. `where` is used in error messages ("file:line").
RawDocument parse_raw_record(std::string_view line, const DataConfig& data, const std::string& where);

// Parses JSONL content. Blank lines are skipped; no records is an error.
// `origin` prefixes error locations.
std::vector<RawDocument> parse_raw_jsonl(std::string_view content, const DataConfig& data, const std::string& origin);
std::vector<RawDocument> read_raw_file(const std::filesystem::path& path, const DataConfig& data);

DatasetSplit convert_raw(const std::filesystem::path& raw_dir, const ExperimentConfig& cfg);

// Builds a split from already-parsed records (the part of convert_raw after IO).
DatasetSplit convert_records(std::vector<RawDocument> train, std::vector<RawDocument> dev,
                             std::vector<RawDocument> test);

// Converted corpus: `corpus.bin` (length-prefixed records) + `labels.txt`.
inline constexpr std::string_view kCorpusFile = "corpus.bin";
inline constexpr std::string_view kLabelsFile = "labels.txt";

std::string encode_corpus(const DatasetSplit& split);
std::string encode_labels(const LabelVocabulary& labels);
DatasetSplit decode_corpus(std::string_view corpus_bytes, std::string_view labels_text);

void write_converted(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit read_converted(const std::filesystem::path& dir);

// Labeled/unlabeled partition of the train pool. Labeled ids keep proposal order.
class AnnotationState {
 public:
  AnnotationState() = default;
  explicit AnnotationState(std::span<const DocId> pool);

  // Moves ids from unlabeled to labeled, appending in the given order.
  // Validates the whole batch before changing anything.
  void mark_labeled(std::span<const DocId> ids);

  const std::vector<DocId>& labeled() const { return labeled_; }
  const std::set<DocId>& unlabeled() const { return unlabeled_; }
  std::vector<DocId> unlabeled_ids() const { return {unlabeled_.begin(), unlabeled_.end()}; }
  bool is_labeled(DocId id) const { return labeled_set_.contains(id); }

  bool operator==(const AnnotationState& other) const {
    return labeled_ == other.labeled_ && unlabeled_ == other.unlabeled_;
  }

 private:
  std::vector<DocId> labeled_;
  std::set<DocId> labeled_set_;
  std::set<DocId> unlabeled_;
};

AnnotationState mark_labeled(AnnotationState state, std::span<const DocId> ids);

}  // namespace alsim
