#include "alsim/corpus.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "alsim/binary_io.hpp"
#include "alsim/errors.hpp"
#include "alsim/log.hpp"

namespace alsim {

using nlohmann::json;

namespace {

constexpr std::string_view kCorpusMagic = "ALSIMCRP";
constexpr std::uint32_t kCorpusVersion = 1;
constexpr LabelIndex kNoLabel = 0xffffffffu;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

AnnotatedDocument annotate(RawDocument& raw, DocId id, LabelVocabulary& labels) {
  AnnotatedDocument doc;
  doc.id = id;
  doc.text = std::move(raw.text);
  if (raw.label) {
    doc.gold_label = labels.intern(*raw.label);
  } else {
    doc.gold_label = kNoLabel;
    for (const auto& s : raw.spans) doc.spans.push_back({s.start, s.end, labels.intern(s.label)});
  }
  return doc;
}

}  // namespace

LabelIndex LabelVocabulary::intern(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  const auto idx = static_cast<LabelIndex>(names_.size());
  names_.push_back(name);
  index_.emplace(name, idx);
  return idx;
}

std::optional<LabelIndex> LabelVocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t codepoint_length(std::string_view utf8) {
  std::size_t n = 0;
  for (unsigned char c : utf8) {
    if ((c & 0xc0) != 0x80) ++n;
  }
  return n;
}

RawDocument parse_raw_record(std::string_view line, const DataConfig& data, const std::string& where) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": malformed JSON (" + e.what() + ")");
  }
  if (!rec.is_object()) throw ParseError(where + ": record must be a JSON object");

  RawDocument doc;
  auto text = rec.find(data.text_field);
  if (text == rec.end() || !text->is_string()) {
    throw ParseError(where + ": missing string field '" + data.text_field + "'");
  }
  doc.text = text->get<std::string>();
  if (doc.text.empty()) throw ValidationError(where, "text must be non-empty");

  auto label = rec.find(data.label_field);
  auto spans = rec.find(data.spans_field);
  if (label != rec.end()) {
    if (!label->is_string()) {
      throw ValidationError(where, "field '" + data.label_field + "' must be a single label string");
    }
    doc.label = label->get<std::string>();
    if (doc.label->empty() || doc.label->find('\n') != std::string::npos) {
      throw ValidationError(where, "label must be a non-empty single-line string");
    }
  } else if (spans != rec.end()) {
    if (!spans->is_array()) throw ValidationError(where, "field '" + data.spans_field + "' must be a list");
    const auto length = static_cast<std::int64_t>(codepoint_length(doc.text));
    for (const auto& s : *spans) {
      if (!s.is_array() || s.size() != 3 || !s[0].is_number_integer() || !s[1].is_number_integer() ||
          !s[2].is_string()) {
        throw ValidationError(where, "span must be [start, end, \"label\"]");
      }
      RawSpan span{s[0].get<std::int64_t>(), s[1].get<std::int64_t>(), s[2].get<std::string>()};
      if (!(0 <= span.start && span.start < span.end && span.end <= length)) {
        throw ValidationError(where, fmt::format("span offsets [{}, {}) out of range for text of length {}",
                                                 span.start, span.end, length));
      }
      if (span.label.empty() || span.label.find('\n') != std::string::npos) {
        throw ValidationError(where, "span label must be a non-empty single-line string");
      }
      doc.spans.push_back(std::move(span));
    }
  } else {
    throw ValidationError(where, "unknown schema: neither '" + data.label_field + "' nor '" + data.spans_field +
                                     "' present");
  }

  if (auto id = rec.find("id"); id != rec.end() && id->is_number_integer()) doc.id = id->get<std::int64_t>();
  return doc;
}

std::vector<RawDocument> parse_raw_jsonl(std::string_view content, const DataConfig& data, const std::string& origin) {
  std::vector<RawDocument> docs;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(start, nl - start);
    start = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    docs.push_back(parse_raw_record(line, data, fmt::format("{}:{}", origin, lineno)));
  }
  if (docs.empty()) throw ValidationError(origin, "empty split");
  return docs;
}

std::vector<RawDocument> read_raw_file(const std::filesystem::path& path, const DataConfig& data) {
  return parse_raw_jsonl(read_file(path), data, path.string());
}

DatasetSplit convert_records(std::vector<RawDocument> train, std::vector<RawDocument> dev,
                             std::vector<RawDocument> test) {
  if (train.empty() || dev.empty() || test.empty()) throw ValidationError("data", "empty split");

  DatasetSplit split;
  split.task = train.front().kind();

  // Pre-assigned ids survive only if they already match the global order.
  DocId next = 0;
  bool reassigned = false;
  for (auto* part : {&train, &dev, &test}) {
    for (const auto& r : *part) {
      if (r.kind() != split.task) throw ValidationError("data", "mixed label schemas in one dataset");
      if (r.id && *r.id != static_cast<std::int64_t>(next)) reassigned = true;
      ++next;
    }
  }
  if (reassigned) log::warn("pre-assigned ids are not dense in corpus order; ids were re-assigned");

  next = 0;
  for (auto& r : train) split.train.push_back(annotate(r, next++, split.labels));
  for (auto& r : dev) split.dev.push_back(annotate(r, next++, split.labels));
  for (auto& r : test) split.test.push_back(annotate(r, next++, split.labels));
  return split;
}

DatasetSplit convert_raw(const std::filesystem::path& raw_dir, const ExperimentConfig& cfg) {
  auto train = read_raw_file(raw_dir / cfg.data.train_file, cfg.data);
  auto dev = read_raw_file(raw_dir / cfg.data.dev_file, cfg.data);
  auto test = read_raw_file(raw_dir / cfg.data.test_file, cfg.data);
  return convert_records(std::move(train), std::move(dev), std::move(test));
}

std::string encode_corpus(const DatasetSplit& split) {
  std::string out;
  binio::put_bytes(out, kCorpusMagic);
  binio::put<std::uint32_t>(out, kCorpusVersion);
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(split.task));
  binio::put<std::uint64_t>(out, split.train.size());
  binio::put<std::uint64_t>(out, split.dev.size());
  binio::put<std::uint64_t>(out, split.test.size());
  for (const auto* part : {&split.train, &split.dev, &split.test}) {
    for (const auto& doc : *part) {
      std::string rec;
      binio::put<std::uint64_t>(rec, doc.id);
      binio::put<std::uint32_t>(rec, doc.gold_label);
      binio::put<std::uint32_t>(rec, static_cast<std::uint32_t>(doc.text.size()));
      binio::put_bytes(rec, doc.text);
      binio::put<std::uint32_t>(rec, static_cast<std::uint32_t>(doc.spans.size()));
      for (const auto& s : doc.spans) {
        binio::put<std::int64_t>(rec, s.start);
        binio::put<std::int64_t>(rec, s.end);
        binio::put<std::uint32_t>(rec, s.label);
      }
      binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.size()));
      binio::put_bytes(out, rec);
    }
  }
  return out;
}

std::string encode_labels(const LabelVocabulary& labels) {
  std::string out;
  for (const auto& name : labels.names()) out.append(name).push_back('\n');
  return out;
}

DatasetSplit decode_corpus(std::string_view corpus_bytes, std::string_view labels_text) {
  DatasetSplit split;
  std::size_t start = 0;
  while (start < labels_text.size()) {
    const auto nl = labels_text.find('\n', start);
    if (nl == std::string_view::npos) throw CorruptArtifact("labels: missing trailing newline");
    split.labels.intern(std::string(labels_text.substr(start, nl - start)));
    start = nl + 1;
  }

  binio::Reader r(corpus_bytes, "corpus");
  if (r.bytes(kCorpusMagic.size()) != kCorpusMagic) throw CorruptArtifact("corpus: bad magic");
  if (r.get<std::uint32_t>() != kCorpusVersion) throw CorruptArtifact("corpus: unsupported version");
  const auto task = r.get<std::uint8_t>();
  if (task > 1) throw CorruptArtifact("corpus: unknown task kind");
  split.task = static_cast<TaskKind>(task);
  const std::uint64_t counts[3] = {r.get<std::uint64_t>(), r.get<std::uint64_t>(), r.get<std::uint64_t>()};
  std::vector<AnnotatedDocument>* parts[3] = {&split.train, &split.dev, &split.test};
  for (int p = 0; p < 3; ++p) {
    for (std::uint64_t i = 0; i < counts[p]; ++i) {
      const auto len = r.get<std::uint32_t>();
      binio::Reader rec(r.bytes(len), "corpus record");
      AnnotatedDocument doc;
      doc.id = rec.get<std::uint64_t>();
      doc.gold_label = rec.get<std::uint32_t>();
      doc.text = std::string(rec.bytes(rec.get<std::uint32_t>()));
      const auto nspans = rec.get<std::uint32_t>();
      for (std::uint32_t s = 0; s < nspans; ++s) {
        SpanAnnotation span;
        span.start = rec.get<std::int64_t>();
        span.end = rec.get<std::int64_t>();
        span.label = rec.get<std::uint32_t>();
        doc.spans.push_back(span);
      }
      if (!rec.done()) throw CorruptArtifact("corpus: trailing bytes in record");
      if (split.task == TaskKind::classification && doc.gold_label >= split.labels.size()) {
        throw CorruptArtifact("corpus: label index out of range");
      }
      parts[p]->push_back(std::move(doc));
    }
  }
  if (!r.done()) throw CorruptArtifact("corpus: trailing bytes");
  return split;
}

void write_converted(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / kCorpusFile, encode_corpus(split));
  write_file(dir / kLabelsFile, encode_labels(split.labels));
}

DatasetSplit read_converted(const std::filesystem::path& dir) {
  return decode_corpus(read_file(dir / kCorpusFile), read_file(dir / kLabelsFile));
}

AnnotationState::AnnotationState(std::span<const DocId> pool) : unlabeled_(pool.begin(), pool.end()) {}

void AnnotationState::mark_labeled(std::span<const DocId> ids) {
  std::set<DocId> batch;
  for (DocId id : ids) {
    if (!batch.insert(id).second) throw ValidationError("ids", fmt::format("duplicate id {} in batch", id));
    if (labeled_set_.contains(id)) throw ValidationError("ids", fmt::format("id {} already labeled", id));
    if (!unlabeled_.contains(id)) throw ValidationError("ids", fmt::format("unknown id {}", id));
  }
  for (DocId id : ids) {
    unlabeled_.erase(id);
    labeled_set_.insert(id);
    labeled_.push_back(id);
  }
}

AnnotationState mark_labeled(AnnotationState state, std::span<const DocId> ids) {
  state.mark_labeled(ids);
  return state;
}

}  // namespace alsim
