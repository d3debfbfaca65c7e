#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "alsim/config.hpp"
#include "alsim/corpus.hpp"

namespace alsim {

using TermIndex = std::uint32_t;

// Lowercases, splits on non-alphanumeric codepoints and emits all unigrams,
// then all bigrams, ... up to ngram_order (1..3), joined by a single space.
std::vector<std::string> tokenize(std::string_view text, int ngram_order);

struct SparseEntry {
  TermIndex index;
  double weight;
  bool operator==(const SparseEntry&) const = default;
};

// Entries sorted by strictly increasing index, no explicit zeros.
struct SparseVector {
  std::vector<SparseEntry> entries;

  double squared_norm() const;
  double dot(std::span<const double> dense) const;
  bool empty() const { return entries.empty(); }
  bool operator==(const SparseVector&) const = default;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> document_frequency,
             std::uint64_t document_count, int ngram_order);

  std::optional<TermIndex> find(std::string_view term) const;
  const std::string& term(TermIndex i) const { return terms_.at(i); }
  std::uint64_t document_frequency(TermIndex i) const { return df_.at(i); }
  std::uint64_t document_count() const { return document_count_; }
  int ngram_order() const { return ngram_order_; }
  std::size_t size() const { return terms_.size(); }

  // Smoothed inverse document frequency: 1 + ln((1 + N) / (1 + df)).
  double idf(TermIndex i) const;

  // One "term\tindex\tdf" line per term after a "#documents\tN\tngram_order" header.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  bool operator==(const Vocabulary& other) const {
    return terms_ == other.terms_ && df_ == other.df_ && document_count_ == other.document_count_ &&
           ngram_order_ == other.ngram_order_;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint64_t> df_;
  std::unordered_map<std::string, TermIndex> index_;
  std::uint64_t document_count_ = 0;
  int ngram_order_ = 1;
};

// Terms ordered by (document frequency desc, term asc); the first `cap` are kept.
Vocabulary fit_vocabulary(std::span<const std::string> texts, int ngram_order, std::optional<std::int64_t> cap);
Vocabulary fit_vocabulary(std::span<const AnnotatedDocument> docs, const TrainerConfig& cfg);

// Raw term count times smoothed idf, then L2-normalised. Unknown tokens are ignored.
SparseVector tfidf_vectorize(std::string_view text, const Vocabulary& vocab);

}  // namespace alsim
