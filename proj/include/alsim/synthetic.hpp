#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "alsim/corpus.hpp"

namespace alsim {

// Two-class corpus with planted class keywords. Each document carries a
// few keywords of its class drawn from a long-tailed pool: common keywords
// are learned from a handful of labels, rare ones only when documents
// containing them get labeled. The rest of the text is background words
// shared by both classes plus a share of distractor words.
struct SyntheticSpec {
  std::size_t train = 2000;
  std::size_t dev = 500;
  std::size_t test = 500;
  std::size_t keywords_per_class = 100;
  double keyword_skew = 2.0;  // keyword index = floor(K * u^skew)
  std::size_t min_keywords = 1;
  std::size_t max_keywords = 3;
  double confusion = 0.0;  // chance a keyword slot takes the other class's keyword
  std::size_t background_words = 600;
  std::size_t distractor_words = 200;
  double distractor_ratio = 0.2;  // share of non-keyword tokens from the distractor pool
  std::size_t min_length = 20;
  std::size_t max_length = 40;
};

// Splits in train, dev, test order. No label noise.
std::array<std::vector<RawDocument>, 3> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Two groups of `per_cluster` documents over disjoint `words`-term
// vocabularies; labels name the group ("c0", "c1").
std::vector<RawDocument> planted_clusters(std::size_t per_cluster, std::size_t words, std::size_t length,
                                          std::uint64_t seed);

std::string to_jsonl(const std::vector<RawDocument>& docs);
// Writes train.jsonl, dev.jsonl and test.jsonl into dir.
void write_jsonl_splits(const std::array<std::vector<RawDocument>, 3>& splits, const std::filesystem::path& dir);

}  // namespace alsim
