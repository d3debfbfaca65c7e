#include "alsim/synthetic.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "alsim/errors.hpp"
#include "alsim/rng.hpp"

namespace alsim {

namespace {

// Long-tailed draw over [0, n): floor(n * u^skew).
std::size_t skewed(Rng& rng, std::size_t n, double skew) {
  const double u = rng.unit();
  return std::min(n - 1, static_cast<std::size_t>(static_cast<double>(n) * std::pow(u, skew)));
}

RawDocument make_doc(const SyntheticSpec& spec, int label, Rng& rng) {
  const std::size_t length =
      spec.min_length + static_cast<std::size_t>(rng.below(spec.max_length - spec.min_length + 1));
  const std::size_t keywords =
      spec.min_keywords + static_cast<std::size_t>(rng.below(spec.max_keywords - spec.min_keywords + 1));

  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < keywords; ++i) {
    const bool swapped = spec.confusion > 0.0 && rng.unit() < spec.confusion;
    const char* prefix = (label == 0) != swapped ? "alpha" : "beta";
    tokens.push_back(fmt::format("{}{}", prefix, skewed(rng, spec.keywords_per_class, spec.keyword_skew)));
  }
  while (tokens.size() < std::max(length, keywords)) {
    if (rng.unit() < spec.distractor_ratio) {
      tokens.push_back(fmt::format("noise{}", rng.below(spec.distractor_words)));
    } else {
      tokens.push_back(fmt::format("w{}", skewed(rng, spec.background_words, 2.0)));
    }
  }
  rng.shuffle(std::span<std::string>(tokens));

  RawDocument doc;
  for (const auto& t : tokens) {
    if (!doc.text.empty()) doc.text.push_back(' ');
    doc.text += t;
  }
  doc.label = label == 0 ? "neg" : "pos";
  return doc;
}

}  // namespace

std::array<std::vector<RawDocument>, 3> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.min_length == 0 || spec.max_length < spec.min_length) {
    throw ValidationError("length", "need 1 <= min_length <= max_length");
  }
  if (spec.keywords_per_class == 0 || spec.background_words == 0 || spec.distractor_words == 0) {
    throw ValidationError("words", "word pools must be non-empty");
  }
  if (spec.max_keywords < spec.min_keywords) throw ValidationError("keywords", "need min_keywords <= max_keywords");
  if (!(spec.distractor_ratio >= 0.0 && spec.distractor_ratio <= 1.0)) {
    throw ValidationError("distractor_ratio", "must lie in [0, 1]");
  }
  Rng rng(seed);
  std::array<std::vector<RawDocument>, 3> out;
  const std::size_t sizes[3] = {spec.train, spec.dev, spec.test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < sizes[s]; ++i) {
      // Alternating labels keep every split balanced; shuffle afterwards.
      out[s].push_back(make_doc(spec, static_cast<int>(i % 2), rng));
    }
    rng.shuffle(std::span<RawDocument>(out[s]));
  }
  return out;
}

std::vector<RawDocument> planted_clusters(std::size_t per_cluster, std::size_t words, std::size_t length,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RawDocument> docs;
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per_cluster; ++i) {
      std::string text;
      for (std::size_t t = 0; t < length; ++t) {
        if (t) text.push_back(' ');
        text += fmt::format("{}{}", c == 0 ? "red" : "blue", rng.below(words));
      }
      RawDocument doc;
      doc.text = std::move(text);
      doc.label = fmt::format("c{}", c);
      docs.push_back(std::move(doc));
    }
  }
  return docs;
}

std::string to_jsonl(const std::vector<RawDocument>& docs) {
  std::string out;
  for (const auto& d : docs) {
    nlohmann::json rec = {{"text", d.text}};
    if (d.label) {
      rec["label"] = *d.label;
    } else {
      nlohmann::json spans = nlohmann::json::array();
      for (const auto& s : d.spans) spans.push_back({s.start, s.end, s.label});
      rec["labels"] = spans;
    }
    out += rec.dump() + "\n";
  }
  return out;
}

void write_jsonl_splits(const std::array<std::vector<RawDocument>, 3>& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const char* const names[3] = {"train.jsonl", "dev.jsonl", "test.jsonl"};
  for (int s = 0; s < 3; ++s) {
    std::ofstream out(dir / names[s], std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / names[s]).string());
    out << to_jsonl(splits[s]);
  }
}

}  // namespace alsim
