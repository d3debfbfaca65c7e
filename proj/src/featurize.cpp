#include "alsim/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "alsim/errors.hpp"

namespace alsim {

namespace {

constexpr char32_t kInvalid = 0xfffd;

// Decodes one codepoint starting at text[i]; advances i. Malformed bytes
// decode to U+FFFD and are treated as separators.
char32_t next_codepoint(std::string_view text, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  int len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    ++i;
    return b0;
  } else if ((b0 & 0xe0) == 0xc0) {
    len = 2;
    cp = b0 & 0x1f;
  } else if ((b0 & 0xf0) == 0xe0) {
    len = 3;
    cp = b0 & 0x0f;
  } else if ((b0 & 0xf8) == 0xf0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return kInvalid;
  }
  if (i + static_cast<std::size_t>(len) > text.size()) {
    ++i;
    return kInvalid;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
    if ((b & 0xc0) != 0x80) {
      ++i;
      return kInvalid;
    }
    cp = (cp << 6) | (b & 0x3f);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

// ASCII letters/digits count as alphanumeric; beyond ASCII everything except
// the Latin-1 punctuation block, the general/CJK punctuation blocks and
// fullwidth ASCII punctuation does.
bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  }
  if (cp == kInvalid) return false;
  if (cp <= 0xbf || cp == 0xd7 || cp == 0xf7) return false;
  if (cp >= 0x2000 && cp <= 0x206f) return false;
  if (cp >= 0x3000 && cp <= 0x303f) return false;
  if (cp >= 0xff00 && cp <= 0xff0f) return false;
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7) return cp + 32;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, int ngram_order) {
  if (ngram_order < 1 || ngram_order > 3) throw ValidationError("ngram_order", "must lie in 1..3");

  std::vector<std::string> words;
  std::string current;
  for (std::size_t i = 0; i < text.size();) {
    const char32_t cp = next_codepoint(text, i);
    if (is_word_char(cp)) {
      append_utf8(current, to_lower(cp));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));

  std::vector<std::string> tokens = words;
  for (int n = 2; n <= ngram_order; ++n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i) {
      std::string gram = words[i];
      for (int k = 1; k < n; ++k) gram.append(" ").append(words[i + static_cast<std::size_t>(k)]);
      tokens.push_back(std::move(gram));
    }
  }
  return tokens;
}

double SparseVector::squared_norm() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.weight * e.weight;
  return s;
}

double SparseVector::dot(std::span<const double> dense) const {
  double s = 0.0;
  for (const auto& e : entries) s += e.weight * dense[e.index];
  return s;
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> document_frequency,
                       std::uint64_t document_count, int ngram_order)
    : terms_(std::move(terms)),
      df_(std::move(document_frequency)),
      document_count_(document_count),
      ngram_order_(ngram_order) {
  if (terms_.size() != df_.size()) throw ValidationError("vocabulary", "terms and frequencies differ in length");
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (df_[i] < 1) throw ValidationError("vocabulary", "document frequency must be >= 1");
    if (!index_.emplace(terms_[i], static_cast<TermIndex>(i)).second) {
      throw ValidationError("vocabulary", "duplicate term '" + terms_[i] + "'");
    }
  }
}

std::optional<TermIndex> Vocabulary::find(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double Vocabulary::idf(TermIndex i) const {
  return 1.0 + std::log((1.0 + static_cast<double>(document_count_)) / (1.0 + static_cast<double>(df_.at(i))));
}

std::string Vocabulary::serialize() const {
  std::string out = fmt::format("#documents\t{}\t{}\n", document_count_, ngram_order_);
  for (std::size_t i = 0; i < terms_.size(); ++i) out += fmt::format("{}\t{}\t{}\n", terms_[i], i, df_[i]);
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) throw CorruptArtifact("vocabulary: missing trailing newline");
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  auto fields = [](const std::string& line) {
    std::vector<std::string> out;
    std::size_t s = 0;
    while (true) {
      const auto tab = line.find('\t', s);
      out.push_back(line.substr(s, tab == std::string::npos ? std::string::npos : tab - s));
      if (tab == std::string::npos) break;
      s = tab + 1;
    }
    return out;
  };
  if (lines.empty()) throw CorruptArtifact("vocabulary: empty");
  const auto header = fields(lines[0]);
  if (header.size() != 3 || header[0] != "#documents") throw CorruptArtifact("vocabulary: bad header");
  try {
    const auto n = std::stoull(header[1]);
    const int order = std::stoi(header[2]);
    std::vector<std::string> terms;
    std::vector<std::uint64_t> df;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = fields(lines[i]);
      if (f.size() != 3 || std::stoull(f[1]) != i - 1) throw CorruptArtifact("vocabulary: bad line " + lines[i]);
      terms.push_back(f[0]);
      df.push_back(std::stoull(f[2]));
    }
    return Vocabulary(std::move(terms), std::move(df), n, order);
  } catch (const std::logic_error&) {
    throw CorruptArtifact("vocabulary: malformed number");
  }
}

Vocabulary fit_vocabulary(std::span<const std::string> texts, int ngram_order, std::optional<std::int64_t> cap) {
  if (texts.empty()) throw ValidationError("docs", "cannot fit a vocabulary on zero documents");
  if (cap && *cap < 1) throw ValidationError("trainer.vocabulary_cap", "must be >= 1");

  std::map<std::string, std::uint64_t> df;
  for (const auto& text : texts) {
    auto tokens = tokenize(text, ngram_order);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++df[std::move(t)];
  }

  std::vector<std::pair<std::string, std::uint64_t>> ranked(df.begin(), df.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (cap && ranked.size() > static_cast<std::size_t>(*cap)) ranked.resize(static_cast<std::size_t>(*cap));

  std::vector<std::string> terms;
  std::vector<std::uint64_t> freqs;
  for (auto& [term, f] : ranked) {
    terms.push_back(std::move(term));
    freqs.push_back(f);
  }
  return Vocabulary(std::move(terms), std::move(freqs), texts.size(), ngram_order);
}

Vocabulary fit_vocabulary(std::span<const AnnotatedDocument> docs, const TrainerConfig& cfg) {
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  return fit_vocabulary(texts, static_cast<int>(cfg.ngram_order), cfg.vocabulary_cap);
}

SparseVector tfidf_vectorize(std::string_view text, const Vocabulary& vocab) {
  std::map<TermIndex, std::uint64_t> counts;
  for (const auto& token : tokenize(text, vocab.ngram_order())) {
    if (auto idx = vocab.find(token)) ++counts[*idx];
  }
  SparseVector v;
  v.entries.reserve(counts.size());
  double norm2 = 0.0;
  for (const auto& [idx, count] : counts) {
    const double w = static_cast<double>(count) * vocab.idf(idx);
    v.entries.push_back({idx, w});
    norm2 += w * w;
  }
  if (norm2 > 0.0) {
    const double norm = std::sqrt(norm2);
    for (auto& e : v.entries) e.weight /= norm;
  }
  return v;
}

}  // namespace alsim
