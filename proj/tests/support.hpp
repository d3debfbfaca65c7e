#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "alsim/corpus.hpp"
#include "alsim/featurize.hpp"
#include "alsim/trainer.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("alsim-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Split built straight from (text, label) pairs.
inline alsim::DatasetSplit make_split(const std::vector<std::pair<std::string, std::string>>& train,
                                      const std::vector<std::pair<std::string, std::string>>& dev,
                                      const std::vector<std::pair<std::string, std::string>>& test) {
  auto raw = [](const std::vector<std::pair<std::string, std::string>>& rows) {
    std::vector<alsim::RawDocument> out;
    for (const auto& [text, label] : rows) {
      alsim::RawDocument d;
      d.text = text;
      d.label = label;
      out.push_back(d);
    }
    return out;
  };
  return alsim::convert_records(raw(train), raw(dev), raw(test));
}

inline std::vector<const alsim::SparseVector*> pointers(const std::vector<alsim::SparseVector>& v) {
  std::vector<const alsim::SparseVector*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

// Predictor backed by a fixed probability table indexed by id. Counts calls
// so tests can tell whether a strategy consulted it.
class TablePredictor final : public alsim::Predictor {
 public:
  explicit TablePredictor(std::vector<std::vector<double>> table) : table_(std::move(table)) {}

  std::size_t label_count() const override { return table_.empty() ? 0 : table_.front().size(); }
  std::vector<std::vector<double>> predict_proba(std::span<const alsim::DocId> ids) const override {
    ++calls_;
    std::vector<std::vector<double>> out;
    for (auto id : ids) out.push_back(table_.at(id));
    return out;
  }

  const std::vector<std::vector<double>>& table() const { return table_; }
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::vector<double>> table_;
  mutable std::size_t calls_ = 0;
};

// Random probability rows for n ids. Values are quantised to 1/steps so
// equal margins (and hence id tie-breaks) actually occur.
template <typename Gen>
std::vector<std::vector<double>> random_probabilities(Gen& gen, std::size_t n, std::size_t labels, int steps) {
  std::vector<std::vector<double>> table;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(labels);
    double sum = 0.0;
    for (auto& x : w) {
      x = 1.0 + static_cast<double>(gen() % static_cast<unsigned>(steps));
      sum += x;
    }
    for (auto& x : w) x /= sum;
    table.push_back(std::move(w));
  }
  return table;
}

}  // namespace testing
