#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alsim {

// Seeded 64-bit Mersenne Twister with platform-stable helpers. The standard
// distributions are implementation-defined, so every draw the pipeline makes
// goes through the methods below instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Stream for (fingerprint, seed, component tag[, step]). Streams for
  // distinct tuples are independent.
  static Rng derive(std::string_view fingerprint, std::int64_t seed, std::string_view tag);
  static Rng derive(std::string_view fingerprint, std::int64_t seed, std::string_view tag,
                    std::int64_t step);

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double unit();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Uniform sample without replacement, in draw order.
  template <typename T>
  std::vector<T> sample(std::span<const T> items, std::size_t count) {
    std::vector<T> pool(items.begin(), items.end());
    if (count > pool.size()) count = pool.size();
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
  }

  std::string state() const;
  void set_state(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace alsim
