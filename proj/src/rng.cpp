#include "alsim/rng.hpp"

#include <sstream>

#include "alsim/digest.hpp"
#include "alsim/errors.hpp"

namespace alsim {

Rng Rng::derive(std::string_view fingerprint, std::int64_t seed, std::string_view tag) {
  std::string key;
  key.append(fingerprint).append("|").append(std::to_string(seed)).append("|").append(tag);
  return Rng(sha256_u64(key));
}

Rng Rng::derive(std::string_view fingerprint, std::int64_t seed, std::string_view tag,
                std::int64_t step) {
  std::string full(tag);
  full.append("#").append(std::to_string(step));
  return derive(fingerprint, seed, full);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  // Rejection sampling over the largest multiple of bound.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound + 1) % bound;
  std::uint64_t x = engine_();
  while (x > limit) x = engine_();
  return x % bound;
}

double Rng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  if (!is) throw CorruptArtifact("invalid RNG state");
}

}  // namespace alsim
