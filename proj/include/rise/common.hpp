#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rise {

// Error categories map onto process exit codes in the CLI:
//   ConfigError -> 1 (bad usage, bad config)
//   DataError   -> 2 (missing/corrupt files, malformed records)
//   TrainAbort  -> 3 (training cannot proceed)
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct TrainAbort : std::runtime_error {
  explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

struct PoolNotFound : DataError {
  explicit PoolNotFound(const std::string& path) : DataError("pool file not found: " + path) {}
};
struct CheckpointNotFound : DataError {
  explicit CheckpointNotFound(const std::string& path) : DataError("checkpoint not found: " + path) {}
};
struct MalformedMetrics : DataError {
  MalformedMetrics(const std::string& path, int line)
      : DataError("malformed metrics row at " + path + ":" + std::to_string(line)), line_number(line) {}
  int line_number;
};

// Counter-based splitmix64: portable, fast, and stable across platforms.
// All randomness in the project flows through this type; std:: distributions
// are avoided because their output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform index in [0, n). Modulo bias is negligible for n << 2^64.
  std::size_t next_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream from (seed, name, index); used so that every
// trajectory draw is keyed by identity rather than by call order.
inline Rng stream_rng(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  std::uint64_t s = mix64(seed ^ 0x6a09e667f3bcc908ull);
  s = mix64(s ^ fnv1a64(name));
  s = mix64(s ^ (index + 0x9e3779b97f4a7c15ull));
  return Rng(s);
}

// Fisher-Yates with explicit Rng so shuffles are reproducible everywhere.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.next_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace rise
