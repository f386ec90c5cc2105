#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ipr {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// catch one type and print the message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: unknown task ids, malformed config files, bad key values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Stored data does not replay or deserialize consistently.
class DataCorruptionError : public Error {
 public:
  explicit DataCorruptionError(const std::string& msg) : Error(msg) {}
};

// An operation was called outside its contract (e.g. scoring a non-terminal
// state). Indicates a programming error, not bad input data.
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& msg) : Error(msg) {}
};

// Exact enumeration refused because the continuation tree exceeds the node
// budget. Callers fall back to Monte Carlo.
class BudgetExceeded : public Error {
 public:
  explicit BudgetExceeded(const std::string& msg) : Error(msg) {}
};

// A loss or gradient stopped being finite. Optimizers catch this to fall
// back to the last finite state.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// 64-bit FNV-1a. Fixed parameters, stable across platforms; used for feature
// bucketing and cache keys, never for integrity (see sha256 below).
constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv1a(std::string_view s, uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a_u64(uint64_t v, uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= kFnvPrime;
  }
  return h;
}

// 128-bit content key for caches: two independent FNV streams.
struct Hash128 {
  uint64_t lo = 0;
  uint64_t hi = 0;
  friend bool operator==(const Hash128& a, const Hash128& b) {
    return a.lo == b.lo && a.hi == b.hi;
  }
  friend bool operator<(const Hash128& a, const Hash128& b) {
    return a.hi != b.hi ? a.hi < b.hi : a.lo < b.lo;
  }
};

Hash128 hash128(std::string_view s);
std::string to_hex(uint64_t v);
std::string to_hex(const Hash128& h);

// SHA-256 of a byte string; returns lowercase hex. Self-contained
// implementation, used for manifest/content hashes.
std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::string& path);

// Deterministic stream derivation: a named substream of a root seed.
// Streams are keyed, not split, so results never depend on call order.
class SeedKey {
 public:
  explicit SeedKey(uint64_t root) : h_(fnv1a_u64(root)) {}
  SeedKey& with(std::string_view part) {
    h_ = fnv1a(part, h_);
    h_ = fnv1a("/", h_);
    return *this;
  }
  SeedKey& with(uint64_t part) {
    h_ = fnv1a_u64(part, h_);
    return *this;
  }
  uint64_t seed() const { return h_; }
  std::mt19937_64 rng() const { return std::mt19937_64(h_); }

 private:
  uint64_t h_;
};

// Uniform double in [0, 1) with 53 random bits. mt19937_64 output is
// specified by the standard, so this is bit-stable everywhere.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform index in [0, n). Modulo bias is irrelevant at these ranges and the
// result is deterministic, which is what matters here.
inline size_t uniform_index(std::mt19937_64& rng, size_t n) {
  return static_cast<size_t>(rng() % n);
}

// In-place Fisher-Yates with our own index draw; std::shuffle is
// implementation-defined and would break byte-reproducibility.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

// Shortest exact decimal for a double ("%.17g"); used everywhere a float is
// written to a text artifact so reruns are byte-identical.
std::string format_double(double v);

std::vector<std::string> split_tokens(std::string_view text);

// log(sigmoid(x)) evaluated via softplus of the negative argument; stable for
// large |x| in both directions.
double log_sigmoid(double x);
double sigmoid(double x);

// Case-insensitive Levenshtein distance, for config key suggestions.
size_t edit_distance(std::string_view a, std::string_view b);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

}  // namespace ipr
