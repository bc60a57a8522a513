#ifndef NL2FOL_UTIL_HPP
#define NL2FOL_UTIL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nl2fol {

inline constexpr const char* kVersion = "0.1.0";

// Deterministic RNG with a fixed bit-level contract. mt19937_64 supplies the
// raw stream; the int/real mappings are written out here so that outputs do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {
    for (int i = 0; i < 8; ++i) next_u64();
  }

  std::uint64_t next_u64();

  // Uniform in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  // Uniform integer in [lo, hi], inclusive.
  long uniform_int(long lo, long hi) {
    return lo + static_cast<long>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform_real();

  // Uniform in [lo, hi).
  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

  bool bernoulli(double p) { return uniform_real() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<int> permutation(int n);

  // Independent child stream; splitmix-style mixing.
  Rng fork(std::uint64_t salt) const;

 private:
  std::uint64_t state_;
};

// SHA-256 hex digest of a byte buffer / of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::string& path);

// Whitespace/punctuation tokenizer used for input sentences: lowercases,
// keeps [a-z0-9_]+ runs together, emits other printable chars as single
// tokens, drops whitespace.
std::vector<std::string> tokenize_sentence(const std::string& text);

std::string join(const std::vector<std::string>& tokens, const std::string& sep = " ");
std::vector<std::string> split_ws(const std::string& line);

std::string to_lower(std::string s);

// key = value config files ('#' comments, blank lines ignored).
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

// Whole-file helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

// Shortest round-trippable decimal form of a double (printf %.17g trimmed).
std::string format_double(double x);

}  // namespace nl2fol

#endif  // NL2FOL_UTIL_HPP
