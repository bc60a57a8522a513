#ifndef NL2FOL_LINEARIZE_HPP
#define NL2FOL_LINEARIZE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nl2fol/fol.hpp"

// Flattening of FOL trees into token sequences and back.
//
// Per scope level the emission order is: every unary predicate (followed by
// its variable), then every binary predicate (followed by its two variables),
// then each nested "not(" scope recursively, then ")".  Existential
// quantifiers are erased; within a category the formula's left-to-right order
// is kept.  The scope symbols are "fol(", "not(" and ")".

namespace nl2fol::lin {

enum class Category : std::uint8_t { U, B, V, S };

char category_letter(Category c);
Category category_from_letter(char c);

struct AlignTarget {
  bool aligned = false;  // true: repeats the variable first seen at `position`
  int position = -1;
  bool operator==(const AlignTarget&) const = default;
};

enum class AnchorMode { Earliest, MostRecent };

struct TokenSequence {
  std::vector<std::string> tokens;
  std::vector<Category> categories;
  std::vector<AlignTarget> align;  // one per position; meaningful at V positions
  bool unclosed = false;           // greedy decoding hit the step limit

  std::size_t size() const { return tokens.size(); }
  std::string text() const;
};

class CapacityExceeded : public std::runtime_error {
 public:
  explicit CapacityExceeded(std::size_t length, std::size_t cap)
      : std::runtime_error("linearized sequence has " + std::to_string(length) +
                           " tokens, cap is " + std::to_string(cap)) {}
};

class MalformedSequence : public std::runtime_error {
 public:
  explicit MalformedSequence(const std::string& what) : std::runtime_error(what) {}
};

// max_len = 0 means unbounded. Alignment targets are filled in (earliest
// prior occurrence).  Requires a valid, normalized formula.
TokenSequence linearize(const fol::FormulaPtr& f, std::size_t max_len = 0);

// Rebuilds a formula: each distinct variable is existentially bound at the
// innermost scope enclosing all of its occurrences.  The top-level id is 1.
fol::FormulaPtr delinearize(const TokenSequence& ts);

// Tokenizes a space-separated mapping line and infers categories (scope
// symbols and variables by shape, U/B by trailing variable count).
TokenSequence sequence_from_text(const std::string& mapping);

// decision=0 at a variable's first occurrence, else decision=1 with the
// earliest (or most recent) prior occurrence position.
std::vector<AlignTarget> alignment_targets(const TokenSequence& ts,
                                           AnchorMode mode = AnchorMode::Earliest);

bool is_scope_token(const std::string& tok);
bool is_variable_token(const std::string& tok);

}  // namespace nl2fol::lin

#endif  // NL2FOL_LINEARIZE_HPP
