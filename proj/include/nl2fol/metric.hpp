#ifndef NL2FOL_METRIC_HPP
#define NL2FOL_METRIC_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nl2fol/fol.hpp"

namespace nl2fol::metric {

// Pair decomposition of a formula. Three pair families:
//   (predicate name, variable at 1-based argument position)
//   (scope, predicate name)      scopes are the fol( root and each not(
//   (scope, scope)               parent scope, directly nested scope
// The scope families are kept as a tree; the pair multisets fall out of it.
struct PairSet {
  struct VarPair {
    std::string pred;
    int var = -1;  // index into vars
    int pos = 1;
  };
  struct Scope {
    int parent = -1;
    std::vector<std::string> preds;  // names of predicates directly inside
    std::vector<int> children;       // nested not( scopes
  };

  std::vector<VarPair> var_pairs;
  std::vector<Scope> scopes;        // [0] is the fol( root
  std::vector<fol::VarId> vars;     // distinct variables, first-occurrence order

  std::size_t size() const;         // total number of pairs
};

PairSet decompose_pairs(const fol::FormulaPtr& f);

// gold-side index -> pred-side index, -1 when unaligned
struct Alignment {
  std::vector<int> var_map;
  std::vector<int> scope_map;
};

struct AlignResult {
  Alignment alignment;
  std::size_t matched = 0;
};

class InstanceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hill climbing over variable injections (signature-based init, pairwise
// swaps, 4 seeded random restarts); the scope map is solved exactly by
// recursive child matching in both aligners.
AlignResult align_greedy(const PairSet& gold, const PairSet& pred, std::uint64_t seed = 0);

// True maximum over all variable injections and nesting-consistent scope
// maps. Throws InstanceTooLarge when either side has more than 8 variables
// or more than 4 scopes.
AlignResult align_exhaustive(const PairSet& gold, const PairSet& pred);

struct ScoreReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool exact = false;
  std::size_t matched = 0;
  std::size_t gold_pairs = 0;
  std::size_t pred_pairs = 0;
};

// pred may be null (a prediction that failed to parse); it scores zero.
ScoreReport score(const fol::FormulaPtr& gold, const fol::FormulaPtr& pred,
                  bool exhaustive = false, std::uint64_t seed = 0);

struct BucketScore {
  int lo = 0;
  int hi = 0;  // 0 means open-ended
  std::size_t examples = 0;
  std::size_t matched = 0;
  std::size_t gold_pairs = 0;
  std::size_t pred_pairs = 0;
  double f1 = 0.0;
};

struct CorpusReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;      // structural exact match
  double accuracy_str = 0.0;  // string-equality of mapping lines
  std::size_t examples = 0;
  std::size_t exact = 0;
  std::size_t exact_str = 0;
  std::size_t matched = 0;
  std::size_t gold_pairs = 0;
  std::size_t pred_pairs = 0;
  std::vector<BucketScore> buckets;  // by input length: 1-5, 6-10, 11-15, 16-20, 21+
};

struct CorpusItem {
  fol::FormulaPtr gold;
  fol::FormulaPtr pred;   // null when the prediction was malformed
  int input_len = 0;      // sentence length in tokens, 0 when unknown
  bool string_equal = false;
};

class EmptyCorpus : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

CorpusReport score_corpus(const std::vector<CorpusItem>& items, bool exhaustive = false,
                          std::uint64_t seed = 0);

}  // namespace nl2fol::metric

#endif  // NL2FOL_METRIC_HPP
