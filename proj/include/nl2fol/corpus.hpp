#ifndef NL2FOL_CORPUS_HPP
#define NL2FOL_CORPUS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "nl2fol/linearize.hpp"
#include "nl2fol/util.hpp"

namespace nl2fol::corpus {

inline constexpr std::size_t kMaxSentenceLen = 100;  // m
inline constexpr std::size_t kMaxTargetLen = 30;     // n
inline constexpr int kVariableLetters = 26;

inline const std::string kUnk = "<unk>";
inline const std::string kNewVar = "<new>";
inline const std::string kStart = "<start>";

struct RawExample {
  std::string sentence;
  std::string fol;
};

// one indexed token set; id 0 is <unk> when the set is open
struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  bool has_unk = false;

  void add(const std::string& tok) {
    if (index.emplace(tok, static_cast<int>(tokens.size())).second) tokens.push_back(tok);
  }
  int id(const std::string& tok) const {
    auto it = index.find(tok);
    if (it != index.end()) return it->second;
    if (has_unk) return 0;
    return -1;
  }
  int size() const { return static_cast<int>(tokens.size()); }
};

struct Vocabs {
  Vocab input;     // sentence tokens, <unk> at 0
  Vocab unary;     // <unk> at 0
  Vocab binary;    // <unk> at 0
  Vocab variable;  // closed: A..Z plus <new>
  Vocab scope;     // fol( ) not(
  Vocab category;  // U B V S <start>

  std::string serialize() const;
  static Vocabs deserialize(const std::string& text);
  std::string digest() const;  // sha256 of serialize()
};

class EmptyCorpus : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// input vocabulary applies a min-frequency cutoff; target vocabularies keep
// every token in first-occurrence order
Vocabs build_vocabs(const std::vector<RawExample>& corpus, int min_freq = 2);

struct Example {
  std::string sentence;                // original text
  std::vector<std::string> tokens;     // tokenized input
  std::vector<int> input_ids;
  lin::TokenSequence target;           // tokens, categories, align targets
  std::vector<int> target_ids;         // per step, indexed in that step's category vocab
};

Example encode_example(const std::string& sentence, const std::string& fol_text, const Vocabs& v);

Example perturb_variables(const Example& e, const Vocabs& v, Rng& rng);

struct GeneratorProfile {
  int max_entities = 4;
  int max_negation_depth = 2;
  std::size_t max_target_len = kMaxTargetLen;
};

std::vector<RawExample> synth_corpus(Rng& rng, std::size_t count,
                                     const GeneratorProfile& profile = {});

struct Splits {
  std::vector<RawExample> train, dev, test;
};

// sentences are unique within a synthetic corpus, so splitting by position
// after a seeded shuffle keeps the splits disjoint on sentence text
Splits split_corpus(std::vector<RawExample> items, Rng& rng, double dev_frac, double test_frac);

std::vector<RawExample> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<RawExample>& items);

}  // namespace nl2fol::corpus

#endif  // NL2FOL_CORPUS_HPP
