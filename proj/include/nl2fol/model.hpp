#ifndef NL2FOL_MODEL_HPP
#define NL2FOL_MODEL_HPP

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nl2fol/autodiff.hpp"
#include "nl2fol/corpus.hpp"
#include "nl2fol/linearize.hpp"

namespace nl2fol::model {

enum class Variant {
  Vanilla,
  VanillaSelfAttn,
  VanillaAlign,
  SepHeads,
  SepHeadsSelfAttn,
  SepHeadsAlign,
};

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
bool separate_heads(Variant v);
bool self_attention(Variant v);
bool alignment(Variant v);
const std::vector<Variant>& all_variants();

struct LengthExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyKeys : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingTargets : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CategoryMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int embed_dim = 100;      // D: input token embedding size
  int hidden = 400;         // d_h = d_c; each encoder direction runs hidden/2 units
  int pred_embed = 100;     // unary/binary decoder-input embedding size
  int scope_embed = 50;     // scope decoder-input embedding size
  int max_input_len = 100;  // m
  int max_output_len = 30;  // n
  Variant variant = Variant::Vanilla;
  // true: heads read [h; c_e] (plus c_d under self-attention); false: the
  // literal Eq. 8-12 reading where heads see the decoder state alone.
  bool heads_use_context = true;

  void validate() const;  // hidden even, every size positive
  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct LossValues {
  double ce = 0.0;
  double aux = 0.0;
  double dec = 0.0;
  double pos = 0.0;
  double total = 0.0;
};

// Graph nodes of the individual loss terms; idx -1 where the variant lacks
// the term. Lets callers run backward on a single term.
struct LossNodes {
  ad::Var ce;
  ad::Var aux;
  ad::Var dec;
  ad::Var pos;
  ad::Var total;
};

// Per-step instrumentation captured during a teacher-forced pass.
struct StepInfo {
  lin::Category fed_category = lin::Category::S;  // decoder input's category
  int fed_token_id = -1;                          // id in that category's vocab; -1 = START
  bool fed_start = false;
  std::vector<double> token_logits;     // routed head (merged head for vanilla)
  std::vector<double> category_logits;  // separate-heads variants
  std::vector<double> self_context;     // c_d (self-attention variants)
  double gate = -1.0;                   // A_d where the align path ran
  std::vector<double> gamma;            // position weights over earlier steps
};
using ForwardTrace = std::vector<StepInfo>;

// Softmax-dot attention: weights over keys from query dot products, context
// as the weighted sum of values. keys and values must be matched in length.
std::pair<ad::Var, ad::Var> attend(ad::Tape& t, ad::Var query, const std::vector<ad::Var>& keys,
                                   const std::vector<ad::Var>& values);

class Model {
 public:
  Model(ModelConfig cfg, corpus::Vocabs vocabs, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const corpus::Vocabs& vocabs() const { return vocabs_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }

  // Teacher-forced loss graph for one example; returns the total-loss node.
  ad::Var example_loss(ad::Tape& t, const corpus::Example& ex, LossValues* vals = nullptr,
                       ForwardTrace* trace = nullptr, LossNodes* nodes = nullptr);

  // Forward-only mean loss values over a batch.
  LossValues evaluate(const std::vector<corpus::Example>& batch);

  // Per-example graphs with 1/batch scaling, global-norm clipping, one Adam
  // step. Returns the mean loss values at the pre-step parameters.
  LossValues train_step(const std::vector<corpus::Example>& batch, ad::Adam& opt,
                        double clip_norm = 5.0);

  // Greedy decoding; stops when the scope depth returns to zero or at n steps
  // (then `unclosed` is set on the result). Category-routed variants pick the
  // category first and mask it by the pending-argument state.
  lin::TokenSequence greedy_decode(const std::vector<std::string>& sentence_tokens);

  // Merged-vocabulary layout for the vanilla head: [unary | binary | variable | scope].
  int merged_vocab_size() const;
  int merged_id(lin::Category c, int id_in_category) const;
  std::pair<lin::Category, int> split_merged(int merged) const;

  // biLSTM encoder states, one hidden-wide node per token (forward and
  // backward halves concatenated).
  std::vector<ad::Var> encode(ad::Tape& t, const std::vector<int>& input_ids);

  // Test hook: pin A_d to zero so the align path degenerates to h_d.
  void set_force_gate_zero(bool on) { force_gate_zero_ = on; }

  void save(const std::string& path) const;
  // Throws when the checkpoint's vocabulary digest differs from `vocabs`.
  static Model load(const std::string& path, const corpus::Vocabs& vocabs);
  // Loads with the vocabularies embedded in the checkpoint.
  static Model load(const std::string& path);

 private:
  struct Handles {
    ad::Param* embed_input = nullptr;
    ad::LstmWeights enc_fwd, enc_bwd, dec;
    ad::Param* embed_unary = nullptr;
    ad::Param* embed_binary = nullptr;
    ad::Param* embed_scope = nullptr;
    ad::Param* head_merged = nullptr;
    ad::Param* head_unary = nullptr;
    ad::Param* head_binary = nullptr;
    ad::Param* head_variable = nullptr;
    ad::Param* head_scope = nullptr;
    ad::Param* head_category = nullptr;
    ad::Param* align_gate = nullptr;
    ad::Param* align_proj = nullptr;
  };

  Model(ModelConfig cfg, corpus::Vocabs vocabs);  // no init; used by load()

  void init_params(std::uint64_t seed);
  void bind_handles();
  int head_width() const;  // width of [h; c_e (; c_d)] per config
  int decoder_input_width() const;

  // Decoder input for a gold/predicted previous token; start = all-zero
  // segments with the START category one-hot.
  ad::Var decoder_input(ad::Tape& t, bool start, lin::Category cat, int token_id);

  ModelConfig cfg_;
  corpus::Vocabs vocabs_;
  ad::ParamStore store_;
  Handles h_;
  bool force_gate_zero_ = false;
};

}  // namespace nl2fol::model

#endif  // NL2FOL_MODEL_HPP
