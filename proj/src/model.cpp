#include "nl2fol/model.hpp"

#include <set>
#include <tuple>

#include <json.hpp>

namespace nl2fol::model {

namespace {

using ad::Mat;
using ad::Tape;
using ad::Var;
using lin::Category;

constexpr double kGateThreshold = 0.5;

int category_id(Category c) { return static_cast<int>(c); }  // matches vocab order U,B,V,S

Mat one_hot(int size, int index) {
  Mat m = Mat::Zero(size, 1);
  m(index, 0) = 1.0;
  return m;
}

int masked_argmax(const Mat& scores, const std::vector<int>& allowed) {
  int best = allowed.front();
  for (int i : allowed)
    if (scores(i, 0) > scores(best, 0)) best = i;
  return best;
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  for (Variant v : all_variants())
    if (to_string(v) == s) return v;
  throw std::runtime_error("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::VanillaSelfAttn: return "vanilla-selfattn";
    case Variant::VanillaAlign: return "vanilla-align";
    case Variant::SepHeads: return "sepheads";
    case Variant::SepHeadsSelfAttn: return "sepheads-selfattn";
    case Variant::SepHeadsAlign: return "sepheads-align";
  }
  throw std::logic_error("bad variant");
}

bool separate_heads(Variant v) {
  return v == Variant::SepHeads || v == Variant::SepHeadsSelfAttn || v == Variant::SepHeadsAlign;
}

bool self_attention(Variant v) {
  return v == Variant::VanillaSelfAttn || v == Variant::SepHeadsSelfAttn;
}

bool alignment(Variant v) {
  return v == Variant::VanillaAlign || v == Variant::SepHeadsAlign;
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> k = {
      Variant::Vanilla,        Variant::VanillaSelfAttn,  Variant::VanillaAlign,
      Variant::SepHeads,       Variant::SepHeadsSelfAttn, Variant::SepHeadsAlign,
  };
  return k;
}

void ModelConfig::validate() const {
  if (hidden <= 0 || hidden % 2 != 0)
    throw std::runtime_error("hidden size must be positive and even");
  if (embed_dim <= 0 || pred_embed <= 0 || scope_embed <= 0)
    throw std::runtime_error("embedding sizes must be positive");
  if (max_input_len <= 0 || max_output_len <= 0)
    throw std::runtime_error("length bounds must be positive");
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  return {
      {"embed_dim", std::to_string(embed_dim)},
      {"hidden", std::to_string(hidden)},
      {"pred_embed", std::to_string(pred_embed)},
      {"scope_embed", std::to_string(scope_embed)},
      {"max_input_len", std::to_string(max_input_len)},
      {"max_output_len", std::to_string(max_output_len)},
      {"variant", to_string(variant)},
      {"heads_use_context", heads_use_context ? "1" : "0"},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto num = [&](const char* key, int& out) {
    auto it = kv.find(key);
    if (it != kv.end()) out = std::stoi(it->second);
  };
  num("embed_dim", c.embed_dim);
  num("hidden", c.hidden);
  num("pred_embed", c.pred_embed);
  num("scope_embed", c.scope_embed);
  num("max_input_len", c.max_input_len);
  num("max_output_len", c.max_output_len);
  if (auto it = kv.find("variant"); it != kv.end()) c.variant = variant_from_string(it->second);
  if (auto it = kv.find("heads_use_context"); it != kv.end())
    c.heads_use_context = it->second != "0";
  c.validate();
  return c;
}

std::pair<Var, Var> attend(Tape& t, Var query, const std::vector<Var>& keys,
                           const std::vector<Var>& values) {
  if (keys.empty()) throw EmptyKeys("attend: no keys");
  if (keys.size() != values.size()) throw EmptyKeys("attend: key/value count mismatch");
  std::vector<Var> logits;
  logits.reserve(keys.size());
  for (Var k : keys) logits.push_back(t.dot(query, k));
  Var weights = t.softmax(t.concat(logits));
  return {weights, t.weighted_sum(weights, values)};
}

Model::Model(ModelConfig cfg, corpus::Vocabs vocabs)
    : cfg_(std::move(cfg)), vocabs_(std::move(vocabs)) {
  cfg_.validate();
}

Model::Model(ModelConfig cfg, corpus::Vocabs vocabs, std::uint64_t seed)
    : Model(std::move(cfg), std::move(vocabs)) {
  init_params(seed);
  bind_handles();
}

int Model::head_width() const {
  int w = cfg_.hidden;
  if (cfg_.heads_use_context) w += cfg_.hidden;
  if (self_attention(cfg_.variant)) w += cfg_.hidden;
  return w;
}

int Model::decoder_input_width() const {
  return 2 * cfg_.pred_embed + vocabs_.variable.size() + cfg_.scope_embed +
         vocabs_.category.size();
}

int Model::merged_vocab_size() const {
  return vocabs_.unary.size() + vocabs_.binary.size() + vocabs_.variable.size() +
         vocabs_.scope.size();
}

int Model::merged_id(Category c, int id) const {
  switch (c) {
    case Category::U: return id;
    case Category::B: return vocabs_.unary.size() + id;
    case Category::V: return vocabs_.unary.size() + vocabs_.binary.size() + id;
    case Category::S:
      return vocabs_.unary.size() + vocabs_.binary.size() + vocabs_.variable.size() + id;
  }
  throw std::logic_error("bad category");
}

std::pair<Category, int> Model::split_merged(int merged) const {
  int at = merged;
  if (at < vocabs_.unary.size()) return {Category::U, at};
  at -= vocabs_.unary.size();
  if (at < vocabs_.binary.size()) return {Category::B, at};
  at -= vocabs_.binary.size();
  if (at < vocabs_.variable.size()) return {Category::V, at};
  at -= vocabs_.variable.size();
  return {Category::S, at};
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(seed);
  const int half = cfg_.hidden / 2;
  store_.dense("embed.input", vocabs_.input.size(), cfg_.embed_dim, rng);
  ad::lstm_weights(store_, "enc.fwd", cfg_.embed_dim, half, rng);
  ad::lstm_weights(store_, "enc.bwd", cfg_.embed_dim, half, rng);
  ad::lstm_weights(store_, "dec", decoder_input_width(), cfg_.hidden, rng);
  store_.dense("embed.unary", vocabs_.unary.size(), cfg_.pred_embed, rng);
  store_.dense("embed.binary", vocabs_.binary.size(), cfg_.pred_embed, rng);
  store_.dense("embed.scope", vocabs_.scope.size(), cfg_.scope_embed, rng);
  const int hw = head_width();
  if (separate_heads(cfg_.variant)) {
    store_.dense("head.unary", vocabs_.unary.size(), hw, rng);
    store_.dense("head.binary", vocabs_.binary.size(), hw, rng);
    store_.dense("head.variable", vocabs_.variable.size(), hw, rng);
    store_.dense("head.scope", vocabs_.scope.size(), hw, rng);
    store_.dense("head.category", vocabs_.category.size(), hw, rng);
  } else {
    store_.dense("head.merged", merged_vocab_size(), hw, rng);
  }
  if (alignment(cfg_.variant)) {
    store_.dense("align.gate", 1, cfg_.hidden, rng);
    store_.dense("align.proj", cfg_.hidden, cfg_.hidden, rng);
  }
}

void Model::bind_handles() {
  auto lstm = [&](const std::string& prefix, int hidden) {
    ad::LstmWeights w;
    w.w = store_.at(prefix + ".w");
    w.u = store_.at(prefix + ".u");
    w.b = store_.at(prefix + ".b");
    w.hidden = hidden;
    return w;
  };
  h_.embed_input = store_.at("embed.input");
  h_.enc_fwd = lstm("enc.fwd", cfg_.hidden / 2);
  h_.enc_bwd = lstm("enc.bwd", cfg_.hidden / 2);
  h_.dec = lstm("dec", cfg_.hidden);
  h_.embed_unary = store_.at("embed.unary");
  h_.embed_binary = store_.at("embed.binary");
  h_.embed_scope = store_.at("embed.scope");
  if (separate_heads(cfg_.variant)) {
    h_.head_unary = store_.at("head.unary");
    h_.head_binary = store_.at("head.binary");
    h_.head_variable = store_.at("head.variable");
    h_.head_scope = store_.at("head.scope");
    h_.head_category = store_.at("head.category");
  } else {
    h_.head_merged = store_.at("head.merged");
  }
  if (alignment(cfg_.variant)) {
    h_.align_gate = store_.at("align.gate");
    h_.align_proj = store_.at("align.proj");
  }
}

std::vector<Var> Model::encode(Tape& t, const std::vector<int>& input_ids) {
  if (input_ids.empty()) throw LengthExceeded("encode: empty input");
  if (static_cast<int>(input_ids.size()) > cfg_.max_input_len)
    throw LengthExceeded("encode: input longer than m=" + std::to_string(cfg_.max_input_len));
  const int n = static_cast<int>(input_ids.size());
  std::vector<Var> embeds(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) embeds[static_cast<std::size_t>(i)] = t.lookup(h_.embed_input, input_ids[static_cast<std::size_t>(i)]);

  std::vector<Var> fwd(static_cast<std::size_t>(n)), bwd(static_cast<std::size_t>(n));
  ad::LstmState sf = ad::lstm_zero_state(t, cfg_.hidden / 2);
  for (int i = 0; i < n; ++i) {
    sf = ad::lstm_cell(t, h_.enc_fwd, embeds[static_cast<std::size_t>(i)], sf);
    fwd[static_cast<std::size_t>(i)] = sf.h;
  }
  ad::LstmState sb = ad::lstm_zero_state(t, cfg_.hidden / 2);
  for (int i = n - 1; i >= 0; --i) {
    sb = ad::lstm_cell(t, h_.enc_bwd, embeds[static_cast<std::size_t>(i)], sb);
    bwd[static_cast<std::size_t>(i)] = sb.h;
  }
  std::vector<Var> states(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    states[static_cast<std::size_t>(i)] =
        t.concat({fwd[static_cast<std::size_t>(i)], bwd[static_cast<std::size_t>(i)]});
  return states;
}

Var Model::decoder_input(Tape& t, bool start, Category cat, int token_id) {
  const int vv = vocabs_.variable.size();
  const int vc = vocabs_.category.size();
  Var unary = t.constant(Mat::Zero(cfg_.pred_embed, 1));
  Var binary = t.constant(Mat::Zero(cfg_.pred_embed, 1));
  Var variable = t.constant(Mat::Zero(vv, 1));
  Var scope = t.constant(Mat::Zero(cfg_.scope_embed, 1));
  Var category = t.constant(one_hot(vc, start ? vocabs_.category.id(corpus::kStart)
                                              : category_id(cat)));
  if (!start) {
    switch (cat) {
      case Category::U: unary = t.lookup(h_.embed_unary, token_id); break;
      case Category::B: binary = t.lookup(h_.embed_binary, token_id); break;
      case Category::V: variable = t.constant(one_hot(vv, token_id)); break;
      case Category::S: scope = t.lookup(h_.embed_scope, token_id); break;
    }
  }
  return t.concat({unary, binary, variable, scope, category});
}

Var Model::example_loss(Tape& t, const corpus::Example& ex, LossValues* vals,
                        ForwardTrace* trace, LossNodes* nodes) {
  const auto& target = ex.target;
  const std::size_t n = target.size();
  if (n == 0 || ex.target_ids.size() != n || target.categories.size() != n)
    throw MissingTargets("example_loss: target tokens/ids missing or inconsistent");
  if (alignment(cfg_.variant) && target.align.size() != n)
    throw MissingTargets("example_loss: alignment targets missing");

  std::vector<Var> enc = encode(t, ex.input_ids);
  ad::LstmState st = ad::lstm_zero_state(t, cfg_.hidden);
  std::vector<Var> dec_states;  // h_d for j < i
  std::vector<Var> projs;       // W_proj h_d for j < i (align variants)

  Var zero = t.constant(Mat::Zero(1, 1));
  Var ce = zero, aux = zero, dec = zero, pos = zero;

  for (std::size_t i = 0; i < n; ++i) {
    Var x = (i == 0) ? decoder_input(t, true, Category::S, 0)
                     : decoder_input(t, false, target.categories[i - 1],
                                     ex.target_ids[i - 1]);
    st = ad::lstm_cell(t, h_.dec, x, st);
    Var h_d = st.h;

    auto [alpha, c_e] = attend(t, h_d, enc, enc);
    (void)alpha;

    Var c_d;
    if (self_attention(cfg_.variant)) {
      c_d = dec_states.empty()
                ? t.constant(Mat::Zero(cfg_.hidden, 1))
                : attend(t, h_d, dec_states, dec_states).second;
    }

    const Category cat = target.categories[i];
    const int tid = ex.target_ids[i];

    // Alignment path: every step for the merged-head variant, V steps when
    // heads are routed by category.
    bool align_here = alignment(cfg_.variant) &&
                      (cfg_.variant == Variant::VanillaAlign || cat == Category::V);
    Var h_mix = h_d;
    Var gate_logit, gate;
    std::vector<Var> gamma_logits;
    Var gamma;
    if (alignment(cfg_.variant)) {
      Var proj = t.matvec(t.leaf(h_.align_proj), h_d);
      if (align_here) {
        gate_logit = t.matvec(t.leaf(h_.align_gate), h_d);
        gate = force_gate_zero_ ? t.constant(Mat::Zero(1, 1)) : t.sigmoid(gate_logit);
        Var c_a;
        if (projs.empty()) {
          c_a = t.constant(Mat::Zero(cfg_.hidden, 1));
        } else {
          for (Var pj : projs) gamma_logits.push_back(t.dot(proj, pj));
          gamma = t.softmax(t.concat(gamma_logits));
          c_a = t.weighted_sum(gamma, projs);
        }
        Var one = t.constant(Mat::Ones(1, 1));
        h_mix = t.add(t.scale_by(gate, c_a), t.scale_by(t.sub(one, gate), h_d));
      }
      projs.push_back(proj);
    }

    auto head_input = [&](Var h) {
      std::vector<Var> parts{h};
      if (cfg_.heads_use_context) parts.push_back(c_e);
      if (self_attention(cfg_.variant)) parts.push_back(c_d);
      return t.concat(parts);
    };

    Var token_logits;
    Var category_logits;
    if (separate_heads(cfg_.variant)) {
      Var base = head_input(h_d);
      category_logits = t.matvec(t.leaf(h_.head_category), base);
      aux = t.add(aux, t.cross_entropy(category_logits, category_id(cat)));
      ad::Param* head = nullptr;
      switch (cat) {
        case Category::U: head = h_.head_unary; break;
        case Category::B: head = h_.head_binary; break;
        case Category::V: head = h_.head_variable; break;
        case Category::S: head = h_.head_scope; break;
      }
      Var routed_in = (cat == Category::V && align_here) ? head_input(h_mix) : base;
      token_logits = t.matvec(t.leaf(head), routed_in);
      ce = t.add(ce, t.cross_entropy(token_logits, tid));
    } else {
      token_logits = t.matvec(t.leaf(h_.head_merged), head_input(h_mix));
      ce = t.add(ce, t.cross_entropy(token_logits, merged_id(cat, tid)));
    }

    if (alignment(cfg_.variant) && cat == Category::V) {
      const lin::AlignTarget& at = target.align[i];
      dec = t.add(dec, t.binary_cross_entropy(gate_logit, at.aligned ? 1.0 : 0.0));
      if (at.aligned) {
        if (gamma_logits.empty() || at.position < 0 ||
            at.position >= static_cast<int>(gamma_logits.size()))
          throw MissingTargets("example_loss: alignment position target out of range");
        pos = t.add(pos, t.cross_entropy(t.concat(gamma_logits), at.position));
      }
    }

    if (trace) {
      StepInfo info;
      info.fed_start = (i == 0);
      if (i > 0) {
        info.fed_category = target.categories[i - 1];
        info.fed_token_id = ex.target_ids[i - 1];
      }
      const Mat& tl = t.value(token_logits);
      info.token_logits.assign(tl.data(), tl.data() + tl.size());
      if (separate_heads(cfg_.variant)) {
        const Mat& cl = t.value(category_logits);
        info.category_logits.assign(cl.data(), cl.data() + cl.size());
      }
      if (self_attention(cfg_.variant)) {
        const Mat& cd = t.value(c_d);
        info.self_context.assign(cd.data(), cd.data() + cd.size());
      }
      if (align_here) {
        info.gate = force_gate_zero_ ? 0.0 : t.value(gate)(0, 0);
        if (gamma.idx >= 0) {
          const Mat& g = t.value(gamma);
          info.gamma.assign(g.data(), g.data() + g.size());
        }
      }
      trace->push_back(std::move(info));
    }

    dec_states.push_back(h_d);
  }

  const double inv = 1.0 / static_cast<double>(n);
  ce = t.scale(ce, inv);
  Var total = ce;
  if (separate_heads(cfg_.variant)) {
    aux = t.scale(aux, inv);
    total = t.add(total, aux);
  }
  if (alignment(cfg_.variant)) {
    dec = t.scale(dec, inv);
    pos = t.scale(pos, inv);
    total = t.add(total, t.add(dec, pos));
  }

  if (vals) {
    vals->ce = t.scalar(ce);
    vals->aux = separate_heads(cfg_.variant) ? t.scalar(aux) : 0.0;
    vals->dec = alignment(cfg_.variant) ? t.scalar(dec) : 0.0;
    vals->pos = alignment(cfg_.variant) ? t.scalar(pos) : 0.0;
    vals->total = t.scalar(total);
  }
  if (nodes) {
    nodes->ce = ce;
    if (separate_heads(cfg_.variant)) nodes->aux = aux;
    if (alignment(cfg_.variant)) {
      nodes->dec = dec;
      nodes->pos = pos;
    }
    nodes->total = total;
  }
  return total;
}

LossValues Model::evaluate(const std::vector<corpus::Example>& batch) {
  LossValues mean;
  for (const auto& ex : batch) {
    Tape t;
    LossValues v;
    example_loss(t, ex, &v);
    mean.ce += v.ce;
    mean.aux += v.aux;
    mean.dec += v.dec;
    mean.pos += v.pos;
    mean.total += v.total;
  }
  const double inv = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  mean.ce *= inv;
  mean.aux *= inv;
  mean.dec *= inv;
  mean.pos *= inv;
  mean.total *= inv;
  return mean;
}

LossValues Model::train_step(const std::vector<corpus::Example>& batch, ad::Adam& opt,
                             double clip_norm) {
  if (batch.empty()) throw MissingTargets("train_step: empty batch");
  LossValues mean;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    Tape t;
    LossValues v;
    Var total = example_loss(t, ex, &v);
    t.backward(t.scale(total, inv));
    mean.ce += v.ce * inv;
    mean.aux += v.aux * inv;
    mean.dec += v.dec * inv;
    mean.pos += v.pos * inv;
    mean.total += v.total * inv;
  }
  store_.clip_grad_norm(clip_norm);
  opt.step(store_);
  return mean;
}

lin::TokenSequence Model::greedy_decode(const std::vector<std::string>& sentence_tokens) {
  std::vector<int> ids;
  ids.reserve(sentence_tokens.size());
  for (const auto& tok : sentence_tokens) ids.push_back(vocabs_.input.id(tok));

  Tape t;
  std::vector<Var> enc = encode(t, ids);
  ad::LstmState st = ad::lstm_zero_state(t, cfg_.hidden);
  std::vector<Var> dec_states;
  std::vector<Var> projs;

  lin::TokenSequence out;
  std::vector<int> emitted_var_at;  // step -> variable id, -1 elsewhere
  std::set<int> used_letters;
  int pending_vars = 0;
  int depth = 0;
  bool start = true;
  Category prev_cat = Category::S;
  int prev_id = 0;

  const int vu = vocabs_.unary.size();
  const int vb = vocabs_.binary.size();

  for (int step = 0; step < cfg_.max_output_len; ++step) {
    Var x = decoder_input(t, start, prev_cat, prev_id);
    start = false;
    st = ad::lstm_cell(t, h_.dec, x, st);
    Var h_d = st.h;
    auto [alpha, c_e] = attend(t, h_d, enc, enc);
    (void)alpha;
    Var c_d;
    if (self_attention(cfg_.variant)) {
      c_d = dec_states.empty() ? t.constant(Mat::Zero(cfg_.hidden, 1))
                               : attend(t, h_d, dec_states, dec_states).second;
    }
    auto head_input = [&](Var h) {
      std::vector<Var> parts{h};
      if (cfg_.heads_use_context) parts.push_back(c_e);
      if (self_attention(cfg_.variant)) parts.push_back(c_d);
      return t.concat(parts);
    };

    // Alignment quantities, evaluated lazily only where the variant needs them.
    double gate_value = -1.0;
    int copy_position = -1;
    auto run_align = [&]() {
      Var proj = t.matvec(t.leaf(h_.align_proj), h_d);
      Var gate = force_gate_zero_ ? t.constant(Mat::Zero(1, 1))
                                  : t.sigmoid(t.matvec(t.leaf(h_.align_gate), h_d));
      gate_value = t.value(gate)(0, 0);
      Var c_a;
      Mat gamma;
      if (projs.empty()) {
        c_a = t.constant(Mat::Zero(cfg_.hidden, 1));
      } else {
        std::vector<Var> logits;
        for (Var pj : projs) logits.push_back(t.dot(proj, pj));
        Var g = t.softmax(t.concat(logits));
        gamma = t.value(g);
        c_a = t.weighted_sum(g, projs);
      }
      // The copy source is the best prior position that carries a variable.
      for (int j = 0; j < static_cast<int>(emitted_var_at.size()); ++j) {
        if (emitted_var_at[static_cast<std::size_t>(j)] < 0) continue;
        if (copy_position < 0 || gamma(j, 0) > gamma(copy_position, 0)) copy_position = j;
      }
      Var one = t.constant(Mat::Ones(1, 1));
      Var mixed = t.add(t.scale_by(gate, c_a),
                        t.scale_by(t.sub(one, gate), h_d));
      projs.push_back(proj);
      return mixed;
    };

    auto lowest_unused = [&]() {
      for (int l = 0; l < corpus::kVariableLetters; ++l)
        if (!used_letters.count(l)) return l;
      return 0;
    };
    auto aligned_variable = [&]() {
      if (gate_value >= kGateThreshold && copy_position >= 0)
        return emitted_var_at[static_cast<std::size_t>(copy_position)];
      return lowest_unused();
    };

    Category cat;
    int tid = 0;
    if (step == 0) {
      // The grammar fixes the opener; decoding starts inside "fol(".
      cat = Category::S;
      tid = vocabs_.scope.id("fol(");
      if (alignment(cfg_.variant)) {
        if (cfg_.variant == Variant::VanillaAlign) run_align();
        else projs.push_back(t.matvec(t.leaf(h_.align_proj), h_d));
      }
    } else if (separate_heads(cfg_.variant)) {
      Var base = head_input(h_d);
      Mat cat_scores = t.value(t.matvec(t.leaf(h_.head_category), base));
      std::vector<int> allowed_cats;
      if (pending_vars > 0) allowed_cats = {category_id(Category::V)};
      else allowed_cats = {category_id(Category::U), category_id(Category::B),
                           category_id(Category::S)};
      cat = static_cast<Category>(masked_argmax(cat_scores, allowed_cats));
      if (cat == Category::V && cfg_.variant == Variant::SepHeadsAlign) {
        run_align();
        tid = aligned_variable();
      } else {
        ad::Param* head = nullptr;
        switch (cat) {
          case Category::U: head = h_.head_unary; break;
          case Category::B: head = h_.head_binary; break;
          case Category::V: head = h_.head_variable; break;
          case Category::S: head = h_.head_scope; break;
        }
        Mat scores = t.value(t.matvec(t.leaf(head), base));
        std::vector<int> allowed;
        if (cat == Category::V) {
          for (int l = 0; l < corpus::kVariableLetters; ++l) allowed.push_back(l);
        } else if (cat == Category::S) {
          allowed = {vocabs_.scope.id(")"), vocabs_.scope.id("not(")};
        } else {
          const int n_tokens = cat == Category::U ? vu : vb;
          for (int i = 0; i < n_tokens; ++i) allowed.push_back(i);
        }
        tid = masked_argmax(scores, allowed);
        if (alignment(cfg_.variant)) projs.push_back(t.matvec(t.leaf(h_.align_proj), h_d));
      }
    } else {
      Var h_for_head = h_d;
      if (cfg_.variant == Variant::VanillaAlign) h_for_head = run_align();
      Mat scores = t.value(t.matvec(t.leaf(h_.head_merged), head_input(h_for_head)));
      std::vector<int> allowed;
      if (pending_vars > 0) {
        for (int l = 0; l < corpus::kVariableLetters; ++l)
          allowed.push_back(merged_id(Category::V, l));
      } else {
        for (int i = 0; i < vu; ++i) allowed.push_back(merged_id(Category::U, i));
        for (int i = 0; i < vb; ++i) allowed.push_back(merged_id(Category::B, i));
        allowed.push_back(merged_id(Category::S, vocabs_.scope.id(")")));
        allowed.push_back(merged_id(Category::S, vocabs_.scope.id("not(")));
      }
      std::tie(cat, tid) = split_merged(masked_argmax(scores, allowed));
      if (cat == Category::V && cfg_.variant == Variant::VanillaAlign)
        tid = aligned_variable();
    }

    std::string token;
    switch (cat) {
      case Category::U: token = vocabs_.unary.tokens[static_cast<std::size_t>(tid)]; break;
      case Category::B: token = vocabs_.binary.tokens[static_cast<std::size_t>(tid)]; break;
      case Category::V: token = vocabs_.variable.tokens[static_cast<std::size_t>(tid)]; break;
      case Category::S: token = vocabs_.scope.tokens[static_cast<std::size_t>(tid)]; break;
    }
    out.tokens.push_back(token);
    out.categories.push_back(cat);
    emitted_var_at.push_back(cat == Category::V ? tid : -1);

    if (cat == Category::U) pending_vars = 1;
    else if (cat == Category::B) pending_vars = 2;
    else if (cat == Category::V) {
      --pending_vars;
      used_letters.insert(tid);
    } else {
      depth += (token == ")") ? -1 : 1;
    }

    dec_states.push_back(h_d);
    prev_cat = cat;
    prev_id = tid;
    if (depth == 0) break;
  }

  out.unclosed = depth != 0;
  out.align = lin::alignment_targets(out);
  return out;
}

void Model::save(const std::string& path) const {
  nlohmann::json meta;
  meta["config"] = cfg_.to_kv();
  meta["vocab_digest"] = vocabs_.digest();
  meta["vocabs"] = vocabs_.serialize();
  ad::save_checkpoint(path, store_, meta.dump());
}

Model Model::load(const std::string& path, const corpus::Vocabs& vocabs) {
  ad::ParamStore store;
  const std::string meta_text = ad::load_checkpoint(path, store);
  const nlohmann::json meta = nlohmann::json::parse(meta_text);
  std::map<std::string, std::string> kv =
      meta.at("config").get<std::map<std::string, std::string>>();
  const std::string digest = meta.at("vocab_digest").get<std::string>();
  if (digest != vocabs.digest())
    throw std::runtime_error("vocabulary digest mismatch: checkpoint " + digest +
                             " vs supplied " + vocabs.digest());
  Model m(ModelConfig::from_kv(kv), vocabs);
  m.store_ = std::move(store);
  m.bind_handles();
  return m;
}

Model Model::load(const std::string& path) {
  ad::ParamStore store;
  const std::string meta_text = ad::load_checkpoint(path, store);
  const nlohmann::json meta = nlohmann::json::parse(meta_text);
  return load(path, corpus::Vocabs::deserialize(meta.at("vocabs").get<std::string>()));
}

}  // namespace nl2fol::model
