#include "nl2fol/corpus.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "nl2fol/fol.hpp"

namespace nl2fol::corpus {

// ---------------------------------------------------------------------------
// vocabularies
// ---------------------------------------------------------------------------

namespace {

Vocab open_vocab() {
  Vocab v;
  v.has_unk = true;
  v.add(kUnk);
  return v;
}

Vocab variable_vocab() {
  Vocab v;
  for (int i = 0; i < kVariableLetters; ++i) v.add(std::string(1, static_cast<char>('A' + i)));
  v.add(kNewVar);
  return v;
}

Vocab scope_vocab() {
  Vocab v;
  v.add("fol(");
  v.add(")");
  v.add("not(");
  return v;
}

Vocab category_vocab() {
  Vocab v;
  v.add("U");
  v.add("B");
  v.add("V");
  v.add("S");
  v.add(kStart);
  return v;
}

void write_section(std::ostringstream& out, const char* name, const Vocab& v) {
  out << "# " << name << "\n";
  for (const auto& t : v.tokens) out << t << "\n";
  out << "\n";
}

}  // namespace

std::string Vocabs::serialize() const {
  std::ostringstream out;
  write_section(out, "input", input);
  write_section(out, "unary", unary);
  write_section(out, "binary", binary);
  write_section(out, "variable", variable);
  write_section(out, "scope", scope);
  write_section(out, "category", category);
  return out.str();
}

Vocabs Vocabs::deserialize(const std::string& text) {
  Vocabs v;
  std::map<std::string, Vocab*> sections = {
      {"input", &v.input},     {"unary", &v.unary}, {"binary", &v.binary},
      {"variable", &v.variable}, {"scope", &v.scope}, {"category", &v.category}};
  std::istringstream in(text);
  std::string line;
  Vocab* cur = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      auto it = sections.find(line.substr(2));
      if (it == sections.end()) throw std::runtime_error("unknown vocabulary section: " + line);
      cur = it->second;
      continue;
    }
    if (!cur) throw std::runtime_error("vocabulary token before any section header");
    if (line == kUnk) cur->has_unk = true;
    cur->add(line);
  }
  return v;
}

std::string Vocabs::digest() const { return sha256_hex(serialize()); }

Vocabs build_vocabs(const std::vector<RawExample>& corpus, int min_freq) {
  if (corpus.empty()) throw EmptyCorpus("build_vocabs: empty corpus");
  Vocabs v;
  v.variable = variable_vocab();
  v.scope = scope_vocab();
  v.category = category_vocab();
  v.unary = open_vocab();
  v.binary = open_vocab();
  v.input = open_vocab();

  std::map<std::string, int> freq;
  std::vector<std::string> order;
  for (const auto& ex : corpus) {
    for (const auto& tok : tokenize_sentence(ex.sentence)) {
      if (++freq[tok] == 1) order.push_back(tok);
    }
    auto f = fol::normalize_universal(fol::parse_fol(ex.fol));
    auto ts = lin::linearize(f);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (ts.categories[i] == lin::Category::U) v.unary.add(ts.tokens[i]);
      if (ts.categories[i] == lin::Category::B) v.binary.add(ts.tokens[i]);
    }
  }
  for (const auto& tok : order)
    if (freq[tok] >= min_freq) v.input.add(tok);
  return v;
}

// ---------------------------------------------------------------------------
// encoding
// ---------------------------------------------------------------------------

Example encode_example(const std::string& sentence, const std::string& fol_text, const Vocabs& v) {
  Example e;
  e.sentence = sentence;
  e.tokens = tokenize_sentence(sentence);
  if (e.tokens.size() > kMaxSentenceLen)
    throw lin::CapacityExceeded(e.tokens.size(), kMaxSentenceLen);
  for (const auto& t : e.tokens) e.input_ids.push_back(v.input.id(t));

  auto f = fol::normalize_universal(fol::parse_fol(fol_text));
  e.target = lin::linearize(f, kMaxTargetLen);
  e.target_ids.reserve(e.target.size());
  for (std::size_t i = 0; i < e.target.size(); ++i) {
    const std::string& tok = e.target.tokens[i];
    int id = -1;
    switch (e.target.categories[i]) {
      case lin::Category::U: id = v.unary.id(tok); break;
      case lin::Category::B: id = v.binary.id(tok); break;
      case lin::Category::V: id = v.variable.id(tok); break;
      case lin::Category::S: id = v.scope.id(tok); break;
    }
    if (id < 0) throw std::runtime_error("token outside a closed vocabulary: " + tok);
    e.target_ids.push_back(id);
  }
  return e;
}

Example perturb_variables(const Example& e, const Vocabs& v, Rng& rng) {
  auto perm = rng.permutation(kVariableLetters);
  Example out = e;
  for (std::size_t i = 0; i < out.target.size(); ++i) {
    if (out.target.categories[i] != lin::Category::V) continue;
    const std::string& tok = out.target.tokens[i];
    int idx = v.variable.id(tok);
    if (idx < 0 || idx >= kVariableLetters)
      throw std::runtime_error("perturb_variables: variable outside the letter set: " + tok);
    out.target.tokens[i] = std::string(1, static_cast<char>('A' + perm[idx]));
    out.target_ids[i] = perm[idx];
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kNouns = {
    "man",   "woman", "dog",   "cat",   "bird",  "child", "horse", "car",  "tree",
    "house", "boat",  "fish",  "book",  "ball",  "city",  "cloud", "road", "stone",
    "table", "chair", "flower", "river", "train", "apple", "coat"};
const std::vector<std::string> kAdjs = {"red",   "big",   "small",  "old",   "young",
                                        "happy", "quiet", "bright", "heavy", "cold"};
const std::vector<std::string> kVerbs = {"walk",  "run",  "sleep", "jump",   "swim", "dance",
                                         "sing",  "sit",  "stand", "travel", "smile", "wait"};
const std::vector<std::string> kRels = {"near", "see", "love", "follow", "carry", "greet"};
const std::vector<std::string> kNumbers = {"two", "three", "four"};

enum class Scene {
  Exist, Intrans, Trans, VerbRel, Group, NegRel, Universal, NoExist, Anaphora, Count,
  Chain, TwoClause, NestedNeg
};

struct SceneSpec {
  Scene scene;
  int entities;
  int depth;
  int weight = 1;  // relative draw frequency among eligible scenes
};

const std::vector<SceneSpec> kScenes = {
    {Scene::Exist, 1, 0},    {Scene::Intrans, 2, 0},  {Scene::Trans, 2, 0},
    {Scene::VerbRel, 3, 0},  {Scene::Group, 4, 0},    {Scene::NegRel, 2, 1},
    {Scene::Universal, 2, 2}, {Scene::NoExist, 1, 1}, {Scene::Anaphora, 3, 0},
    {Scene::Count, 3, 0},
    {Scene::Chain, 5, 1, 4}, {Scene::TwoClause, 6, 1, 4}, {Scene::NestedNeg, 5, 2, 2}};

std::string and_str(const std::vector<std::string>& parts) {
  std::string out = parts.back();
  for (auto it = parts.rbegin() + 1; it != parts.rend(); ++it) out = "and(" + *it + "," + out + ")";
  return out;
}

std::string close_some(std::string body, int vars) {
  for (int i = vars - 1; i >= 0; --i)
    body = "some(" + fol::canonical_var_name(i) + "," + std::move(body) + ")";
  return "fol(1," + std::move(body) + ")";
}

struct Pick {
  Rng& rng;
  const std::string& noun() { return kNouns[rng.uniform_int(kNouns.size())]; }
  const std::string& adj() { return kAdjs[rng.uniform_int(kAdjs.size())]; }
  const std::string& verb() { return kVerbs[rng.uniform_int(kVerbs.size())]; }
  const std::string& rel() { return kRels[rng.uniform_int(kRels.size())]; }
};

// noun-named entities introduced so far; "the <noun>" refers back to one
struct EntityReg {
  std::vector<std::pair<std::string, std::string>> items;  // noun, variable

  bool has(const std::string& noun) const {
    for (const auto& [n, v] : items)
      if (n == noun) return true;
    return false;
  }
};

// a noun not yet in the registry, so every "the <noun>" is unambiguous
std::string fresh_noun(Pick& pick, const EntityReg& reg) {
  for (int i = 0; i < 8; ++i) {
    std::string n = pick.noun();
    if (!reg.has(n)) return n;
  }
  return pick.noun();
}

// attaches one predicate to `subj`, returning the surface fragment ("will
// walk", "is near a dog", "is not love the dog"). Relation objects are fresh
// entities or, sometimes, references back to a registered one.
std::string attach_pred(Pick& pick, Rng& rng, const std::string& subj, int& vars,
                        std::vector<std::string>& conj, EntityReg& reg) {
  switch (rng.uniform_int(3)) {
    case 0: {
      std::string w = pick.verb();
      const std::string fresh = fol::canonical_var_name(vars++);
      conj.push_back("v1" + w + "(" + fresh + ")");
      conj.push_back("r1agent(" + fresh + "," + subj + ")");
      return "will " + w;
    }
    default: {
      bool neg = rng.uniform_int(3) == 2;
      std::string r = pick.rel();
      std::string obj_var, obj_surface;
      std::vector<std::pair<std::string, std::string>> back;
      for (const auto& e : reg.items)
        if (e.second != subj) back.push_back(e);
      if (!back.empty() && rng.bernoulli(0.4)) {
        const auto& [noun, var] = back[rng.uniform_int(back.size())];
        obj_var = var;
        obj_surface = "the " + noun;
      } else {
        std::string n = fresh_noun(pick, reg);
        obj_var = fol::canonical_var_name(vars++);
        conj.push_back("n1" + n + "(" + obj_var + ")");
        reg.items.emplace_back(n, obj_var);
        obj_surface = "a " + n;
      }
      std::string body = "r1" + r + "(" + subj + "," + obj_var + ")";
      if (neg) body = "not(" + body + ")";
      conj.push_back(std::move(body));
      return std::string("is ") + (neg ? "not " : "") + r + " " + obj_surface;
    }
  }
}

RawExample build_scene(Scene scene, Rng& rng) {
  Pick pick{rng};
  switch (scene) {
    case Scene::Exist: {
      std::string n = pick.noun();
      if (rng.bernoulli(0.4)) {
        std::string a = pick.adj();
        return {"a " + a + " " + n + " is present",
                close_some(and_str({"n1" + n + "(A)", "a1" + a + "(A)"}), 1)};
      }
      return {"a " + n + " is present", close_some("n1" + n + "(A)", 1)};
    }
    case Scene::Intrans: {
      std::string n = pick.noun(), w = pick.verb();
      if (rng.bernoulli(0.3)) {
        std::string a = pick.adj();
        return {"a " + a + " " + n + " will " + w,
                close_some(and_str({"n1" + n + "(A)", "a1" + a + "(A)", "v1" + w + "(B)",
                                    "r1agent(B,A)"}),
                           2)};
      }
      return {"a " + n + " will " + w,
              close_some(and_str({"n1" + n + "(A)", "v1" + w + "(B)", "r1agent(B,A)"}), 2)};
    }
    case Scene::Trans: {
      std::string n1 = pick.noun(), n2 = pick.noun(), r = pick.rel();
      return {"a " + n1 + " is " + r + " a " + n2,
              close_some(and_str({"n1" + n1 + "(A)", "n1" + n2 + "(B)", "r1" + r + "(A,B)"}), 2)};
    }
    case Scene::VerbRel: {
      std::string n1 = pick.noun(), w = pick.verb(), r = pick.rel(), n2 = pick.noun();
      return {"a " + n1 + " will " + w + " " + r + " a " + n2,
              close_some(and_str({"n1" + n1 + "(A)", "v1" + w + "(B)", "r1agent(B,A)",
                                  "n1" + n2 + "(C)", "r1" + r + "(A,C)"}),
                         3)};
    }
    case Scene::Group: {
      std::string n1 = pick.noun(), n2 = pick.noun(), w = pick.verb();
      return {"a " + n1 + " and a " + n2 + " will " + w,
              close_some(and_str({"n1" + n1 + "(A)", "n1" + n2 + "(B)", "r1subset_of(A,C)",
                                  "r1subset_of(B,C)", "v1" + w + "(D)", "r1agent(D,C)"}),
                         4)};
    }
    case Scene::NegRel: {
      std::string n1 = pick.noun(), n2 = pick.noun(), r = pick.rel();
      return {"a " + n1 + " is not " + r + " a " + n2,
              close_some(and_str({"n1" + n1 + "(A)", "n1" + n2 + "(B)",
                                  "not(r1" + r + "(A,B))"}),
                         2)};
    }
    case Scene::Universal: {
      std::string n = pick.noun(), w = pick.verb();
      return {"every " + n + " will " + w,
              "fol(1,all(A,some(B," +
                  and_str({"n1" + n + "(A)", "v1" + w + "(B)", "r1agent(B,A)"}) + ")))"};
    }
    case Scene::NoExist: {
      std::string n = pick.noun();
      return {"there is no " + n, "fol(1,not(some(A,n1" + n + "(A))))"};
    }
    case Scene::Anaphora: {
      std::string n = pick.noun(), w1 = pick.verb(), w2 = pick.verb();
      return {"a " + n + " will " + w1 + " and " + w2,
              close_some(and_str({"n1" + n + "(A)", "v1" + w1 + "(B)", "r1agent(B,A)",
                                  "v1" + w2 + "(C)", "r1agent(C,A)"}),
                         3)};
    }
    case Scene::Count: {
      std::string n = pick.noun(), w = pick.verb();
      const std::string& num = kNumbers[rng.uniform_int(kNumbers.size())];
      return {num + " " + n + " will " + w,
              close_some(and_str({"n1" + n + "(A)", "v1" + w + "(B)", "r1agent(B,A)",
                                  "r1card(A,C)", "c1" + num + "(C)"}),
                         3)};
    }
    case Scene::Chain: {
      std::string n = pick.noun();
      int vars = 1;
      std::vector<std::string> conj = {"n1" + n + "(A)"};
      EntityReg reg;
      reg.items.emplace_back(n, "A");
      std::string subj_surface = "a " + n;
      if (rng.bernoulli(0.4)) {
        std::string a = pick.adj();
        conj.push_back("a1" + a + "(A)");
        subj_surface = "a " + a + " " + n;
      }
      int k = 2 + static_cast<int>(rng.bernoulli(0.5));
      std::vector<std::string> parts;
      for (int i = 0; i < k; ++i) parts.push_back(attach_pred(pick, rng, "A", vars, conj, reg));
      std::string sent = subj_surface + " " + parts[0];
      for (int i = 1; i + 1 < k; ++i) sent += " , " + parts[i];
      sent += " and " + parts[k - 1];
      return {sent, close_some(and_str(conj), vars)};
    }
    case Scene::TwoClause: {
      std::string n1 = pick.noun();
      int vars = 1;
      std::vector<std::string> conj = {"n1" + n1 + "(A)"};
      EntityReg reg;
      reg.items.emplace_back(n1, "A");
      std::string sent = "a " + n1 + " " + attach_pred(pick, rng, "A", vars, conj, reg);
      if (rng.bernoulli(0.5) && !reg.items.empty()) {
        // "the <noun>" picks up any entity from the first clause
        auto [noun, var] = reg.items[rng.uniform_int(reg.items.size())];
        sent += " and the " + noun + " " + attach_pred(pick, rng, var, vars, conj, reg);
      } else {
        std::string n2 = fresh_noun(pick, reg);
        const std::string subj = fol::canonical_var_name(vars++);
        conj.push_back("n1" + n2 + "(" + subj + ")");
        reg.items.emplace_back(n2, subj);
        sent += " and a " + n2 + " " + attach_pred(pick, rng, subj, vars, conj, reg);
      }
      return {sent, close_some(and_str(conj), vars)};
    }
    case Scene::NestedNeg: {
      std::string n1 = pick.noun(), n2 = pick.noun(), r = pick.rel();
      bool inner = rng.bernoulli(0.4);
      std::string rel = "r1" + r + "(A,B)";
      if (inner) rel = "not(" + rel + ")";
      std::string body =
          "some(A,some(B," + and_str({"n1" + n1 + "(A)", "n1" + n2 + "(B)", rel}) + "))";
      return {"it is not true that a " + n1 + " is " + (inner ? "not " : "") + r + " a " + n2,
              "fol(1,not(" + body + "))"};
    }
  }
  throw std::logic_error("unreachable scene");
}

}  // namespace

std::vector<RawExample> synth_corpus(Rng& rng, std::size_t count, const GeneratorProfile& profile) {
  std::vector<SceneSpec> eligible;
  for (const auto& s : kScenes)
    if (s.entities <= profile.max_entities && s.depth <= profile.max_negation_depth)
      for (int i = 0; i < s.weight; ++i) eligible.push_back(s);
  if (eligible.empty()) throw std::runtime_error("synth_corpus: profile excludes every scene");

  std::vector<RawExample> out;
  std::unordered_map<std::string, bool> seen;
  std::size_t attempts = 0, limit = count * 200 + 1000;
  while (out.size() < count && attempts < limit) {
    ++attempts;
    Scene scene = eligible[rng.uniform_int(eligible.size())].scene;
    RawExample ex = build_scene(scene, rng);
    if (seen.count(ex.sentence)) continue;
    auto f = fol::normalize_universal(fol::parse_fol(ex.fol));
    if (!fol::validate(f).ok()) throw std::logic_error("synth_corpus: invalid scene " + ex.fol);
    if (lin::linearize(f).size() > profile.max_target_len) continue;
    seen.emplace(ex.sentence, true);
    out.push_back(std::move(ex));
  }
  if (out.size() < count)
    throw std::runtime_error("synth_corpus: sentence space exhausted at " +
                             std::to_string(out.size()) + " items");
  return out;
}

Splits split_corpus(std::vector<RawExample> items, Rng& rng, double dev_frac, double test_frac) {
  rng.shuffle(items);
  std::size_t n = items.size();
  std::size_t n_dev = static_cast<std::size_t>(n * dev_frac);
  std::size_t n_test = static_cast<std::size_t>(n * test_frac);
  Splits s;
  s.dev.assign(items.begin(), items.begin() + n_dev);
  s.test.assign(items.begin() + n_dev, items.begin() + n_dev + n_test);
  s.train.assign(items.begin() + n_dev + n_test, items.end());
  return s;
}

// ---------------------------------------------------------------------------
// jsonl
// ---------------------------------------------------------------------------

std::vector<RawExample> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<RawExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("sentence") || !j.contains("fol"))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad corpus line");
    out.push_back({j["sentence"].get<std::string>(), j["fol"].get<std::string>()});
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<RawExample>& items) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& ex : items) {
    nlohmann::json j;
    j["sentence"] = ex.sentence;
    j["fol"] = ex.fol;
    out << j.dump() << "\n";
  }
}

}  // namespace nl2fol::corpus
