#include "nl2fol/linearize.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <unordered_map>

#include "nl2fol/util.hpp"

namespace nl2fol::lin {

char category_letter(Category c) {
  switch (c) {
    case Category::U: return 'U';
    case Category::B: return 'B';
    case Category::V: return 'V';
    case Category::S: return 'S';
  }
  return '?';
}

Category category_from_letter(char c) {
  switch (c) {
    case 'U': return Category::U;
    case 'B': return Category::B;
    case 'V': return Category::V;
    case 'S': return Category::S;
  }
  throw std::invalid_argument(std::string("unknown category letter: ") + c);
}

std::string TokenSequence::text() const { return join(tokens); }

bool is_scope_token(const std::string& tok) { return tok == "fol(" || tok == "not(" || tok == ")"; }

bool is_variable_token(const std::string& tok) {
  if (tok.empty() || !std::isupper(static_cast<unsigned char>(tok[0]))) return false;
  for (std::size_t i = 1; i < tok.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// linearize
// ---------------------------------------------------------------------------

namespace {

struct Emitter {
  TokenSequence out;
  std::unordered_map<fol::VarId, std::string> letters;

  std::string letter(fol::VarId v) {
    auto it = letters.find(v);
    if (it != letters.end()) return it->second;
    std::string name = fol::canonical_var_name(static_cast<int>(letters.size()));
    letters.emplace(v, name);
    return name;
  }

  void push(std::string tok, Category cat) {
    out.tokens.push_back(std::move(tok));
    out.categories.push_back(cat);
  }

  // Flattens a scope body through Exists and And; collects predicates in
  // left-to-right order and nested Not scopes.
  void collect(const fol::Formula& f, std::vector<const fol::Formula*>& preds,
               std::vector<const fol::Formula*>& scopes) {
    switch (f.kind) {
      case fol::Kind::Exists:
        collect(*f.a, preds, scopes);
        break;
      case fol::Kind::And:
        collect(*f.a, preds, scopes);
        collect(*f.b, preds, scopes);
        break;
      case fol::Kind::Pred:
        preds.push_back(&f);
        break;
      case fol::Kind::Not:
        scopes.push_back(&f);
        break;
      case fol::Kind::Empty:
        break;
      case fol::Kind::ForAll:
        throw std::logic_error("linearize: universal quantifier present; normalize first");
      case fol::Kind::TopLevel:
        throw std::logic_error("linearize: nested fol(...) wrapper");
    }
  }

  void scope(const fol::Formula& body, const std::string& opener) {
    push(opener, Category::S);
    std::vector<const fol::Formula*> preds, scopes;
    collect(body, preds, scopes);
    // Binder letters follow first-occurrence order in the emitted sequence,
    // so assign them as predicates are emitted, unaries first.
    for (const auto* p : preds)
      if (p->args.size() == 1) {
        push(p->name, Category::U);
        push(letter(p->args[0]), Category::V);
      }
    for (const auto* p : preds)
      if (p->args.size() == 2) {
        push(p->name, Category::B);
        push(letter(p->args[0]), Category::V);
        push(letter(p->args[1]), Category::V);
      }
    for (const auto* s : scopes) scope(*s->a, "not(");
    push(")", Category::S);
  }
};

}  // namespace

TokenSequence linearize(const fol::FormulaPtr& f, std::size_t max_len) {
  if (!f || f->kind != fol::Kind::TopLevel)
    throw std::logic_error("linearize: expected a fol(...) wrapper at the root");
  Emitter em;
  em.scope(*f->a, "fol(");
  if (max_len > 0 && em.out.tokens.size() > max_len)
    throw CapacityExceeded(em.out.tokens.size(), max_len);
  em.out.align = alignment_targets(em.out);
  return std::move(em.out);
}

// ---------------------------------------------------------------------------
// delinearize
// ---------------------------------------------------------------------------

namespace {

struct ScopeNode {
  int parent = -1;
  // items in emission order: either a predicate or a child scope
  struct Item {
    bool is_scope;
    int scope_index = -1;
    std::string pred;
    std::vector<std::string> vars;
  };
  std::vector<Item> items;
  int depth = 0;
};

}  // namespace

fol::FormulaPtr delinearize(const TokenSequence& ts) {
  const auto& toks = ts.tokens;
  if (toks.empty()) throw MalformedSequence("empty sequence");
  if (toks[0] != "fol(") throw MalformedSequence("sequence must start with fol(");

  std::vector<ScopeNode> scopes;
  scopes.push_back({});
  int current = 0;
  std::size_t i = 1;
  bool closed = false;

  // first pass: scope tree + predicate/variable grouping
  while (i < toks.size()) {
    if (closed) throw MalformedSequence("tokens after top-level scope closed");
    const std::string& t = toks[i];
    if (t == "fol(") throw MalformedSequence("fol( inside the sequence");
    if (t == "not(") {
      ScopeNode child;
      child.parent = current;
      child.depth = scopes[current].depth + 1;
      scopes.push_back(child);
      int idx = static_cast<int>(scopes.size()) - 1;
      ScopeNode::Item item;
      item.is_scope = true;
      item.scope_index = idx;
      scopes[current].items.push_back(std::move(item));
      current = idx;
      ++i;
      continue;
    }
    if (t == ")") {
      if (scopes[current].parent < 0)
        closed = true;
      else
        current = scopes[current].parent;
      ++i;
      continue;
    }
    if (is_variable_token(t)) throw MalformedSequence("variable token in non-argument position: " + t);
    // predicate; consume 1 or 2 variable tokens
    ScopeNode::Item item;
    item.is_scope = false;
    item.pred = t;
    ++i;
    while (i < toks.size() && is_variable_token(toks[i]) && item.vars.size() < 2) {
      item.vars.push_back(toks[i]);
      ++i;
    }
    if (item.vars.empty()) throw MalformedSequence("predicate without argument variable: " + item.pred);
    if (i < toks.size() && is_variable_token(toks[i]))
      throw MalformedSequence("more than two argument variables after " + item.pred);
    scopes[current].items.push_back(std::move(item));
  }
  if (!closed) throw MalformedSequence("unbalanced scopes: sequence did not close");

  // innermost scope covering all occurrences of each variable (LCA walk)
  auto ancestor_at = [&](int scope, int depth) {
    while (scopes[scope].depth > depth) scope = scopes[scope].parent;
    return scope;
  };
  auto lca = [&](int a, int b) {
    int d = std::min(scopes[a].depth, scopes[b].depth);
    a = ancestor_at(a, d);
    b = ancestor_at(b, d);
    while (a != b) {
      a = scopes[a].parent;
      b = scopes[b].parent;
    }
    return a;
  };

  std::vector<std::string> var_order;  // first-occurrence order across the sequence
  std::map<std::string, int> var_home;
  for (std::size_t s = 0; s < scopes.size(); ++s)
    for (const auto& item : scopes[s].items)
      for (const auto& v : item.vars) {
        auto it = var_home.find(v);
        if (it == var_home.end()) {
          var_home.emplace(v, static_cast<int>(s));
          var_order.push_back(v);
        } else {
          it->second = lca(it->second, static_cast<int>(s));
        }
      }

  std::map<std::string, fol::VarId> ids;
  fol::VarId next_id = 0;
  for (const auto& v : var_order) ids.emplace(v, next_id++);

  // second pass: rebuild the tree bottom-up
  auto build = [&](auto&& self, int sidx) -> fol::FormulaPtr {
    const ScopeNode& sc = scopes[sidx];
    std::vector<fol::FormulaPtr> conjuncts;
    for (const auto& item : sc.items) {
      if (item.is_scope) {
        conjuncts.push_back(fol::make_not(self(self, item.scope_index)));
      } else {
        std::vector<fol::VarId> args;
        for (const auto& v : item.vars) args.push_back(ids.at(v));
        conjuncts.push_back(fol::make_pred(item.pred, std::move(args)));
      }
    }
    fol::FormulaPtr body = fol::and_chain(std::move(conjuncts));
    // bind, innermost-first in reverse first-occurrence order so the
    // outermost wrapper is the earliest variable
    for (auto it = var_order.rbegin(); it != var_order.rend(); ++it)
      if (var_home.at(*it) == sidx) body = fol::make_exists(ids.at(*it), body);
    return body;
  };

  return fol::make_top(1, build(build, 0));
}

TokenSequence sequence_from_text(const std::string& mapping) {
  TokenSequence ts;
  ts.tokens = split_ws(mapping);
  ts.categories.reserve(ts.tokens.size());
  for (std::size_t i = 0; i < ts.tokens.size(); ++i) {
    const std::string& t = ts.tokens[i];
    if (is_scope_token(t)) {
      ts.categories.push_back(Category::S);
    } else if (is_variable_token(t)) {
      ts.categories.push_back(Category::V);
    } else {
      std::size_t nvars = 0;
      while (i + 1 + nvars < ts.tokens.size() && is_variable_token(ts.tokens[i + 1 + nvars])) ++nvars;
      if (nvars == 1)
        ts.categories.push_back(Category::U);
      else if (nvars == 2)
        ts.categories.push_back(Category::B);
      else
        throw MalformedSequence("predicate " + t + " followed by " + std::to_string(nvars) +
                                " variables");
    }
  }
  ts.align = alignment_targets(ts);
  return ts;
}

std::vector<AlignTarget> alignment_targets(const TokenSequence& ts, AnchorMode mode) {
  std::vector<AlignTarget> out(ts.tokens.size());
  std::map<std::string, int> anchor;  // variable -> anchor position
  for (std::size_t i = 0; i < ts.tokens.size(); ++i) {
    if (ts.categories[i] != Category::V) continue;
    const std::string& v = ts.tokens[i];
    auto it = anchor.find(v);
    if (it == anchor.end()) {
      anchor.emplace(v, static_cast<int>(i));
    } else {
      out[i] = {true, it->second};
      if (mode == AnchorMode::MostRecent) it->second = static_cast<int>(i);
    }
  }
  return out;
}

}  // namespace nl2fol::lin
