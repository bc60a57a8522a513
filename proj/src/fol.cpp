#include "nl2fol/fol.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace nl2fol::fol {

namespace {

FormulaPtr node(Formula&& f) { return std::make_shared<const Formula>(std::move(f)); }

}  // namespace

FormulaPtr make_top(long id, FormulaPtr body) {
  Formula f;
  f.kind = Kind::TopLevel;
  f.top_id = id;
  f.a = std::move(body);
  return node(std::move(f));
}

FormulaPtr make_exists(VarId v, FormulaPtr body) {
  Formula f;
  f.kind = Kind::Exists;
  f.var = v;
  f.a = std::move(body);
  return node(std::move(f));
}

FormulaPtr make_forall(VarId v, FormulaPtr body) {
  Formula f;
  f.kind = Kind::ForAll;
  f.var = v;
  f.a = std::move(body);
  return node(std::move(f));
}

FormulaPtr make_and(FormulaPtr l, FormulaPtr r) {
  Formula f;
  f.kind = Kind::And;
  f.a = std::move(l);
  f.b = std::move(r);
  return node(std::move(f));
}

FormulaPtr make_not(FormulaPtr body) {
  Formula f;
  f.kind = Kind::Not;
  f.a = std::move(body);
  return node(std::move(f));
}

FormulaPtr make_pred(std::string name, std::vector<VarId> args) {
  Formula f;
  f.kind = Kind::Pred;
  f.name = std::move(name);
  f.args = std::move(args);
  return node(std::move(f));
}

FormulaPtr make_empty() {
  Formula f;
  f.kind = Kind::Empty;
  return node(std::move(f));
}

FormulaPtr and_chain(std::vector<FormulaPtr> conjuncts) {
  if (conjuncts.empty()) return make_empty();
  FormulaPtr out = conjuncts.back();
  for (std::size_t i = conjuncts.size() - 1; i-- > 0;) out = make_and(conjuncts[i], out);
  return out;
}

// ---------------------------------------------------------------------------
// Parser: recursive descent over the term grammar, whitespace-insensitive.
// ---------------------------------------------------------------------------

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  FormulaPtr parse() {
    skip_ws();
    std::string head = ident();
    if (head != "fol") fail("expected 'fol'");
    expect('(');
    long id = integer();
    expect(',');
    FormulaPtr body = term();
    expect(')');
    skip_ws();
    if (pos_ != s_.size()) fail("trailing input after closing ')'");
    return make_top(id, std::move(body));
  }

 private:
  FormulaPtr term() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ < s_.size() && std::isupper(static_cast<unsigned char>(s_[pos_])))
      fail("expected a functor or predicate, found a variable");
    std::string head = ident();
    if (head.empty()) fail("expected a functor or predicate name");
    if (head == "some" || head == "all") {
      expect('(');
      std::string letter = variable();
      VarId v = next_var_++;
      scope_.emplace_back(letter, v);
      expect(',');
      FormulaPtr body = term();
      scope_.pop_back();
      expect(')');
      return head == "some" ? make_exists(v, std::move(body)) : make_forall(v, std::move(body));
    }
    if (head == "and") {
      expect('(');
      FormulaPtr l = term();
      expect(',');
      FormulaPtr r = term();
      expect(')');
      return make_and(std::move(l), std::move(r));
    }
    if (head == "not") {
      expect('(');
      FormulaPtr body = term();
      expect(')');
      return make_not(std::move(body));
    }
    // Predicate application, arity 1 or 2. Names are opaque lowercase atoms.
    for (char c : head)
      if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
        fail_at("invalid predicate name '" + head + "'", start);
    expect('(');
    std::vector<VarId> args;
    args.push_back(resolve(variable_at()));
    skip_ws();
    if (peek() == ',') {
      ++pos_;
      args.push_back(resolve(variable_at()));
    }
    expect(')');
    return make_pred(std::move(head), std::move(args));
  }

  struct LetterAt {
    std::string letter;
    std::size_t offset;
  };

  LetterAt variable_at() {
    skip_ws();
    std::size_t at = pos_;
    return {variable(), at};
  }

  VarId resolve(const LetterAt& v) {
    for (auto it = scope_.rbegin(); it != scope_.rend(); ++it)
      if (it->first == v.letter) return it->second;
    throw UnboundVariableError(v.letter, v.offset);
  }

  std::string variable() {
    skip_ws();
    if (pos_ >= s_.size() || !std::isupper(static_cast<unsigned char>(s_[pos_])))
      fail("expected a variable name [A-Z][0-9]*");
    std::string out(1, s_[pos_++]);
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) out.push_back(s_[pos_++]);
    return out;
  }

  std::string ident() {
    skip_ws();
    std::string out;
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
        out.push_back(c);
        ++pos_;
      } else {
        break;
      }
    }
    if (out.empty()) fail("expected an identifier");
    return out;
  }

  long integer() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ == start) fail("expected an integer");
    return std::stol(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) { throw SyntaxError(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) { throw SyntaxError(msg, at); }

  const std::string& s_;
  std::size_t pos_ = 0;
  VarId next_var_ = 0;
  std::vector<std::pair<std::string, VarId>> scope_;
};

}  // namespace

FormulaPtr parse_fol(const std::string& text) { return Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

std::string canonical_var_name(int index) {
  if (index < 26) return std::string(1, static_cast<char>('A' + index));
  return "A" + std::to_string(index - 25);
}

namespace {

void print_rec(const Formula& f, std::unordered_map<VarId, std::string>& names, std::string& out) {
  switch (f.kind) {
    case Kind::TopLevel:
      out += "fol(" + std::to_string(f.top_id) + ",";
      print_rec(*f.a, names, out);
      out += ")";
      break;
    case Kind::Exists:
    case Kind::ForAll: {
      std::string letter = canonical_var_name(static_cast<int>(names.size()));
      names.emplace(f.var, letter);
      out += (f.kind == Kind::Exists ? "some(" : "all(") + letter + ",";
      print_rec(*f.a, names, out);
      out += ")";
      break;
    }
    case Kind::And:
      out += "and(";
      print_rec(*f.a, names, out);
      out += ",";
      print_rec(*f.b, names, out);
      out += ")";
      break;
    case Kind::Not:
      out += "not(";
      print_rec(*f.a, names, out);
      out += ")";
      break;
    case Kind::Pred: {
      out += f.name + "(";
      for (std::size_t i = 0; i < f.args.size(); ++i) {
        if (i) out += ",";
        auto it = names.find(f.args[i]);
        if (it == names.end()) throw std::logic_error("print_fol: unbound variable in " + f.name);
        out += it->second;
      }
      out += ")";
      break;
    }
    case Kind::Empty:
      throw std::logic_error("print_fol: Empty node is not printable");
  }
}

}  // namespace

std::string print_fol(const FormulaPtr& f) {
  if (!f) throw std::logic_error("print_fol: null formula");
  std::string out;
  std::unordered_map<VarId, std::string> names;
  print_rec(*f, names, out);
  return out;
}

FormulaPtr normalize_universal(const FormulaPtr& f) {
  if (!f) return f;
  switch (f->kind) {
    case Kind::ForAll:
      return make_not(make_exists(f->var, make_not(normalize_universal(f->a))));
    case Kind::TopLevel:
      return make_top(f->top_id, normalize_universal(f->a));
    case Kind::Exists:
      return make_exists(f->var, normalize_universal(f->a));
    case Kind::And:
      return make_and(normalize_universal(f->a), normalize_universal(f->b));
    case Kind::Not:
      return make_not(normalize_universal(f->a));
    case Kind::Pred:
    case Kind::Empty:
      return f;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

struct Validator {
  ValidationReport report;
  std::set<VarId> bound;
  std::set<VarId> ever_bound;
  std::map<std::string, std::size_t> arity;

  void add(ValidationIssue::Code code, const std::string& path, const std::string& detail) {
    report.issues.push_back({code, path, detail});
  }

  void walk(const Formula& f, const std::string& path, bool root) {
    switch (f.kind) {
      case Kind::TopLevel: {
        if (!root) add(ValidationIssue::Code::MisplacedTopLevel, path, "nested fol(...) wrapper");
        if (f.a) walk(*f.a, path + "/fol", false);
        break;
      }
      case Kind::Exists:
      case Kind::ForAll: {
        if (f.kind == Kind::ForAll)
          add(ValidationIssue::Code::ResidualForAll, path, "universal quantifier present");
        std::string seg = path + (f.kind == Kind::Exists ? "/some" : "/all");
        if (ever_bound.count(f.var))
          add(ValidationIssue::Code::DuplicateBinder, seg, "binder id " + std::to_string(f.var) + " reused");
        ever_bound.insert(f.var);
        bound.insert(f.var);
        if (f.a) walk(*f.a, seg, false);
        bound.erase(f.var);
        break;
      }
      case Kind::And:
        if (f.a) walk(*f.a, path + "/and.l", false);
        if (f.b) walk(*f.b, path + "/and.r", false);
        break;
      case Kind::Not:
        if (f.a) walk(*f.a, path + "/not", false);
        break;
      case Kind::Pred: {
        std::string seg = path + "/" + f.name;
        if (f.args.empty() || f.args.size() > 2)
          add(ValidationIssue::Code::BadArity, seg, "arity " + std::to_string(f.args.size()));
        auto it = arity.find(f.name);
        if (it == arity.end())
          arity.emplace(f.name, f.args.size());
        else if (it->second != f.args.size())
          add(ValidationIssue::Code::ArityConflict, seg,
              f.name + " used with arity " + std::to_string(it->second) + " and " +
                  std::to_string(f.args.size()));
        for (VarId v : f.args)
          if (!bound.count(v))
            add(ValidationIssue::Code::UnboundVariable, seg, "argument id " + std::to_string(v));
        break;
      }
      case Kind::Empty:
        add(ValidationIssue::Code::EmptyBody, path, "contentless scope");
        break;
    }
  }
};

}  // namespace

ValidationReport validate(const FormulaPtr& f) {
  Validator v;
  if (!f) {
    v.add(ValidationIssue::Code::EmptyBody, "", "null formula");
    return std::move(v.report);
  }
  if (f->kind != Kind::TopLevel)
    v.add(ValidationIssue::Code::MisplacedTopLevel, "", "root is not fol(...)");
  v.walk(*f, "", true);
  return std::move(v.report);
}

// ---------------------------------------------------------------------------
// Alpha-equivalence
// ---------------------------------------------------------------------------

namespace {

bool alpha_rec(const Formula& x, const Formula& y, std::map<VarId, VarId>& xy, std::map<VarId, VarId>& yx) {
  if (x.kind != y.kind) return false;
  switch (x.kind) {
    case Kind::TopLevel:
      return x.top_id == y.top_id && alpha_rec(*x.a, *y.a, xy, yx);
    case Kind::Exists:
    case Kind::ForAll: {
      // Binder ids are unique per formula, so plain insertion is enough.
      xy[x.var] = y.var;
      yx[y.var] = x.var;
      return alpha_rec(*x.a, *y.a, xy, yx);
    }
    case Kind::And:
      return alpha_rec(*x.a, *y.a, xy, yx) && alpha_rec(*x.b, *y.b, xy, yx);
    case Kind::Not:
      return alpha_rec(*x.a, *y.a, xy, yx);
    case Kind::Pred: {
      if (x.name != y.name || x.args.size() != y.args.size()) return false;
      for (std::size_t i = 0; i < x.args.size(); ++i) {
        auto fx = xy.find(x.args[i]);
        auto fy = yx.find(y.args[i]);
        if (fx == xy.end() || fy == yx.end()) return false;
        if (fx->second != y.args[i] || fy->second != x.args[i]) return false;
      }
      return true;
    }
    case Kind::Empty:
      return true;
  }
  return false;
}

}  // namespace

bool alpha_equal(const FormulaPtr& x, const FormulaPtr& y) {
  if (!x || !y) return x == y;
  std::map<VarId, VarId> xy, yx;
  return alpha_rec(*x, *y, xy, yx);
}

}  // namespace nl2fol::fol
