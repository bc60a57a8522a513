#ifndef NL2FOL_FOL_HPP
#define NL2FOL_FOL_HPP

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// Boxer-style first-order logic terms, restricted to the existential/
// conjunctive fragment with negation:
//
//   fol(<int>, body)
//   body := some(V, body) | all(V, body) | and(body, body) | not(body)
//         | pred(V) | pred(V, V)
//
// `all` is accepted on input only and eliminated by normalize_universal
// (forall A phi  =>  not(some(A, not(phi)))).
//
// Variables are identified by binder, not by surface letter: the parser
// assigns each binder site a fresh VarId and resolves arguments to the
// innermost enclosing binder.  Printing re-derives canonical letters
// (A, B, ... Z, A1, A2, ...) in first-binder order, so two alpha-equivalent
// formulas print identically.

namespace nl2fol::fol {

using VarId = int;

enum class Kind { TopLevel, Exists, ForAll, And, Not, Pred, Empty };

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  Kind kind;
  long top_id = 0;              // TopLevel only
  VarId var = -1;               // Exists/ForAll binder
  std::string name;             // Pred only
  std::vector<VarId> args;      // Pred only, arity 1 or 2
  FormulaPtr a;                 // body (TopLevel/Exists/ForAll/Not) or left conjunct
  FormulaPtr b;                 // right conjunct (And)
};

FormulaPtr make_top(long id, FormulaPtr body);
FormulaPtr make_exists(VarId v, FormulaPtr body);
FormulaPtr make_forall(VarId v, FormulaPtr body);
FormulaPtr make_and(FormulaPtr l, FormulaPtr r);
FormulaPtr make_not(FormulaPtr body);
FormulaPtr make_pred(std::string name, std::vector<VarId> args);
// Placeholder body of a contentless scope; produced only when delinearizing
// degenerate sequences like "fol( )".  Not printable, not in the grammar.
FormulaPtr make_empty();

// Right-associative conjunction of one or more conjuncts.
FormulaPtr and_chain(std::vector<FormulaPtr> conjuncts);

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnboundVariableError : public std::runtime_error {
 public:
  UnboundVariableError(const std::string& var, std::size_t offset)
      : std::runtime_error("unbound variable " + var + " (at byte " + std::to_string(offset) + ")"),
        var_(var) {}
  const std::string& variable() const { return var_; }

 private:
  std::string var_;
};

FormulaPtr parse_fol(const std::string& text);

// Canonical printer; inverse of parse_fol up to alpha-equivalence.
// Precondition: every Pred argument is bound and no Empty node is present
// (violations raise std::logic_error).
std::string print_fol(const FormulaPtr& f);

// forall A phi => not(some(A, not(phi))), recursively; idempotent.
FormulaPtr normalize_universal(const FormulaPtr& f);

struct ValidationIssue {
  enum class Code {
    UnboundVariable,
    DuplicateBinder,
    ArityConflict,
    BadArity,
    ResidualForAll,
    MisplacedTopLevel,
    EmptyBody,
  };
  Code code;
  std::string path;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

ValidationReport validate(const FormulaPtr& f);

// Structural equality up to a consistent renaming of bound variables.
bool alpha_equal(const FormulaPtr& x, const FormulaPtr& y);

// Canonical letter for the n-th binder (0 -> A, 25 -> Z, 26 -> A1, ...).
std::string canonical_var_name(int index);

}  // namespace nl2fol::fol

#endif  // NL2FOL_FOL_HPP
