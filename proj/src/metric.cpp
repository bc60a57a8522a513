#include "nl2fol/metric.hpp"

#include <algorithm>
#include <map>

#include "nl2fol/util.hpp"

namespace nl2fol::metric {

std::size_t PairSet::size() const {
  std::size_t n = var_pairs.size();
  for (const auto& s : scopes) n += s.preds.size() + s.children.size();
  return n;
}

// ---------------------------------------------------------------------------
// decomposition
// ---------------------------------------------------------------------------

namespace {

struct Decomposer {
  PairSet ps;
  std::map<fol::VarId, int> index;

  int var(fol::VarId v) {
    auto it = index.find(v);
    if (it != index.end()) return it->second;
    int idx = static_cast<int>(ps.vars.size());
    ps.vars.push_back(v);
    index.emplace(v, idx);
    return idx;
  }

  void walk(const fol::Formula& f, int scope) {
    switch (f.kind) {
      case fol::Kind::Exists:
        walk(*f.a, scope);
        return;
      case fol::Kind::And:
        walk(*f.a, scope);
        walk(*f.b, scope);
        return;
      case fol::Kind::Pred: {
        ps.scopes[scope].preds.push_back(f.name);
        for (std::size_t k = 0; k < f.args.size(); ++k)
          ps.var_pairs.push_back({f.name, var(f.args[k]), static_cast<int>(k) + 1});
        return;
      }
      case fol::Kind::Not: {
        int child = static_cast<int>(ps.scopes.size());
        ps.scopes.push_back({scope, {}, {}});
        ps.scopes[scope].children.push_back(child);
        walk(*f.a, child);
        return;
      }
      case fol::Kind::Empty:
        return;
      case fol::Kind::ForAll:
        throw std::logic_error("decompose_pairs: universal quantifier; normalize first");
      case fol::Kind::TopLevel:
        throw std::logic_error("decompose_pairs: nested fol(...) wrapper");
    }
  }
};

}  // namespace

PairSet decompose_pairs(const fol::FormulaPtr& f) {
  if (!f || f->kind != fol::Kind::TopLevel)
    throw std::logic_error("decompose_pairs: expected a fol(...) wrapper at the root");
  Decomposer d;
  d.ps.scopes.push_back({-1, {}, {}});
  d.walk(*f->a, 0);
  return std::move(d.ps);
}

// ---------------------------------------------------------------------------
// variable part: per-variable signature overlaps
// ---------------------------------------------------------------------------

namespace {

using Sig = std::vector<std::pair<std::string, int>>;

std::vector<Sig> signatures(const PairSet& ps) {
  std::vector<Sig> sig(ps.vars.size());
  for (const auto& vp : ps.var_pairs) sig[vp.var].emplace_back(vp.pred, vp.pos);
  for (auto& s : sig) std::sort(s.begin(), s.end());
  return sig;
}

int overlap(const Sig& a, const Sig& b) {
  int m = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j])
      ++i;
    else if (b[j] < a[i])
      ++j;
    else {
      ++m;
      ++i;
      ++j;
    }
  }
  return m;
}

// W[i][j] = gold pairs of gold-var i matched by pred pairs of pred-var j.
// Injective images keep the per-variable contributions disjoint, so the
// total matched variable pairs under a map is just the sum of its entries.
std::vector<std::vector<int>> weights(const PairSet& gold, const PairSet& pred) {
  auto sg = signatures(gold);
  auto sp = signatures(pred);
  std::vector<std::vector<int>> w(sg.size(), std::vector<int>(sp.size(), 0));
  for (std::size_t i = 0; i < sg.size(); ++i)
    for (std::size_t j = 0; j < sp.size(); ++j) w[i][j] = overlap(sg[i], sp[j]);
  return w;
}

long map_total(const std::vector<std::vector<int>>& w, const std::vector<int>& vm) {
  long t = 0;
  for (std::size_t i = 0; i < vm.size(); ++i)
    if (vm[i] >= 0) t += w[i][vm[i]];
  return t;
}

// ---------------------------------------------------------------------------
// scope part: exact recursive child matching (root anchored to root)
// ---------------------------------------------------------------------------

struct ScopeAligner {
  const PairSet& g;
  const PairSet& p;
  std::vector<std::vector<int>> val;
  std::vector<std::vector<std::vector<std::pair<int, int>>>> pick;

  ScopeAligner(const PairSet& gold, const PairSet& pred) : g(gold), p(pred) {
    val.assign(g.scopes.size(), std::vector<int>(p.scopes.size(), -1));
    pick.assign(g.scopes.size(), std::vector<std::vector<std::pair<int, int>>>(p.scopes.size()));
  }

  static int pred_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, int> cnt;
    for (const auto& s : a) ++cnt[s];
    int m = 0;
    for (const auto& s : b) {
      auto it = cnt.find(s);
      if (it != cnt.end() && it->second > 0) {
        --it->second;
        ++m;
      }
    }
    return m;
  }

  int value(int i, int j) {
    if (val[i][j] >= 0) return val[i][j];
    const auto& cg = g.scopes[i].children;
    const auto& cp = p.scopes[j].children;
    for (int a : cg)
      for (int b : cp) value(a, b);
    int best = 0;
    std::vector<std::pair<int, int>> best_pairs, cur;
    std::vector<bool> used(cp.size(), false);
    search(cg, cp, 0, used, 0, cur, best, best_pairs);
    val[i][j] = pred_overlap(g.scopes[i].preds, p.scopes[j].preds) + best;
    pick[i][j] = std::move(best_pairs);
    return val[i][j];
  }

  // each aligned child earns its nesting pair plus whatever matches inside
  void search(const std::vector<int>& cg, const std::vector<int>& cp, std::size_t k,
              std::vector<bool>& used, int acc, std::vector<std::pair<int, int>>& cur, int& best,
              std::vector<std::pair<int, int>>& best_pairs) {
    if (k == cg.size()) {
      if (acc > best) {
        best = acc;
        best_pairs = cur;
      }
      return;
    }
    search(cg, cp, k + 1, used, acc, cur, best, best_pairs);
    for (std::size_t j = 0; j < cp.size(); ++j) {
      if (used[j]) continue;
      used[j] = true;
      cur.emplace_back(cg[k], cp[j]);
      search(cg, cp, k + 1, used, acc + 1 + val[cg[k]][cp[j]], cur, best, best_pairs);
      cur.pop_back();
      used[j] = false;
    }
  }

  void extract(int i, int j, std::vector<int>& scope_map) {
    scope_map[i] = j;
    for (auto [a, b] : pick[i][j]) extract(a, b, scope_map);
  }
};

AlignResult finish(const PairSet& gold, const PairSet& pred, std::vector<int> vm, long var_total) {
  ScopeAligner sa(gold, pred);
  int scope_total = sa.value(0, 0);
  AlignResult out;
  out.alignment.var_map = std::move(vm);
  out.alignment.scope_map.assign(gold.scopes.size(), -1);
  sa.extract(0, 0, out.alignment.scope_map);
  out.matched = static_cast<std::size_t>(var_total + scope_total);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// aligners
// ---------------------------------------------------------------------------

AlignResult align_greedy(const PairSet& gold, const PairSet& pred, std::uint64_t seed) {
  const std::size_t ng = gold.vars.size(), np = pred.vars.size();
  auto w = weights(gold, pred);

  auto climb = [&](std::vector<int>& vm) -> long {
    std::vector<bool> used(np, false);
    for (int j : vm)
      if (j >= 0) used[j] = true;
    long total = map_total(w, vm);
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t i = 0; i < ng; ++i)
        for (std::size_t j = 0; j < np; ++j) {
          if (used[j]) continue;
          long delta = w[i][j] - (vm[i] >= 0 ? w[i][vm[i]] : 0);
          if (delta > 0) {
            if (vm[i] >= 0) used[vm[i]] = false;
            vm[i] = static_cast<int>(j);
            used[j] = true;
            total += delta;
            improved = true;
          }
        }
      for (std::size_t i1 = 0; i1 + 1 < ng; ++i1)
        for (std::size_t i2 = i1 + 1; i2 < ng; ++i2) {
          int a = vm[i1], b = vm[i2];
          if (a < 0 && b < 0) continue;
          long old_v = (a >= 0 ? w[i1][a] : 0) + (b >= 0 ? w[i2][b] : 0);
          long new_v = (b >= 0 ? w[i1][b] : 0) + (a >= 0 ? w[i2][a] : 0);
          if (new_v > old_v) {
            std::swap(vm[i1], vm[i2]);
            total += new_v - old_v;
            improved = true;
          }
        }
    }
    return total;
  };

  // signature-overlap initialization, ties by larger overlap then binder order
  std::vector<int> vm(ng, -1);
  {
    std::vector<bool> used(np, false);
    for (std::size_t i = 0; i < ng; ++i) {
      int best = -1, bw = 0;
      for (std::size_t j = 0; j < np; ++j)
        if (!used[j] && w[i][j] > bw) {
          bw = w[i][j];
          best = static_cast<int>(j);
        }
      if (best >= 0) {
        vm[i] = best;
        used[best] = true;
      }
    }
  }
  long best_total = climb(vm);
  std::vector<int> best_vm = vm;

  for (std::uint64_t r = 1; r <= 4; ++r) {
    Rng rng = Rng(seed).fork(r);
    std::vector<int> cand(ng, -1);
    auto gperm = rng.permutation(static_cast<int>(ng));
    auto pperm = rng.permutation(static_cast<int>(np));
    for (std::size_t k = 0; k < std::min(ng, np); ++k)
      cand[gperm[k]] = static_cast<int>(pperm[k]);
    long t = climb(cand);
    if (t > best_total) {
      best_total = t;
      best_vm = cand;
    }
  }
  return finish(gold, pred, std::move(best_vm), best_total);
}

AlignResult align_exhaustive(const PairSet& gold, const PairSet& pred) {
  const std::size_t ng = gold.vars.size(), np = pred.vars.size();
  if (ng > 8 || np > 8)
    throw InstanceTooLarge("align_exhaustive: more than 8 variables on one side");
  if (gold.scopes.size() > 4 || pred.scopes.size() > 4)
    throw InstanceTooLarge("align_exhaustive: more than 4 scopes on one side");
  auto w = weights(gold, pred);

  // Matched variable pairs are additive per mapped variable and never
  // negative, so some total injection of the smaller side attains the
  // maximum; enumerate them all.
  std::vector<int> vm(ng, -1), best_vm(ng, -1);
  long best = map_total(w, best_vm);
  if (ng <= np) {
    std::vector<bool> used(np, false);
    auto rec = [&](auto&& self, std::size_t i, long acc) -> void {
      if (i == ng) {
        if (acc > best) {
          best = acc;
          best_vm = vm;
        }
        return;
      }
      for (std::size_t j = 0; j < np; ++j) {
        if (used[j]) continue;
        used[j] = true;
        vm[i] = static_cast<int>(j);
        self(self, i + 1, acc + w[i][j]);
        vm[i] = -1;
        used[j] = false;
      }
    };
    rec(rec, 0, 0);
  } else {
    std::vector<int> inv(np, -1);
    std::vector<bool> used(ng, false);
    auto rec = [&](auto&& self, std::size_t j, long acc) -> void {
      if (j == np) {
        if (acc > best) {
          best = acc;
          best_vm.assign(ng, -1);
          for (std::size_t jj = 0; jj < np; ++jj) best_vm[inv[jj]] = static_cast<int>(jj);
        }
        return;
      }
      for (std::size_t i = 0; i < ng; ++i) {
        if (used[i]) continue;
        used[i] = true;
        inv[j] = static_cast<int>(i);
        self(self, j + 1, acc + w[i][j]);
        inv[j] = -1;
        used[i] = false;
      }
    };
    rec(rec, 0, 0);
  }
  return finish(gold, pred, std::move(best_vm), best);
}

// ---------------------------------------------------------------------------
// scoring
// ---------------------------------------------------------------------------

namespace {

ScoreReport report_from_counts(std::size_t matched, std::size_t gold_pairs,
                               std::size_t pred_pairs) {
  ScoreReport r;
  r.matched = matched;
  r.gold_pairs = gold_pairs;
  r.pred_pairs = pred_pairs;
  if (gold_pairs == 0 && pred_pairs == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    r.exact = true;
    return r;
  }
  r.precision = pred_pairs ? static_cast<double>(matched) / pred_pairs : 0.0;
  r.recall = gold_pairs ? static_cast<double>(matched) / gold_pairs : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.exact = matched == gold_pairs && gold_pairs == pred_pairs;
  return r;
}

}  // namespace

ScoreReport score(const fol::FormulaPtr& gold, const fol::FormulaPtr& pred, bool exhaustive,
                  std::uint64_t seed) {
  PairSet g = decompose_pairs(gold);
  if (!pred) {
    ScoreReport r;
    r.gold_pairs = g.size();
    return r;
  }
  PairSet p = decompose_pairs(pred);
  AlignResult a = exhaustive ? align_exhaustive(g, p) : align_greedy(g, p, seed);
  return report_from_counts(a.matched, g.size(), p.size());
}

CorpusReport score_corpus(const std::vector<CorpusItem>& items, bool exhaustive,
                          std::uint64_t seed) {
  if (items.empty()) throw EmptyCorpus("score_corpus: no examples");
  CorpusReport cr;
  cr.examples = items.size();
  cr.buckets = {{1, 5}, {6, 10}, {11, 15}, {16, 20}, {21, 0}};
  for (const auto& item : items) {
    ScoreReport r = score(item.gold, item.pred, exhaustive, seed);
    cr.matched += r.matched;
    cr.gold_pairs += r.gold_pairs;
    cr.pred_pairs += r.pred_pairs;
    if (r.exact) ++cr.exact;
    if (item.string_equal) ++cr.exact_str;
    if (item.input_len > 0)
      for (auto& b : cr.buckets)
        if (item.input_len >= b.lo && (b.hi == 0 || item.input_len <= b.hi)) {
          ++b.examples;
          b.matched += r.matched;
          b.gold_pairs += r.gold_pairs;
          b.pred_pairs += r.pred_pairs;
          break;
        }
  }
  ScoreReport micro = report_from_counts(cr.matched, cr.gold_pairs, cr.pred_pairs);
  cr.precision = micro.precision;
  cr.recall = micro.recall;
  cr.f1 = micro.f1;
  cr.accuracy = static_cast<double>(cr.exact) / cr.examples;
  cr.accuracy_str = static_cast<double>(cr.exact_str) / cr.examples;
  for (auto& b : cr.buckets) {
    if (b.examples == 0) continue;
    ScoreReport br = report_from_counts(b.matched, b.gold_pairs, b.pred_pairs);
    b.f1 = br.f1;
  }
  return cr;
}

}  // namespace nl2fol::metric
