// End-to-end acceptance suite: one pass/fail line per criterion. Heavy
// training criteria share one synthetic corpus and the ablation driver's
// cache, so a rerun after an interruption resumes from finished rows.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "nl2fol/corpus.hpp"
#include "nl2fol/fol.hpp"
#include "nl2fol/linearize.hpp"
#include "nl2fol/metric.hpp"
#include "nl2fol/model.hpp"
#include "nl2fol/trainer.hpp"
#include "nl2fol/util.hpp"

using namespace nl2fol;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kWorkedFol =
    "fol(1,some(A,some(B,some(C,and(r1by(B,A),and(n1foot(A),and(r1agent(B,C),and(v1travel(B),"
    "and(n1woman(C),some(D,and(card(C,D),and(c3number(D),n1numeral(D)))))))))))))";
constexpr const char* kWorkedMapping =
    "fol( n1foot A v1travel B n1woman C c3number D n1numeral D r1by B A r1agent B C card C D )";

// ablation corpus and schedule shared by criteria 7-9
constexpr std::uint64_t kAblCorpusSeed = 11;
constexpr int kAblEpochs = 60;
constexpr int kAblSeeds = 3;

trainer::TrainConfig ablation_base() {
  trainer::TrainConfig tc;
  tc.model.embed_dim = 48;
  tc.model.hidden = 96;
  tc.model.pred_embed = 48;
  tc.model.scope_embed = 16;
  tc.epochs = kAblEpochs;
  tc.batch_size = 32;
  tc.seed = 1;
  tc.eval_every = 15;
  return tc;
}

struct Cmd {
  int code = -1;
  std::string out;
};

std::string g_bin;

Cmd run_cli(const std::string& args) {
  std::string cmd = g_bin + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {};
  Cmd r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) r.out.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct Ctx {
  fs::path dir;                                  // scratch root
  corpus::Splits abl;                            // criterion-7 corpus
  fs::path abl_gold_test;                        // its test JSONL
  std::vector<trainer::AblationRun> plain_runs;  // criterion 7, reused by 8 and 9
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fol::FormulaPtr parse_norm(const std::string& text) {
  return fol::normalize_universal(fol::parse_fol(text));
}

// --------------------------------------------------------------------------

bool c1_format_fidelity(Ctx& ctx, std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  fs::path in = ctx.dir / "worked.txt";
  fs::path out = ctx.dir / "worked.jsonl";
  write_file(in.string(), std::string(kWorkedFol) + "\n");
  Cmd r = run_cli("convert --in " + in.string() + " --out " + out.string());
  double dt = seconds_since(t0);
  if (r.code != 0) {
    detail = "convert exited " + std::to_string(r.code);
    return false;
  }
  json row = json::parse(read_file(out.string()));
  std::string mapping = row["mapping"].get<std::string>();
  std::ostringstream os;
  os << "mapping " << (mapping == kWorkedMapping ? "byte-exact" : "MISMATCH: " + mapping) << ", "
     << dt << "s";
  detail = os.str();
  return mapping == kWorkedMapping && dt < 1.0;
}

bool c2_round_trips(Ctx&, std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<corpus::RawExample> items;
  {
    Rng rng(20250101);
    auto a = corpus::synth_corpus(rng, 5000, {});
    items.insert(items.end(), a.begin(), a.end());
    Rng rng2(20250102);
    auto b = corpus::synth_corpus(rng2, 5000, {.max_entities = 6, .max_negation_depth = 2});
    items.insert(items.end(), b.begin(), b.end());
  }
  std::size_t alpha_fail = 0, f1_fail = 0;
  for (const auto& ex : items) {
    auto f = parse_norm(ex.fol);
    if (!fol::alpha_equal(f, fol::parse_fol(fol::print_fol(f)))) ++alpha_fail;
    auto back = lin::delinearize(lin::linearize(f));
    if (metric::score(f, back).f1 != 1.0) ++f1_fail;
  }
  double dt = seconds_since(t0);
  std::ostringstream os;
  os << items.size() << " formulas, alpha failures " << alpha_fail << ", f1 failures " << f1_fail
     << ", " << dt << "s";
  detail = os.str();
  return alpha_fail == 0 && f1_fail == 0 && dt < 60.0;
}

bool c3_gradient_suite(Ctx&, std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  auto rows = trainer::gradient_suite(1e-5, 1e-4);
  double dt = seconds_since(t0);
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.worst);
  std::ostringstream os;
  os << rows.size() << " term checks, worst rel err " << worst << ", " << dt << "s";
  detail = os.str();
  return trainer::all_pass(rows) && dt < 300.0;
}

bool c4_metric_oracle(Ctx&, std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(4242);
  static const char* unary[] = {"man", "dog", "walk", "cloud", "bird", "tree"};
  static const char* binary[] = {"see", "love", "near"};
  int equal = 0, dominated = 0;
  const int total = 500;
  for (int iter = 0; iter < total; ++iter) {
    std::vector<std::string> toks = {"fol("};
    long vars = rng.uniform_int(1L, 8L);
    long depth = 0;
    long items = rng.uniform_int(3L, 10L);
    for (long k = 0; k < items; ++k) {
      long kind = rng.uniform_int(0L, 3L);
      if (kind == 0 && depth < 2) {
        toks.push_back("not(");
        ++depth;
      } else if (kind == 2) {
        toks.push_back(unary[rng.uniform_int(0L, 5L)]);
        toks.push_back(fol::canonical_var_name(static_cast<int>(rng.uniform_int(0L, vars - 1))));
      } else {
        toks.push_back(binary[rng.uniform_int(0L, 2L)]);
        toks.push_back(fol::canonical_var_name(static_cast<int>(rng.uniform_int(0L, vars - 1))));
        toks.push_back(fol::canonical_var_name(static_cast<int>(rng.uniform_int(0L, vars - 1))));
      }
    }
    for (; depth > 0; --depth) toks.push_back(")");
    toks.push_back(")");
    auto gold = lin::delinearize(lin::sequence_from_text(join(toks)));

    auto mut = toks;
    for (auto& t : mut) {
      if (lin::is_scope_token(t) || lin::is_variable_token(t)) continue;
      if (rng.bernoulli(0.3)) t = "zz" + t;
    }
    auto perm = rng.permutation(8);
    for (auto& t : mut)
      if (lin::is_variable_token(t))
        for (int i = 0; i < 8; ++i)
          if (t == fol::canonical_var_name(i)) {
            t = fol::canonical_var_name(perm[i]);
            break;
          }
    auto pred = lin::delinearize(lin::sequence_from_text(join(mut)));

    auto g = metric::decompose_pairs(gold);
    auto p = metric::decompose_pairs(pred);
    auto ex = metric::align_exhaustive(g, p);
    auto gr = metric::align_greedy(g, p, 17);
    if (ex.matched >= gr.matched) ++dominated;
    if (ex.matched == gr.matched) ++equal;
  }
  double dt = seconds_since(t0);
  std::ostringstream os;
  os << "exhaustive >= greedy on " << dominated << "/" << total << ", equal on " << equal << "/"
     << total << ", " << dt << "s";
  detail = os.str();
  return dominated == total && equal * 100 >= total * 95 && dt < 600.0;
}

bool c5_alpha_invariance(Ctx&, std::string& detail) {
  std::vector<corpus::RawExample> raw;
  {
    Rng rng(909);
    auto a = corpus::synth_corpus(rng, 500, {});
    raw.insert(raw.end(), a.begin(), a.end());
    Rng rng2(910);
    auto b = corpus::synth_corpus(rng2, 500, {.max_entities = 6, .max_negation_depth = 2});
    raw.insert(raw.end(), b.begin(), b.end());
  }
  auto vocabs = corpus::build_vocabs(raw, 1);
  Rng rng(77);
  std::size_t f1_fail = 0, align_fail = 0;
  for (const auto& r : raw) {
    auto e = corpus::encode_example(r.sentence, r.fol, vocabs);
    auto p = corpus::perturb_variables(e, vocabs, rng);
    if (metric::score(lin::delinearize(e.target), lin::delinearize(p.target)).f1 != 1.0)
      ++f1_fail;
    if (lin::alignment_targets(p.target) != e.target.align) ++align_fail;
  }
  std::ostringstream os;
  os << raw.size() << " perturbations, f1 failures " << f1_fail << ", align-target diffs "
     << align_fail;
  detail = os.str();
  return f1_fail == 0 && align_fail == 0;
}

bool c6_overfit(Ctx&, std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(3);
  auto raw = corpus::synth_corpus(rng, 8, {.max_entities = 1, .max_negation_depth = 0});
  auto vocabs = corpus::build_vocabs(raw, 1);
  auto items = trainer::encode_all(raw, vocabs);

  auto run = [&](model::Variant var) {
    trainer::TrainConfig tc;  // paper-scale dims are the defaults
    tc.model.variant = var;
    tc.epochs = 500;
    tc.eval_every = 10;
    tc.stop_on_perfect_dev = true;
    tc.seed = 1;
    model::Model m(tc.model, vocabs, tc.seed);
    auto res = trainer::train(m, items, items, tc);
    std::size_t best = 0;
    int at = -1;
    for (const auto& rec : res.epochs)
      if (rec.dev_f1 >= 0 && rec.dev_exact > best) {
        best = rec.dev_exact;
        at = rec.epoch;
      }
    return std::pair{best, at};
  };

  auto [sa_exact, sa_epoch] = run(model::Variant::SepHeadsAlign);
  auto [v_exact, v_epoch] = run(model::Variant::Vanilla);
  double dt = seconds_since(t0);
  std::ostringstream os;
  os << "sepheads-align " << sa_exact << "/8 at epoch " << sa_epoch << ", vanilla " << v_exact
     << "/8 at epoch " << v_epoch << ", " << dt << "s";
  detail = os.str();
  return sa_exact == 8 && v_exact >= 6 && dt < 900.0;
}

bool load_ablation_corpus(Ctx& ctx, std::string& err) {
  fs::path dir = ctx.dir / "abl";
  std::ostringstream cmd;
  cmd << "gen --out-dir " << dir.string() << " --split 2000,200,500 --seed " << kAblCorpusSeed
      << " --profile deep";
  Cmd r = run_cli(cmd.str());
  if (r.code != 0) {
    err = "gen exited " + std::to_string(r.code);
    return false;
  }
  ctx.abl.train = corpus::read_jsonl((dir / "train.jsonl").string());
  ctx.abl.dev = corpus::read_jsonl((dir / "dev.jsonl").string());
  ctx.abl.test = corpus::read_jsonl((dir / "test.jsonl").string());
  ctx.abl_gold_test = dir / "test.jsonl";
  return true;
}

bool c7_ablation_trend(Ctx& ctx, std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  std::string err;
  if (!load_ablation_corpus(ctx, err)) {
    detail = err;
    return false;
  }
  trainer::AblationConfig cfg;
  cfg.base = ablation_base();
  cfg.variants = {model::Variant::Vanilla, model::Variant::SepHeads,
                  model::Variant::SepHeadsAlign};
  cfg.num_seeds = kAblSeeds;
  ctx.plain_runs = trainer::run_ablation(ctx.abl, cfg, (ctx.dir / "abl-out").string(), &std::cerr);

  std::map<std::string, std::pair<double, int>> mean;
  for (const auto& r : ctx.plain_runs) {
    mean[r.variant].first += r.test.f1;
    mean[r.variant].second += 1;
  }
  auto f1 = [&](const std::string& v) { return 100.0 * mean[v].first / mean[v].second; };
  double v = f1("vanilla"), sh = f1("sepheads"), sa = f1("sepheads-align");
  double dt = seconds_since(t0);
  std::ostringstream os;
  os.precision(4);
  os << "mean test F1: sepheads-align " << sa << " > sepheads " << sh << " > vanilla " << v
     << " (margin " << sa - v << "), " << dt << "s";
  detail = os.str();
  return sa > sh && sh > v && sa - v >= 2.0 && dt < 7200.0;
}

bool c8_perturbation_drop(Ctx& ctx, std::string& detail) {
  if (ctx.plain_runs.empty()) {
    detail = "criterion 7 runs unavailable";
    return false;
  }
  trainer::AblationConfig cfg;
  cfg.base = ablation_base();
  cfg.base.perturb = true;
  cfg.variants = {model::Variant::Vanilla, model::Variant::SepHeadsAlign};
  cfg.num_seeds = kAblSeeds;
  auto pert = trainer::run_ablation(ctx.abl, cfg, (ctx.dir / "abl-perturb").string(), &std::cerr);

  auto mean_f1 = [](const std::vector<trainer::AblationRun>& runs, const std::string& v) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : runs)
      if (r.variant == v) {
        s += r.test.f1;
        ++n;
      }
    return 100.0 * s / n;
  };
  double v_drop = mean_f1(ctx.plain_runs, "vanilla") - mean_f1(pert, "vanilla");
  double sa_drop = mean_f1(ctx.plain_runs, "sepheads-align") - mean_f1(pert, "sepheads-align");
  std::ostringstream os;
  os.precision(4);
  os << "perturbed-training F1 drop: vanilla " << v_drop << ", sepheads-align " << sa_drop;
  detail = os.str();
  return v_drop > sa_drop;
}

bool c9_length_decline(Ctx& ctx, std::string& detail) {
  if (ctx.plain_runs.empty()) {
    detail = "criterion 7 runs unavailable";
    return false;
  }
  // cmd_score emits the per-bucket rows; decline = first bucket F1 - last
  auto decline = [&](const trainer::AblationRun& run, double& out) {
    fs::path rep = ctx.dir / "bucket-report.json";
    fs::path preds = ctx.dir / "abl-out" / run.pred_file;
    Cmd r = run_cli("score --gold " + ctx.abl_gold_test.string() + " --pred " + preds.string() +
                    " --json " + rep.string());
    if (r.code != 0) return false;
    json j = json::parse(read_file(rep.string()));
    std::vector<double> f1s;
    for (const auto& b : j["buckets"])
      if (b["examples"].get<int>() > 0) f1s.push_back(b["f1"].get<double>());
    if (f1s.size() < 2) return false;
    out = f1s.front() - f1s.back();
    return true;
  };

  double v_sum = 0.0, sa_sum = 0.0;
  int v_n = 0, sa_n = 0;
  for (const auto& run : ctx.plain_runs) {
    double d = 0.0;
    if (run.variant == "vanilla" && decline(run, d)) {
      v_sum += d;
      ++v_n;
    } else if (run.variant == "sepheads-align" && decline(run, d)) {
      sa_sum += d;
      ++sa_n;
    }
  }
  if (v_n == 0 || sa_n == 0) {
    detail = "missing per-bucket reports";
    return false;
  }
  double v_dec = 100.0 * v_sum / v_n, sa_dec = 100.0 * sa_sum / sa_n;
  std::ostringstream os;
  os.precision(4);
  os << "shortest-to-longest bucket F1 decline: vanilla " << v_dec << ", sepheads-align "
     << sa_dec;
  detail = os.str();
  return sa_dec <= v_dec;
}

bool c10_determinism(Ctx& ctx, std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  fs::path c = ctx.dir / "det.jsonl";
  Cmd g = run_cli("gen --count 64 --seed 5 --profile deep --out " + c.string());
  if (g.code != 0) {
    detail = "gen failed";
    return false;
  }
  std::string sents;
  {
    std::istringstream is(read_file(c.string()));
    for (std::string line; std::getline(is, line);)
      sents += json::parse(line)["sentence"].get<std::string>() + "\n";
  }
  fs::path sf = ctx.dir / "det-sents.txt";
  write_file(sf.string(), sents);

  auto one = [&](const std::string& tag) {
    fs::path run = ctx.dir / ("det-" + tag);
    std::ostringstream cmd;
    cmd << "train --train " << c.string() << " --out " << run.string()
        << " --variant sepheads-align --seed 7 --epochs 3 --batch-size 8 --embed-dim 24"
        << " --hidden 32 --pred-embed 16 --scope-embed 8 --min-freq 1";
    if (run_cli(cmd.str()).code != 0) return std::tuple{std::string(), std::string(), std::string()};
    fs::path preds = run / "preds.tsv";
    run_cli("decode --checkpoint " + (run / "checkpoint.ck").string() + " --in " + sf.string() +
            " --out " + preds.string());
    fs::path rep = run / "report.txt";
    run_cli("score --gold " + c.string() + " --pred " + preds.string() + " --out " + rep.string());
    return std::tuple{read_file((run / "checkpoint.ck").string()), read_file(preds.string()),
                      read_file(rep.string())};
  };

  auto [ck1, p1, r1] = one("a");
  auto [ck2, p2, r2] = one("b");
  double dt = seconds_since(t0);
  bool ok = !ck1.empty() && ck1 == ck2 && p1 == p2 && r1 == r2;
  std::ostringstream os;
  os << "checkpoint " << (ck1 == ck2 ? "identical" : "DIFFERS") << ", decodes "
     << (p1 == p2 ? "identical" : "DIFFERS") << ", score tables "
     << (r1 == r2 ? "identical" : "DIFFERS") << ", " << dt << "s";
  detail = os.str();
  return ok;
}

}  // namespace

int main() {
  const char* bin = std::getenv("NL2FOL_BIN");
  if (!bin) {
    std::cerr << "NL2FOL_BIN must point at the nl2fol binary" << std::endl;
    return 2;
  }
  g_bin = bin;

  Ctx ctx;
  std::string tmpl = (fs::temp_directory_path() / "nl2fol-accept-XXXXXX").string();
  ctx.dir = mkdtemp(tmpl.data());

  struct Entry {
    int id;
    const char* name;
    bool (*fn)(Ctx&, std::string&);
  };
  const Entry entries[] = {
      {1, "format fidelity", c1_format_fidelity},
      {2, "round-trip suite", c2_round_trips},
      {3, "gradient suite", c3_gradient_suite},
      {4, "metric oracle", c4_metric_oracle},
      {5, "alpha-invariance", c5_alpha_invariance},
      {6, "overfit convergence", c6_overfit},
      {7, "directional ablation", c7_ablation_trend},
      {8, "perturbation robustness", c8_perturbation_drop},
      {9, "length analysis", c9_length_decline},
      {10, "determinism", c10_determinism},
  };

  int passed = 0;
  for (const auto& e : entries) {
    std::string detail;
    bool ok = false;
    try {
      ok = e.fn(ctx, detail);
    } catch (const std::exception& ex) {
      detail = std::string("exception: ") + ex.what();
    }
    if (ok) ++passed;
    std::printf("[%2d] %s  %-24s %s\n", e.id, ok ? "PASS" : "FAIL", e.name, detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/10 passed\n", passed);

  std::error_code ec;
  fs::remove_all(ctx.dir, ec);
  return passed == 10 ? 0 : 1;
}
