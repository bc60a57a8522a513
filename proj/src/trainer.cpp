#include "nl2fol/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace nl2fol::trainer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string anchor_name(lin::AnchorMode m) {
  return m == lin::AnchorMode::Earliest ? "earliest" : "mostrecent";
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv = model.to_kv();
  kv["lr"] = format_double(adam.lr);
  kv["beta1"] = format_double(adam.beta1);
  kv["beta2"] = format_double(adam.beta2);
  kv["adam_eps"] = format_double(adam.eps);
  kv["decay"] = format_double(adam.decay);
  kv["decay_is_lr"] = adam.decay_is_lr ? "1" : "0";
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["clip_norm"] = format_double(clip_norm);
  kv["perturb"] = perturb ? "1" : "0";
  kv["perturb_once"] = perturb_once ? "1" : "0";
  kv["align_anchor"] = anchor_name(align_anchor);
  kv["seed"] = std::to_string(seed);
  kv["eval_every"] = std::to_string(eval_every);
  kv["stop_on_perfect_dev"] = stop_on_perfect_dev ? "1" : "0";
  return kv;
}

std::vector<corpus::Example> encode_all(const std::vector<corpus::RawExample>& raw,
                                        const corpus::Vocabs& v, lin::AnchorMode anchor) {
  std::vector<corpus::Example> out;
  out.reserve(raw.size());
  for (const auto& item : raw) {
    corpus::Example e = corpus::encode_example(item.sentence, item.fol, v);
    if (anchor != lin::AnchorMode::Earliest)
      e.target.align = lin::alignment_targets(e.target, anchor);
    out.push_back(std::move(e));
  }
  return out;
}

EvalOutput evaluate(model::Model& m, const std::vector<corpus::Example>& items, bool exhaustive,
                    std::uint64_t metric_seed) {
  EvalOutput out;
  std::vector<metric::CorpusItem> scored;
  scored.reserve(items.size());
  out.decoded.reserve(items.size());
  for (const auto& ex : items) {
    lin::TokenSequence ts = m.greedy_decode(ex.tokens);
    metric::CorpusItem it;
    it.gold = lin::delinearize(ex.target);
    try {
      it.pred = lin::delinearize(ts);
    } catch (const lin::MalformedSequence&) {
      it.pred = nullptr;
    }
    it.input_len = static_cast<int>(ex.tokens.size());
    it.string_equal = ts.tokens == ex.target.tokens;
    scored.push_back(std::move(it));
    out.decoded.push_back(std::move(ts));
  }
  if (!scored.empty()) out.report = metric::score_corpus(scored, exhaustive, metric_seed);
  return out;
}

namespace {

std::string epoch_line(const EpochRecord& rec, model::Variant var, bool evaluated) {
  std::ostringstream os;
  os << "epoch=" << rec.epoch << " loss=" << format_double(rec.loss.total)
     << " loss_ce=" << format_double(rec.loss.ce);
  if (model::separate_heads(var)) os << " loss_aux=" << format_double(rec.loss.aux);
  if (model::alignment(var))
    os << " loss_dec=" << format_double(rec.loss.dec)
       << " loss_pos=" << format_double(rec.loss.pos);
  if (evaluated)
    os << " dev_f1=" << format_double(rec.dev_f1) << " dev_exact=" << rec.dev_exact
       << " best=" << (rec.best ? 1 : 0);
  return os.str();
}

}  // namespace

TrainResult train(model::Model& m, const std::vector<corpus::Example>& train_set,
                  const std::vector<corpus::Example>& dev_set, const TrainConfig& cfg,
                  const std::string& checkpoint_path, std::ostream* log) {
  if (train_set.empty()) throw corpus::EmptyCorpus("train: empty training set");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("train: epochs and batch size must be positive");

  Rng shuffle_rng = Rng(cfg.seed).fork(1);
  Rng perturb_rng = Rng(cfg.seed).fork(2);
  ad::Adam opt(cfg.adam);

  TrainResult res;
  res.dev_size = dev_set.size();

  std::vector<corpus::Example> cur = train_set;
  if (cfg.perturb && cfg.perturb_once)
    for (auto& e : cur) e = corpus::perturb_variables(e, m.vocabs(), perturb_rng);
  const bool reperturb = cfg.perturb && !cfg.perturb_once;

  std::vector<int> order(cur.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (reperturb)
      for (std::size_t i = 0; i < cur.size(); ++i)
        cur[i] = corpus::perturb_variables(train_set[i], m.vocabs(), perturb_rng);

    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    model::LossValues sum;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<corpus::Example> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i)
        batch.push_back(cur[static_cast<std::size_t>(order[i])]);
      model::LossValues lv = m.train_step(batch, opt, cfg.clip_norm);
      const double w = static_cast<double>(batch.size());
      sum.ce += lv.ce * w;
      sum.aux += lv.aux * w;
      sum.dec += lv.dec * w;
      sum.pos += lv.pos * w;
      sum.total += lv.total * w;
      seen += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double inv = 1.0 / static_cast<double>(seen);
    rec.loss = {sum.ce * inv, sum.aux * inv, sum.dec * inv, sum.pos * inv, sum.total * inv};

    const bool eval_now =
        !dev_set.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
    if (eval_now) {
      EvalOutput ev = evaluate(m, dev_set);
      rec.dev_f1 = ev.report.f1;
      rec.dev_exact = ev.report.exact;
      if (rec.dev_f1 > res.best_dev_f1) {
        res.best_dev_f1 = rec.dev_f1;
        res.best_epoch = epoch;
        rec.best = true;
        if (!checkpoint_path.empty()) m.save(checkpoint_path);
      }
    }
    if (log) *log << epoch_line(rec, m.config().variant, eval_now) << std::endl;
    res.epochs.push_back(rec);

    if (cfg.stop_on_perfect_dev && eval_now && rec.dev_exact == dev_set.size()) {
      res.stopped_early = true;
      break;
    }
  }
  if (!checkpoint_path.empty() && res.best_epoch < 0) m.save(checkpoint_path);
  return res;
}

// ---------------------------------------------------------------------------
// gradient suite
// ---------------------------------------------------------------------------

namespace {

const std::vector<corpus::RawExample>& suite_corpus() {
  static const std::vector<corpus::RawExample> c = {
      {"a man is present", "fol(1,some(A,n1man(A)))"},
      {"a woman sees a man",
       "fol(1,some(A,some(B,and(n1woman(A),and(n1man(B),r1see(A,B))))))"},
      {"no man is present", "fol(1,not(some(A,n1man(A))))"},
      {"two things meet", "fol(1,some(A,some(B,r1see(A,B))))"},
      {"three women are traveling by foot",
       "fol(1, some(A,and(n1foot(A), some(B,and(v1travel(B), and (r1by(B,A), "
       "some(C, and(n1woman(C), and(r1agent(B,C), some(D, and (c3number(D), "
       "and(card (C,D), n1numeral(D)))))))))))))"},
  };
  return c;
}

// Narrow net at twice the init scale: keeps every connected gradient entry
// above the central-difference noise floor at eps=1e-5.
model::Model suite_model(model::Variant var, const corpus::Vocabs& v) {
  model::ModelConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden = 4;
  cfg.pred_embed = 6;
  cfg.scope_embed = 4;
  cfg.variant = var;
  model::Model m(cfg, v, 42);
  for (auto& p : m.params().params()) p->value *= 2.0;
  return m;
}

struct TanhScaleGuard {
  explicit TanhScaleGuard(double s) { ad::set_tanh_backward_scale(s); }
  ~TanhScaleGuard() { ad::set_tanh_backward_scale(1.0); }
};

}  // namespace

std::vector<GradCheckRow> gradient_suite(double eps, double tol, bool corrupt) {
  TanhScaleGuard guard(corrupt ? 1.01 : 1.0);
  const corpus::Vocabs v = corpus::build_vocabs(suite_corpus(), 1);
  const corpus::Example short_ex =
      corpus::encode_example(suite_corpus()[0].sentence, suite_corpus()[0].fol, v);
  const corpus::Example shared_ex =
      corpus::encode_example(suite_corpus()[1].sentence, suite_corpus()[1].fol, v);

  std::vector<GradCheckRow> rows;
  auto sweep = [&](model::Variant var, const std::string& term, const std::string& instance,
                   const corpus::Example& ex) {
    model::Model m = suite_model(var, v);
    auto builder = [&](ad::Tape& t) {
      model::LossNodes nodes;
      ad::Var total = m.example_loss(t, ex, nullptr, nullptr, &nodes);
      if (term == "ce") return nodes.ce;
      if (term == "aux") return nodes.aux;
      if (term == "dec") return nodes.dec;
      if (term == "pos") return nodes.pos;
      return total;
    };
    ad::GradCheckReport rep = ad::gradient_check(m.params(), builder, eps, tol);
    rows.push_back({model::to_string(var), term, instance, rep.worst, rep.pass});
  };

  for (model::Variant var : model::all_variants()) {
    sweep(var, "total", "short", short_ex);
    sweep(var, "total", "shared-vars", shared_ex);
    sweep(var, "ce", "shared-vars", shared_ex);
    if (model::separate_heads(var)) sweep(var, "aux", "shared-vars", shared_ex);
    if (model::alignment(var)) {
      sweep(var, "dec", "shared-vars", shared_ex);
      sweep(var, "pos", "shared-vars", shared_ex);
    }
  }
  return rows;
}

bool all_pass(const std::vector<GradCheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass; });
}

// ---------------------------------------------------------------------------
// ablation driver
// ---------------------------------------------------------------------------

namespace {

json bucket_json(const metric::BucketScore& b) {
  return json{{"lo", b.lo},           {"hi", b.hi},
              {"examples", b.examples}, {"matched", b.matched},
              {"gold_pairs", b.gold_pairs}, {"pred_pairs", b.pred_pairs},
              {"f1", b.f1}};
}

json report_obj(const metric::CorpusReport& r) {
  json j{{"precision", r.precision},
         {"recall", r.recall},
         {"f1", r.f1},
         {"accuracy", r.accuracy},
         {"accuracy_str", r.accuracy_str},
         {"examples", r.examples},
         {"exact", r.exact},
         {"exact_str", r.exact_str},
         {"matched", r.matched},
         {"gold_pairs", r.gold_pairs},
         {"pred_pairs", r.pred_pairs}};
  j["buckets"] = json::array();
  for (const auto& b : r.buckets) j["buckets"].push_back(bucket_json(b));
  return j;
}

metric::CorpusReport report_from_obj(const json& j) {
  metric::CorpusReport r;
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.accuracy_str = j.at("accuracy_str").get<double>();
  r.examples = j.at("examples").get<std::size_t>();
  r.exact = j.at("exact").get<std::size_t>();
  r.exact_str = j.at("exact_str").get<std::size_t>();
  r.matched = j.at("matched").get<std::size_t>();
  r.gold_pairs = j.at("gold_pairs").get<std::size_t>();
  r.pred_pairs = j.at("pred_pairs").get<std::size_t>();
  for (const auto& bj : j.at("buckets")) {
    metric::BucketScore b;
    b.lo = bj.at("lo").get<int>();
    b.hi = bj.at("hi").get<int>();
    b.examples = bj.at("examples").get<std::size_t>();
    b.matched = bj.at("matched").get<std::size_t>();
    b.gold_pairs = bj.at("gold_pairs").get<std::size_t>();
    b.pred_pairs = bj.at("pred_pairs").get<std::size_t>();
    b.f1 = bj.at("f1").get<double>();
    r.buckets.push_back(b);
  }
  return r;
}

std::string raws_digest(const std::vector<corpus::RawExample>& items) {
  std::string buf;
  for (const auto& it : items) {
    buf += it.sentence;
    buf += '\t';
    buf += it.fol;
    buf += '\n';
  }
  return sha256_hex(buf);
}

std::string ablation_digest(const AblationConfig& cfg, const corpus::Splits& splits,
                            const corpus::Vocabs& vocabs) {
  std::string buf;
  for (const auto& [k, val] : cfg.base.to_kv()) buf += k + "=" + val + "\n";
  buf += "min_freq=" + std::to_string(cfg.min_freq) + "\n";
  buf += "exhaustive=" + std::string(cfg.exhaustive_metric ? "1" : "0") + "\n";
  buf += "vocabs=" + vocabs.digest() + "\n";
  buf += "train=" + raws_digest(splits.train) + "\n";
  buf += "dev=" + raws_digest(splits.dev) + "\n";
  buf += "test=" + raws_digest(splits.test) + "\n";
  return sha256_hex(buf);
}

std::string run_key(const std::string& variant, std::uint64_t seed, bool perturb) {
  std::string key = variant + "-seed" + std::to_string(seed);
  if (perturb) key += "-perturb";
  return key;
}

void write_pred_file(const std::string& path, const std::vector<lin::TokenSequence>& decoded) {
  std::string buf;
  for (const auto& ts : decoded) {
    buf += join(ts.tokens);
    buf += '\t';
    buf += ts.unclosed ? "UNCLOSED" : "OK";
    buf += '\n';
  }
  write_file(path, buf);
}

std::map<std::string, AblationRun> read_cached_runs(const std::string& path,
                                                    const std::string& digest) {
  std::map<std::string, AblationRun> cache;
  std::ifstream in(path);
  if (!in) return cache;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || j.value("config_digest", "") != digest) continue;
    AblationRun run;
    run.variant = j.at("variant").get<std::string>();
    run.seed = j.at("seed").get<std::uint64_t>();
    run.perturb = j.at("perturb").get<bool>();
    run.best_dev_f1 = j.at("best_dev_f1").get<double>();
    run.pred_file = j.at("pred_file").get<std::string>();
    run.checkpoint = j.at("checkpoint").get<std::string>();
    run.test = report_from_obj(j.at("test"));
    cache[run_key(run.variant, run.seed, run.perturb)] = std::move(run);
  }
  return cache;
}

void append_run(const std::string& path, const AblationRun& run, const std::string& digest) {
  json j{{"config_digest", digest},   {"variant", run.variant},
         {"seed", run.seed},          {"perturb", run.perturb},
         {"best_dev_f1", run.best_dev_f1}, {"pred_file", run.pred_file},
         {"checkpoint", run.checkpoint}};
  j["test"] = report_obj(run.test);
  std::ofstream out(path, std::ios::app);
  out << j.dump() << '\n';
}

void write_tables(const std::string& out_dir, const std::vector<AblationRun>& runs) {
  const std::vector<AblationRow> rows = aggregate_runs(runs);
  write_file(out_dir + "/table.txt", render_table(rows));
  json j = json::array();
  for (const auto& r : rows)
    j.push_back(json{{"variant", r.variant},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"f1", r.f1},
                     {"accuracy", r.accuracy},
                     {"runs", r.runs}});
  write_file(out_dir + "/table.json", j.dump(2) + "\n");
}

}  // namespace

std::vector<AblationRun> run_ablation(const corpus::Splits& splits, const AblationConfig& cfg,
                                      const std::string& out_dir, std::ostream* log) {
  fs::create_directories(fs::path(out_dir) / "checkpoints");
  fs::create_directories(fs::path(out_dir) / "preds");

  const std::vector<model::Variant> variants =
      cfg.variants.empty() ? model::all_variants() : cfg.variants;
  const corpus::Vocabs vocabs = corpus::build_vocabs(splits.train, cfg.min_freq);
  const auto train_ex = encode_all(splits.train, vocabs, cfg.base.align_anchor);
  const auto dev_ex = encode_all(splits.dev, vocabs, cfg.base.align_anchor);
  const auto test_ex = encode_all(splits.test, vocabs, cfg.base.align_anchor);

  const std::string results_path = out_dir + "/results.jsonl";
  const std::string digest = ablation_digest(cfg, splits, vocabs);
  std::map<std::string, AblationRun> cache = read_cached_runs(results_path, digest);

  std::vector<AblationRun> runs;
  for (model::Variant var : variants) {
    for (int k = 0; k < cfg.num_seeds; ++k) {
      const std::uint64_t seed = cfg.base.seed + static_cast<std::uint64_t>(k);
      const std::string key = run_key(model::to_string(var), seed, cfg.base.perturb);
      if (auto it = cache.find(key); it != cache.end()) {
        if (log) *log << "run=" << key << " cached=1" << std::endl;
        runs.push_back(it->second);
        continue;
      }

      TrainConfig tc = cfg.base;
      tc.model.variant = var;
      tc.seed = seed;
      if (log) *log << "run=" << key << " cached=0" << std::endl;

      model::Model m(tc.model, vocabs, seed);
      const std::string ckpt = out_dir + "/checkpoints/" + key + ".ck";
      TrainResult tr = train(m, train_ex, dev_ex, tc, ckpt, log);

      model::Model best = model::Model::load(ckpt, vocabs);
      EvalOutput ev = evaluate(best, test_ex, cfg.exhaustive_metric, 0);

      AblationRun run;
      run.variant = model::to_string(var);
      run.seed = seed;
      run.perturb = cfg.base.perturb;
      run.test = ev.report;
      run.best_dev_f1 = tr.best_dev_f1;
      run.pred_file = "preds/" + key + ".tsv";
      run.checkpoint = "checkpoints/" + key + ".ck";
      write_pred_file(out_dir + "/" + run.pred_file, ev.decoded);

      if (log)
        *log << "run=" << key << " test_f1=" << format_double(run.test.f1)
             << " test_accuracy=" << format_double(run.test.accuracy) << std::endl;
      runs.push_back(run);
      append_run(results_path, run, digest);
      write_tables(out_dir, runs);
    }
  }
  write_tables(out_dir, runs);
  return runs;
}

std::vector<AblationRow> aggregate_runs(const std::vector<AblationRun>& runs) {
  std::vector<AblationRow> rows;
  for (model::Variant var : model::all_variants()) {
    const std::string name = model::to_string(var);
    AblationRow row;
    row.variant = name;
    for (const auto& r : runs) {
      if (r.variant != name) continue;
      row.precision += r.test.precision;
      row.recall += r.test.recall;
      row.f1 += r.test.f1;
      row.accuracy += r.test.accuracy;
      ++row.runs;
    }
    if (row.runs == 0) continue;
    row.precision /= row.runs;
    row.recall /= row.runs;
    row.f1 /= row.runs;
    row.accuracy /= row.runs;
    rows.push_back(row);
  }
  return rows;
}

std::string render_table(const std::vector<AblationRow>& rows) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-22s %9s %9s %9s %9s %5s\n", "variant", "precision",
                "recall", "f-1", "accuracy", "runs");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-22s %9.2f %9.2f %9.2f %9.2f %5d\n", r.variant.c_str(),
                  100.0 * r.precision, 100.0 * r.recall, 100.0 * r.f1, 100.0 * r.accuracy,
                  r.runs);
    out += buf;
  }
  return out;
}

std::string report_json(const metric::CorpusReport& r) { return report_obj(r).dump(2) + "\n"; }

std::string report_text(const metric::CorpusReport& r) {
  std::ostringstream os;
  os << "examples=" << r.examples << " exact=" << r.exact << " exact_str=" << r.exact_str
     << " precision=" << format_double(r.precision) << " recall=" << format_double(r.recall)
     << " f1=" << format_double(r.f1) << " accuracy=" << format_double(r.accuracy)
     << " accuracy_str=" << format_double(r.accuracy_str) << " matched=" << r.matched
     << " gold_pairs=" << r.gold_pairs << " pred_pairs=" << r.pred_pairs << "\n";
  for (const auto& b : r.buckets) {
    os << "bucket=" << b.lo << "-";
    if (b.hi > 0)
      os << b.hi;
    else
      os << "inf";
    os << " examples=" << b.examples << " matched=" << b.matched
       << " gold_pairs=" << b.gold_pairs << " pred_pairs=" << b.pred_pairs
       << " f1=" << format_double(b.f1) << "\n";
  }
  return os.str();
}

}  // namespace nl2fol::trainer
