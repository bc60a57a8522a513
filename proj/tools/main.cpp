// nl2fol: sentence-to-FOL toolkit; run with --help for subcommands.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nl2fol/corpus.hpp"
#include "nl2fol/fol.hpp"
#include "nl2fol/linearize.hpp"
#include "nl2fol/metric.hpp"
#include "nl2fol/model.hpp"
#include "nl2fol/trainer.hpp"
#include "nl2fol/util.hpp"

using namespace nl2fol;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit 1: usage or configuration; exit 2: unreadable or invalid data
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative paths resolve under NL2FOL_DATA_ROOT when it is set.
std::string resolve(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  const char* root = std::getenv("NL2FOL_DATA_ROOT");
  if (!root || !*root) return path;
  return (fs::path(root) / path).string();
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string file_digest(const std::string& path) {
  try {
    return sha256_file_hex(path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> config;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;  // path -> sha256

  void add_input(const std::string& path) { inputs[path] = file_digest(path); }

  void write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["argv"] = argv;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    ensure_parent_dir(path);
    write_file(path, j.dump(2) + "\n");
  }
};

std::vector<std::string> g_argv;

corpus::GeneratorProfile profile_by_name(const std::string& name) {
  corpus::GeneratorProfile p;
  if (name == "default") return p;  // up to 4 entities, negation depth 2
  if (name == "simple") {
    p.max_entities = 1;
    p.max_negation_depth = 0;
    return p;
  }
  if (name == "shallow") {
    p.max_negation_depth = 0;
    return p;
  }
  if (name == "deep") {
    p.max_entities = 6;  // adds the multi-clause scenes
    return p;
  }
  throw UsageError("unknown profile: " + name + " (default, simple, shallow, deep)");
}

std::vector<corpus::RawExample> load_corpus(const std::string& path) {
  try {
    return corpus::read_jsonl(path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

model::Variant parse_variant(const std::string& name) {
  try {
    return model::variant_from_string(name);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

lin::AnchorMode parse_anchor(const std::string& name) {
  if (name == "earliest") return lin::AnchorMode::Earliest;
  if (name == "mostrecent") return lin::AnchorMode::MostRecent;
  throw UsageError("unknown anchor mode: " + name + " (earliest, mostrecent)");
}

// Options shared by train and ablate.
struct TrainFlags {
  std::string variant = "sepheads-align";
  std::uint64_t seed = 0;
  int epochs = 100;
  int batch_size = 32;
  double lr = 0.001;
  double decay = 1e-4;
  std::string decay_mode = "wd";
  double clip = 5.0;
  bool perturb = false;
  bool perturb_once = false;
  int embed_dim = 100;
  int hidden = 400;
  int pred_embed = 100;
  int scope_embed = 50;
  int min_freq = 2;
  int eval_every = 1;
  bool stop_on_perfect_dev = false;
  std::string anchor = "earliest";
  bool no_head_context = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--variant", f.variant,
                  "vanilla, vanilla-selfattn, vanilla-align, sepheads, sepheads-selfattn, "
                  "sepheads-align");
  cmd->add_option("--seed", f.seed, "seed for init, shuffling, perturbation");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch-size", f.batch_size, "examples per optimizer step");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--decay", f.decay, "decay rate");
  cmd->add_option("--decay-mode", f.decay_mode, "wd: decoupled weight decay; lr: lr/(1+decay*t)");
  cmd->add_option("--clip", f.clip, "gradient-norm clip");
  cmd->add_flag("--perturb", f.perturb, "re-permute gold variable letters every epoch");
  cmd->add_flag("--perturb-once", f.perturb_once, "permute once up front instead of per epoch");
  cmd->add_option("--embed-dim", f.embed_dim, "input embedding size D");
  cmd->add_option("--hidden", f.hidden, "LSTM width d_h = d_c");
  cmd->add_option("--pred-embed", f.pred_embed, "unary/binary decoder embedding size");
  cmd->add_option("--scope-embed", f.scope_embed, "scope decoder embedding size");
  cmd->add_option("--min-freq", f.min_freq, "input vocabulary frequency cutoff");
  cmd->add_option("--eval-every", f.eval_every, "dev decode cadence in epochs");
  cmd->add_flag("--stop-on-perfect-dev", f.stop_on_perfect_dev,
                "stop once every dev example matches exactly");
  cmd->add_option("--anchor", f.anchor, "alignment anchor: earliest or mostrecent");
  cmd->add_flag("--no-head-context", f.no_head_context,
                "heads read the decoder state alone (literal reading)");
}

trainer::TrainConfig make_train_config(const TrainFlags& f) {
  trainer::TrainConfig tc;
  tc.model.embed_dim = f.embed_dim;
  tc.model.hidden = f.hidden;
  tc.model.pred_embed = f.pred_embed;
  tc.model.scope_embed = f.scope_embed;
  tc.model.variant = parse_variant(f.variant);
  tc.model.heads_use_context = !f.no_head_context;
  tc.adam.lr = f.lr;
  tc.adam.decay = f.decay;
  if (f.decay_mode == "lr")
    tc.adam.decay_is_lr = true;
  else if (f.decay_mode != "wd")
    throw UsageError("unknown decay mode: " + f.decay_mode + " (wd, lr)");
  tc.epochs = f.epochs;
  tc.batch_size = f.batch_size;
  tc.clip_norm = f.clip;
  tc.perturb = f.perturb || f.perturb_once;
  tc.perturb_once = f.perturb_once;
  tc.align_anchor = parse_anchor(f.anchor);
  tc.seed = f.seed;
  tc.eval_every = f.eval_every;
  tc.stop_on_perfect_dev = f.stop_on_perfect_dev;
  try {
    tc.model.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (tc.epochs < 1 || tc.batch_size < 1 || tc.eval_every < 1)
    throw UsageError("epochs, batch size, and eval cadence must be positive");
  return tc;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::string out_dir;
  std::string split;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::string profile = "default";
};

int cmd_gen(const GenArgs& a) {
  const corpus::GeneratorProfile profile = profile_by_name(a.profile);
  if (a.out.empty() == a.out_dir.empty())
    throw UsageError("gen: give exactly one of --out or --out-dir");
  if (!a.out_dir.empty() && a.split.empty())
    throw UsageError("gen: --out-dir requires --split train,dev,test counts");

  Rng rng(a.seed);
  Manifest man;
  man.command = "gen";
  man.argv = g_argv;
  man.seeds = {a.seed};
  man.config = {{"count", std::to_string(a.count)},
                {"profile", a.profile},
                {"max_entities", std::to_string(profile.max_entities)},
                {"max_negation_depth", std::to_string(profile.max_negation_depth)}};

  if (!a.out.empty()) {
    const auto items = corpus::synth_corpus(rng, a.count, profile);
    const std::string out = resolve(a.out);
    ensure_parent_dir(out);
    corpus::write_jsonl(out, items);
    man.write(out + ".manifest.json");
    std::cout << "generated=" << items.size() << " out=" << out << std::endl;
    return 0;
  }

  std::vector<std::size_t> sizes;
  for (const auto& part : [&] {
         std::vector<std::string> parts;
         std::string cur;
         for (char c : a.split) {
           if (c == ',') {
             parts.push_back(cur);
             cur.clear();
           } else
             cur += c;
         }
         parts.push_back(cur);
         return parts;
       }()) {
    try {
      sizes.push_back(static_cast<std::size_t>(std::stoull(part)));
    } catch (const std::exception&) {
      throw UsageError("gen: bad --split counts: " + a.split);
    }
  }
  if (sizes.size() != 3) throw UsageError("gen: --split needs train,dev,test counts");
  const std::size_t total = sizes[0] + sizes[1] + sizes[2];
  man.config["split"] = a.split;

  auto items = corpus::synth_corpus(rng, total, profile);
  Rng split_rng = rng.fork(7);
  split_rng.shuffle(items);
  corpus::Splits splits;
  splits.train.assign(items.begin(), items.begin() + sizes[0]);
  splits.dev.assign(items.begin() + sizes[0], items.begin() + sizes[0] + sizes[1]);
  splits.test.assign(items.begin() + sizes[0] + sizes[1], items.end());

  const fs::path dir = resolve(a.out_dir);
  fs::create_directories(dir);
  corpus::write_jsonl((dir / "train.jsonl").string(), splits.train);
  corpus::write_jsonl((dir / "dev.jsonl").string(), splits.dev);
  corpus::write_jsonl((dir / "test.jsonl").string(), splits.test);
  man.write((dir / "manifest.json").string());
  std::cout << "generated=" << total << " train=" << sizes[0] << " dev=" << sizes[1]
            << " test=" << sizes[2] << " out_dir=" << dir.string() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string in;
  std::string out;
};

int cmd_convert(const ConvertArgs& a) {
  const std::string in_path = resolve(a.in);
  std::ifstream in(in_path);
  if (!in) throw DataError("cannot open " + in_path);
  const std::string out_path = resolve(a.out);
  ensure_parent_dir(out_path);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot open " + out_path + " for writing");
  std::ofstream errs;  // sidecar opened lazily on the first error
  const std::string err_path = out_path + ".errors.jsonl";

  std::string line;
  std::size_t lineno = 0, converted = 0, failed = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string sentence, fol_text;
    std::string error;
    if (line[0] == '{') {
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("fol"))
        error = "bad JSON line (needs a \"fol\" field)";
      else {
        sentence = j.value("sentence", "");
        fol_text = j["fol"].get<std::string>();
      }
    } else {
      fol_text = line;  // raw Boxer-style FOL, one formula per line
    }

    json row;
    if (error.empty()) {
      try {
        auto f = fol::normalize_universal(fol::parse_fol(fol_text));
        lin::TokenSequence ts = lin::linearize(f, corpus::kMaxTargetLen);
        std::string cats;
        for (lin::Category c : ts.categories) cats += lin::category_letter(c);
        row["sentence"] = sentence;
        row["fol"] = fol_text;
        row["mapping"] = join(ts.tokens);
        row["categories"] = cats;
      } catch (const std::exception& e) {
        error = e.what();
      }
    }
    if (error.empty()) {
      out << row.dump() << "\n";
      ++converted;
    } else {
      if (!errs.is_open()) errs.open(err_path);
      errs << json{{"line", lineno}, {"error", error}}.dump() << "\n";
      ++failed;
    }
  }

  Manifest man;
  man.command = "convert";
  man.argv = g_argv;
  man.add_input(in_path);
  man.write(out_path + ".manifest.json");
  std::cout << "converted=" << converted << " failed=" << failed << " out=" << out_path
            << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string train;
  std::string dev;
  std::string out_dir;
  TrainFlags flags;
};

int cmd_train(const TrainArgs& a) {
  const trainer::TrainConfig tc = make_train_config(a.flags);

  const std::string train_path = resolve(a.train);
  auto train_raw = load_corpus(train_path);
  if (train_raw.empty()) throw DataError("train corpus is empty: " + train_path);
  std::string dev_path;
  auto dev_raw = train_raw;  // default: score memorization of the training set
  if (!a.dev.empty()) {
    dev_path = resolve(a.dev);
    dev_raw = load_corpus(dev_path);
  }

  corpus::Vocabs vocabs;
  std::vector<corpus::Example> train_ex, dev_ex;
  try {
    vocabs = corpus::build_vocabs(train_raw, a.flags.min_freq);
    train_ex = trainer::encode_all(train_raw, vocabs, tc.align_anchor);
    dev_ex = trainer::encode_all(dev_raw, vocabs, tc.align_anchor);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }

  const fs::path dir = resolve(a.out_dir);
  fs::create_directories(dir);
  Manifest man;
  man.command = "train";
  man.argv = g_argv;
  man.config = tc.to_kv();
  man.config["min_freq"] = std::to_string(a.flags.min_freq);
  man.seeds = {tc.seed};
  man.add_input(train_path);
  if (!dev_path.empty()) man.add_input(dev_path);
  man.write((dir / "manifest.json").string());
  write_file((dir / "vocab.txt").string(), vocabs.serialize());

  std::ofstream log((dir / "train.log").string());
  struct Tee : std::ostream, std::streambuf {
    std::ostream &a, &b;
    Tee(std::ostream& a_, std::ostream& b_) : std::ostream(this), a(a_), b(b_) {}
    int overflow(int c) override {
      if (c != EOF) {
        a.put(static_cast<char>(c));
        b.put(static_cast<char>(c));
      }
      return c;
    }
    int sync() override {
      a.flush();
      b.flush();
      return 0;
    }
  } tee(std::cout, log);

  model::Model m(tc.model, vocabs, tc.seed);
  const std::string ckpt = (dir / "checkpoint.ck").string();
  trainer::TrainResult res = trainer::train(m, train_ex, dev_ex, tc, ckpt, &tee);
  tee << "done best_epoch=" << res.best_epoch << " best_dev_f1=" << format_double(res.best_dev_f1)
      << " stopped_early=" << (res.stopped_early ? 1 : 0) << " checkpoint=" << ckpt << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

struct DecodeArgs {
  std::string checkpoint;
  std::string in;
  std::string out;
  std::string vocab;
};

int cmd_decode(const DecodeArgs& a) {
  const std::string ck_path = resolve(a.checkpoint);
  model::Model m = [&] {
    try {
      if (!a.vocab.empty())
        return model::Model::load(ck_path,
                                  corpus::Vocabs::deserialize(read_file(resolve(a.vocab))));
      return model::Model::load(ck_path);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }();

  const std::string in_path = resolve(a.in);
  std::ifstream in(in_path);
  if (!in) throw DataError("cannot open " + in_path);
  const std::string out_path = resolve(a.out);
  ensure_parent_dir(out_path);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot open " + out_path + " for writing");

  std::string line;
  std::size_t decoded = 0, failed = 0;
  while (std::getline(in, line)) {
    std::string sentence = line;
    if (!line.empty() && line[0] == '{') {
      json j = json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.contains("sentence")) sentence = j["sentence"].get<std::string>();
    }
    const std::vector<std::string> tokens = tokenize_sentence(sentence);
    if (tokens.size() > corpus::kMaxSentenceLen) {
      out << "\tERROR sentence has " << tokens.size() << " tokens, cap is "
          << corpus::kMaxSentenceLen << "\n";
      ++failed;
      continue;
    }
    lin::TokenSequence ts = m.greedy_decode(tokens);
    out << join(ts.tokens) << '\t' << (ts.unclosed ? "UNCLOSED" : "OK") << "\n";
    ++decoded;
  }

  Manifest man;
  man.command = "decode";
  man.argv = g_argv;
  man.config = m.config().to_kv();
  man.add_input(ck_path);
  man.add_input(in_path);
  man.write(out_path + ".manifest.json");
  std::cout << "decoded=" << decoded << " failed=" << failed << " out=" << out_path << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string gold;
  std::string pred;
  std::string out;
  std::string json_out;
  bool exhaustive = false;
  std::uint64_t seed = 0;
};

int cmd_score(const ScoreArgs& a) {
  const std::string gold_path = resolve(a.gold);
  const auto gold_raw = load_corpus(gold_path);

  const std::string pred_path = resolve(a.pred);
  std::ifstream pin(pred_path);
  if (!pin) throw DataError("cannot open " + pred_path);
  std::vector<std::string> pred_lines;
  std::string line;
  while (std::getline(pin, line)) pred_lines.push_back(line);
  if (pred_lines.size() != gold_raw.size())
    throw DataError("line count mismatch: " + std::to_string(gold_raw.size()) + " gold vs " +
                    std::to_string(pred_lines.size()) + " pred");

  std::vector<metric::CorpusItem> items;
  items.reserve(gold_raw.size());
  for (std::size_t i = 0; i < gold_raw.size(); ++i) {
    metric::CorpusItem it;
    lin::TokenSequence gold_ts;
    try {
      auto gf = fol::normalize_universal(fol::parse_fol(gold_raw[i].fol));
      gold_ts = lin::linearize(gf);
      it.gold = lin::delinearize(gold_ts);  // canonical scope placement on both sides
    } catch (const std::exception& e) {
      throw DataError(gold_path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    const std::string mapping = pred_lines[i].substr(0, pred_lines[i].find('\t'));
    try {
      lin::TokenSequence ts = lin::sequence_from_text(mapping);
      it.pred = lin::delinearize(ts);
      it.string_equal = ts.tokens == gold_ts.tokens;
    } catch (const std::exception&) {
      it.pred = nullptr;  // malformed predictions score zero
    }
    it.input_len = static_cast<int>(tokenize_sentence(gold_raw[i].sentence).size());
    items.push_back(std::move(it));
  }

  metric::CorpusReport report;
  if (!items.empty()) {
    try {
      report = metric::score_corpus(items, a.exhaustive, a.seed);
    } catch (const metric::InstanceTooLarge& e) {
      throw DataError(std::string("--exhaustive: ") + e.what());
    }
  }

  const std::string text = trainer::report_text(report);
  std::cout << text;
  if (!a.out.empty()) {
    const std::string out_path = resolve(a.out);
    ensure_parent_dir(out_path);
    write_file(out_path, text);
    Manifest man;
    man.command = "score";
    man.argv = g_argv;
    man.seeds = {a.seed};
    man.add_input(gold_path);
    man.add_input(pred_path);
    man.write(out_path + ".manifest.json");
  }
  if (!a.json_out.empty()) {
    const std::string jp = resolve(a.json_out);
    ensure_parent_dir(jp);
    write_file(jp, trainer::report_json(report));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  double eps = 1e-5;
  double tol = 1e-4;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const auto rows = trainer::gradient_suite(a.eps, a.tol, a.corrupt);
  for (const auto& r : rows)
    std::cout << "variant=" << r.variant << " term=" << r.term << " instance=" << r.instance
              << " worst=" << format_double(r.worst) << " pass=" << (r.pass ? 1 : 0) << "\n";
  const bool ok = trainer::all_pass(rows);
  std::cout << "gradcheck=" << (ok ? "pass" : "fail") << " rows=" << rows.size()
            << " eps=" << format_double(a.eps) << " tol=" << format_double(a.tol) << std::endl;
  return ok ? 0 : 3;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string train;
  std::string dev;
  std::string test;
  std::string out_dir;
  std::string variants;
  int num_seeds = 3;
  bool exhaustive = false;
  TrainFlags flags;
};

int cmd_ablate(const AblateArgs& a) {
  trainer::AblationConfig cfg;
  cfg.base = make_train_config(a.flags);
  cfg.num_seeds = a.num_seeds;
  cfg.min_freq = a.flags.min_freq;
  cfg.exhaustive_metric = a.exhaustive;
  if (a.num_seeds < 1) throw UsageError("ablate: --seeds must be positive");
  if (!a.variants.empty()) {
    std::string cur;
    for (char c : a.variants + ",") {
      if (c == ',') {
        if (!cur.empty()) cfg.variants.push_back(parse_variant(cur));
        cur.clear();
      } else
        cur += c;
    }
  }

  corpus::Splits splits;
  splits.train = load_corpus(resolve(a.train));
  if (!a.dev.empty()) splits.dev = load_corpus(resolve(a.dev));
  splits.test = load_corpus(resolve(a.test));
  if (splits.train.empty() || splits.test.empty())
    throw DataError("ablate: train and test corpora must be nonempty");

  const fs::path dir = resolve(a.out_dir);
  fs::create_directories(dir);
  Manifest man;
  man.command = "ablate";
  man.argv = g_argv;
  man.config = cfg.base.to_kv();
  man.config["num_seeds"] = std::to_string(a.num_seeds);
  man.config["exhaustive"] = a.exhaustive ? "1" : "0";
  for (int k = 0; k < a.num_seeds; ++k)
    man.seeds.push_back(cfg.base.seed + static_cast<std::uint64_t>(k));
  man.add_input(resolve(a.train));
  if (!a.dev.empty()) man.add_input(resolve(a.dev));
  man.add_input(resolve(a.test));
  man.write((dir / "manifest.json").string());

  try {
    trainer::run_ablation(splits, cfg, dir.string(), &std::cout);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  std::cout << read_file((dir / "table.txt").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) g_argv.push_back(argv[i]);

  CLI::App app{"sentence-to-FOL toolkit: data, training, decoding, scoring"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate a synthetic corpus");
  cgen->add_option("--out", gen.out, "output JSONL path");
  cgen->add_option("--out-dir", gen.out_dir, "directory for train/dev/test JSONL");
  cgen->add_option("--split", gen.split, "train,dev,test counts for --out-dir");
  cgen->add_option("--count", gen.count, "number of pairs for --out");
  cgen->add_option("--seed", gen.seed, "generator seed");
  cgen->add_option("--profile", gen.profile, "default, simple, shallow, deep");

  ConvertArgs conv;
  CLI::App* cconv = app.add_subcommand("convert", "FOL text or JSONL to mapping lines");
  cconv->add_option("--in", conv.in, "input file")->required();
  cconv->add_option("--out", conv.out, "output JSONL")->required();

  TrainArgs tr;
  CLI::App* ctrain = app.add_subcommand("train", "train one model");
  ctrain->add_option("--train", tr.train, "training corpus JSONL")->required();
  ctrain->add_option("--dev", tr.dev, "dev corpus JSONL (defaults to the training set)");
  ctrain->add_option("--out", tr.out_dir, "output directory")->required();
  add_train_flags(ctrain, tr.flags);

  DecodeArgs dec;
  CLI::App* cdec = app.add_subcommand("decode", "greedy-decode sentences");
  cdec->add_option("--checkpoint", dec.checkpoint, "model checkpoint")->required();
  cdec->add_option("--in", dec.in, "sentences, one per line (or JSONL)")->required();
  cdec->add_option("--out", dec.out, "predictions TSV")->required();
  cdec->add_option("--vocab", dec.vocab, "vocab file to validate against the checkpoint");

  ScoreArgs sc;
  CLI::App* csc = app.add_subcommand("score", "score predictions against gold");
  csc->add_option("--gold", sc.gold, "gold corpus JSONL")->required();
  csc->add_option("--pred", sc.pred, "predictions TSV from decode")->required();
  csc->add_option("--out", sc.out, "report text path");
  csc->add_option("--json", sc.json_out, "report JSON path");
  csc->add_flag("--exhaustive", sc.exhaustive, "exact alignment search");
  csc->add_option("--seed", sc.seed, "greedy aligner seed");

  GradcheckArgs gc;
  CLI::App* cgc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  cgc->add_option("--eps", gc.eps, "central-difference step");
  cgc->add_option("--tol", gc.tol, "relative tolerance");
  cgc->add_flag("--corrupt", gc.corrupt, "negative control: break a backward rule");

  AblateArgs ab;
  CLI::App* cab = app.add_subcommand("ablate", "train all variants and tabulate");
  cab->add_option("--train", ab.train, "training corpus JSONL")->required();
  cab->add_option("--dev", ab.dev, "dev corpus JSONL");
  cab->add_option("--test", ab.test, "test corpus JSONL")->required();
  cab->add_option("--out", ab.out_dir, "output directory")->required();
  cab->add_option("--variants", ab.variants, "comma-separated subset (default: all six)");
  cab->add_option("--seeds", ab.num_seeds, "number of seeds per variant");
  cab->add_flag("--exhaustive", ab.exhaustive, "exact alignment search in scoring");
  add_train_flags(cab, ab.flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << std::endl;
    return 1;
  }

  try {
    if (cgen->parsed()) return cmd_gen(gen);
    if (cconv->parsed()) return cmd_convert(conv);
    if (ctrain->parsed()) return cmd_train(tr);
    if (cdec->parsed()) return cmd_decode(dec);
    if (csc->parsed()) return cmd_score(sc);
    if (cgc->parsed()) return cmd_gradcheck(gc);
    if (cab->parsed()) return cmd_ablate(ab);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << std::endl;
    return 3;
  }
}
