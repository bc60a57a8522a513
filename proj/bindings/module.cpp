#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nl2fol/corpus.hpp"
#include "nl2fol/fol.hpp"
#include "nl2fol/linearize.hpp"
#include "nl2fol/metric.hpp"
#include "nl2fol/model.hpp"
#include "nl2fol/trainer.hpp"
#include "nl2fol/util.hpp"

namespace py = pybind11;
using namespace nl2fol;

namespace {

fol::FormulaPtr parse_norm(const std::string& text) {
  return fol::normalize_universal(fol::parse_fol(text));
}

py::dict report_dict(const metric::CorpusReport& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["accuracy"] = r.accuracy;
  d["accuracy_str"] = r.accuracy_str;
  d["examples"] = r.examples;
  d["exact"] = r.exact;
  d["exact_str"] = r.exact_str;
  d["matched"] = r.matched;
  d["gold_pairs"] = r.gold_pairs;
  d["pred_pairs"] = r.pred_pairs;
  py::list buckets;
  for (const auto& b : r.buckets) {
    py::dict bd;
    bd["lo"] = b.lo;
    bd["hi"] = b.hi;
    bd["examples"] = b.examples;
    bd["f1"] = b.f1;
    bd["matched"] = b.matched;
    bd["gold_pairs"] = b.gold_pairs;
    bd["pred_pairs"] = b.pred_pairs;
    buckets.append(bd);
  }
  d["buckets"] = buckets;
  return d;
}

corpus::GeneratorProfile profile_named(const std::string& name) {
  corpus::GeneratorProfile p;
  if (name == "default") return p;
  if (name == "simple") return {.max_entities = 1, .max_negation_depth = 0};
  if (name == "shallow") return {.max_entities = 4, .max_negation_depth = 0};
  if (name == "deep") return {.max_entities = 6, .max_negation_depth = 2};
  throw std::invalid_argument("unknown profile: " + name);
}

}  // namespace

PYBIND11_MODULE(_nl2fol, m) {
  m.doc() = "sentence-to-FOL toolkit: linearization, alignment metric, seq2seq models";
  m.attr("__version__") = kVersion;

  m.def(
      "linearize",
      [](const std::string& fol_text) { return lin::linearize(parse_norm(fol_text)).text(); },
      py::arg("fol"), "FOL text to its mapping line");

  m.def(
      "categories",
      [](const std::string& fol_text) {
        auto ts = lin::linearize(parse_norm(fol_text));
        std::string out;
        for (lin::Category c : ts.categories) out += lin::category_letter(c);
        return out;
      },
      py::arg("fol"), "category letter per mapping token (U, B, V, S)");

  m.def(
      "delinearize",
      [](const std::string& mapping) {
        return fol::print_fol(lin::delinearize(lin::sequence_from_text(mapping)));
      },
      py::arg("mapping"), "mapping line back to canonical FOL text");

  m.def(
      "alpha_equal",
      [](const std::string& a, const std::string& b) {
        return fol::alpha_equal(parse_norm(a), parse_norm(b));
      },
      py::arg("a"), py::arg("b"), "formula equality up to bound-variable renaming");

  m.def(
      "score",
      [](const std::string& gold, const std::string& pred, bool exhaustive, std::uint64_t seed) {
        fol::FormulaPtr p;
        try {
          p = parse_norm(pred);
        } catch (const std::exception&) {
          // malformed prediction scores zero
        }
        auto r = metric::score(parse_norm(gold), p, exhaustive, seed);
        py::dict d;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        d["f1"] = r.f1;
        d["exact"] = r.exact;
        d["matched"] = r.matched;
        d["gold_pairs"] = r.gold_pairs;
        d["pred_pairs"] = r.pred_pairs;
        return d;
      },
      py::arg("gold"), py::arg("pred"), py::arg("exhaustive") = false, py::arg("seed") = 0,
      "alignment-based partial-match score of two FOL texts");

  m.def(
      "score_corpus",
      [](const std::vector<std::tuple<std::string, std::string, int>>& rows, bool exhaustive,
         std::uint64_t seed) {
        std::vector<metric::CorpusItem> items;
        for (const auto& [gold, mapping, input_len] : rows) {
          metric::CorpusItem it;
          auto gf = parse_norm(gold);
          auto gold_tokens = lin::linearize(gf).tokens;
          it.gold = std::move(gf);
          it.input_len = input_len;
          try {
            auto ts = lin::sequence_from_text(mapping);
            it.pred = lin::delinearize(ts);
            it.string_equal = ts.tokens == gold_tokens;
          } catch (const std::exception&) {
            it.pred = nullptr;
          }
          items.push_back(std::move(it));
        }
        return report_dict(metric::score_corpus(items, exhaustive, seed));
      },
      py::arg("rows"), py::arg("exhaustive") = false, py::arg("seed") = 0,
      "corpus-level report over (gold_fol, predicted_mapping, input_len) rows");

  m.def(
      "generate",
      [](std::size_t count, std::uint64_t seed, const std::string& profile) {
        Rng rng(seed);
        auto items = corpus::synth_corpus(rng, count, profile_named(profile));
        py::list out;
        for (const auto& ex : items) {
          py::dict d;
          d["sentence"] = ex.sentence;
          d["fol"] = ex.fol;
          out.append(d);
        }
        return out;
      },
      py::arg("count"), py::arg("seed") = 0, py::arg("profile") = "default",
      "seeded synthetic sentence-FOL pairs");

  m.def(
      "perturb_mapping",
      [](const std::string& mapping, std::uint64_t seed) {
        auto ts = lin::sequence_from_text(mapping);
        Rng rng(seed);
        auto perm = rng.permutation(corpus::kVariableLetters);
        for (std::size_t i = 0; i < ts.size(); ++i) {
          if (ts.categories[i] != lin::Category::V) continue;
          int idx = ts.tokens[i][0] - 'A';
          ts.tokens[i] = std::string(1, static_cast<char>('A' + perm[idx]));
        }
        return ts.text();
      },
      py::arg("mapping"), py::arg("seed") = 0,
      "seeded permutation of the variable letters in a mapping line");

  py::class_<model::Model>(m, "Model")
      .def_static("load", [](const std::string& path) { return model::Model::load(path); },
                  py::arg("path"), "model from a checkpoint with embedded vocabularies")
      .def_property_readonly(
          "variant", [](const model::Model& m_) { return model::to_string(m_.config().variant); })
      .def_property_readonly("config",
                             [](const model::Model& m_) {
                               py::dict d;
                               for (const auto& [k, v] : m_.config().to_kv()) d[py::cast(k)] = v;
                               return d;
                             })
      .def(
          "decode",
          [](model::Model& m_, const std::string& sentence) {
            auto ts = m_.greedy_decode(tokenize_sentence(sentence));
            py::dict d;
            d["mapping"] = ts.text();
            d["unclosed"] = ts.unclosed;
            try {
              d["fol"] = fol::print_fol(lin::delinearize(ts));
            } catch (const std::exception&) {
              d["fol"] = py::none();
            }
            return d;
          },
          py::arg("sentence"), "greedy decode of one sentence");

  m.def(
      "train",
      [](const std::string& train_path, const std::string& variant, const std::string& dev_path,
         const std::string& checkpoint, int epochs, int batch_size, double lr, std::uint64_t seed,
         int embed_dim, int hidden, int pred_embed, int scope_embed, int min_freq, bool perturb,
         int eval_every, bool stop_on_perfect_dev) {
        auto train_raw = corpus::read_jsonl(train_path);
        auto dev_raw = dev_path.empty() ? train_raw : corpus::read_jsonl(dev_path);
        auto vocabs = corpus::build_vocabs(train_raw, min_freq);

        trainer::TrainConfig cfg;
        cfg.model.variant = model::variant_from_string(variant);
        cfg.model.embed_dim = embed_dim;
        cfg.model.hidden = hidden;
        cfg.model.pred_embed = pred_embed;
        cfg.model.scope_embed = scope_embed;
        cfg.model.validate();
        cfg.adam.lr = lr;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.perturb = perturb;
        cfg.seed = seed;
        cfg.eval_every = eval_every;
        cfg.stop_on_perfect_dev = stop_on_perfect_dev;

        auto train_set = trainer::encode_all(train_raw, vocabs);
        auto dev_set = trainer::encode_all(dev_raw, vocabs);
        model::Model mdl(cfg.model, vocabs, seed);
        if (!checkpoint.empty()) {
          auto dir = std::filesystem::path(checkpoint).parent_path();
          if (!dir.empty()) std::filesystem::create_directories(dir);
        }
        auto res = trainer::train(mdl, train_set, dev_set, cfg, checkpoint);

        py::dict d;
        d["epochs"] = res.epochs.size();
        d["best_dev_f1"] = res.best_dev_f1;
        d["best_epoch"] = res.best_epoch;
        d["stopped_early"] = res.stopped_early;
        d["final_loss"] = res.epochs.empty() ? 0.0 : res.epochs.back().loss.total;
        return d;
      },
      py::arg("train_path"), py::arg("variant") = "vanilla", py::arg("dev_path") = "",
      py::arg("checkpoint") = "", py::arg("epochs") = 100, py::arg("batch_size") = 32,
      py::arg("lr") = 1e-3, py::arg("seed") = 0, py::arg("embed_dim") = 100,
      py::arg("hidden") = 400, py::arg("pred_embed") = 100, py::arg("scope_embed") = 50,
      py::arg("min_freq") = 2, py::arg("perturb") = false, py::arg("eval_every") = 1,
      py::arg("stop_on_perfect_dev") = false,
      "teacher-forced training on a JSONL corpus; returns the result summary");

  m.def("gradient_check",
        [](double eps, double tol) {
          auto rows = trainer::gradient_suite(eps, tol);
          py::list out;
          for (const auto& r : rows) {
            py::dict d;
            d["variant"] = r.variant;
            d["term"] = r.term;
            d["instance"] = r.instance;
            d["worst"] = r.worst;
            d["pass"] = r.pass;
            out.append(d);
          }
          return out;
        },
        py::arg("eps") = 1e-5, py::arg("tol") = 1e-4,
        "finite-difference sweep over every variant and loss term");
}
