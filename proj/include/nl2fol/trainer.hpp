#ifndef NL2FOL_TRAINER_HPP
#define NL2FOL_TRAINER_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nl2fol/corpus.hpp"
#include "nl2fol/metric.hpp"
#include "nl2fol/model.hpp"

namespace nl2fol::trainer {

struct TrainConfig {
  model::ModelConfig model;
  ad::AdamConfig adam;
  int epochs = 100;
  int batch_size = 32;
  double clip_norm = 5.0;
  bool perturb = false;       // re-permute gold variable letters every epoch
  bool perturb_once = false;  // a single permutation up front instead
  lin::AnchorMode align_anchor = lin::AnchorMode::Earliest;
  std::uint64_t seed = 0;  // shuffling and perturbation streams
  int eval_every = 1;      // dev decode cadence, in epochs
  bool stop_on_perfect_dev = false;

  std::map<std::string, std::string> to_kv() const;
};

struct EpochRecord {
  int epoch = 0;             // 1-based
  model::LossValues loss;    // mean over the epoch's examples
  double dev_f1 = -1.0;      // -1 when this epoch was not evaluated
  std::size_t dev_exact = 0; // structural exact matches on dev
  bool best = false;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  double best_dev_f1 = -1.0;
  int best_epoch = -1;
  std::size_t dev_size = 0;
  bool stopped_early = false;
};

// Encodes every raw pair; throws on the first failure. `anchor` re-derives
// the alignment targets when the most-recent-occurrence convention is wanted.
std::vector<corpus::Example> encode_all(const std::vector<corpus::RawExample>& raw,
                                        const corpus::Vocabs& v,
                                        lin::AnchorMode anchor = lin::AnchorMode::Earliest);

struct EvalOutput {
  metric::CorpusReport report;
  std::vector<lin::TokenSequence> decoded;  // one per item, input order
};

// Greedy-decodes each item's sentence and scores it against the gold target.
// Predictions that fail to delinearize count as empty (zero matched pairs).
EvalOutput evaluate(model::Model& m, const std::vector<corpus::Example>& items,
                    bool exhaustive = false, std::uint64_t metric_seed = 0);

// Teacher-forced training loop: seeded shuffling, optional per-epoch variable
// perturbation, periodic dev decoding. The best-dev model is written to
// `checkpoint_path` (the final state when dev is never evaluated). Key=value
// epoch lines go to `log` when nonnull.
TrainResult train(model::Model& m, const std::vector<corpus::Example>& train_set,
                  const std::vector<corpus::Example>& dev_set, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "", std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// gradient suite
// ---------------------------------------------------------------------------

struct GradCheckRow {
  std::string variant;
  std::string term;      // total, ce, aux, dec, pos
  std::string instance;  // which fixed example
  double worst = 0.0;
  bool pass = false;
};

// Finite-difference sweep of every loss term of every variant on fixed tiny
// instances (narrow net, doubled init scale, two short targets; see tests).
// `corrupt` breaks the tanh backward rule for the sweep as a negative control.
std::vector<GradCheckRow> gradient_suite(double eps = 1e-5, double tol = 1e-4,
                                         bool corrupt = false);
bool all_pass(const std::vector<GradCheckRow>& rows);

// ---------------------------------------------------------------------------
// ablation driver
// ---------------------------------------------------------------------------

struct AblationConfig {
  TrainConfig base;                     // variant field is overridden per run
  std::vector<model::Variant> variants; // empty means all six
  int num_seeds = 3;                    // seeds base.seed .. base.seed+n-1
  int min_freq = 2;                     // input vocabulary cutoff
  bool exhaustive_metric = false;
};

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  bool perturb = false;
  metric::CorpusReport test;
  double best_dev_f1 = -1.0;
  std::string pred_file;
  std::string checkpoint;
};

struct AblationRow {
  std::string variant;
  double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;  // means over seeds
  int runs = 0;
};

// Trains variants x seeds on the splits, decodes and scores the test split,
// and stores artifacts under out_dir: checkpoints/, preds/, results.jsonl
// (appended after each run, so interruptions keep finished rows), table.txt,
// table.json. Rows already in results.jsonl with a matching configuration
// digest are reused instead of retrained.
std::vector<AblationRun> run_ablation(const corpus::Splits& splits, const AblationConfig& cfg,
                                      const std::string& out_dir, std::ostream* log = nullptr);

std::vector<AblationRow> aggregate_runs(const std::vector<AblationRun>& runs);
std::string render_table(const std::vector<AblationRow>& rows);

// Score-report serializations shared by the CLI and the ablation driver.
std::string report_json(const metric::CorpusReport& r);
std::string report_text(const metric::CorpusReport& r);

}  // namespace nl2fol::trainer

#endif  // NL2FOL_TRAINER_HPP
