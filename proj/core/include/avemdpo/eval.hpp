#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "avemdpo/bench.hpp"
#include "avemdpo/jsonl.hpp"
#include "avemdpo/labels.hpp"
#include "avemdpo/prefdata.hpp"
#include "avemdpo/rng.hpp"
#include "avemdpo/scorer.hpp"

// Scoring and analysis: answer extraction, the benchmark's accuracy and
// Yes/No precision/recall definitions, emotion-level recall metrics,
// stress-subtask breakdowns, adversarial input-swap likelihood shifts
// with kernel density estimates, attention redistribution, and the
// contrastive-decoding baseline.

namespace avemdpo::eval {

inline constexpr int kAbstain = -1;

// Maps raw model output text to a choice index. Tries, in order: a
// leading option letter (A-D, case and punctuation tolerant, but a bare
// letter followed by more words is not treated as an option letter),
// exact text match, then whole-word normalized containment. Ambiguous
// containment abstains; abstentions score as incorrect everywhere.
int extract_choice(const std::string& raw_output,
                   const std::vector<std::string>& choices);

struct Prediction {
  std::string item_id;
  std::string raw_output;
  int extracted_index = kAbstain;

  Json to_json() const;
  static Prediction from_json(const Json& j);
};

void save_predictions(const std::filesystem::path& path,
                      const std::vector<Prediction>& predictions);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

// The benchmark's Yes/No scheme, implemented as published and documented
// as such: precision is accuracy over answer-Yes items, recall is
// accuracy over answer-No items (not the classical confusion-matrix
// quantities), and f1 is their harmonic mean. A component whose item set
// is empty is reported absent, as is f1 in that case.
struct YesNoMetrics {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  int n_yes = 0;
  int n_no = 0;

  Json to_json() const;
};

// Predictions are matched to items by id; a missing prediction counts as
// incorrect. Throws if any item is not a 2-choice Yes/No item.
YesNoMetrics yes_no_metrics(const std::vector<Prediction>& predictions,
                            const std::vector<bench::BenchmarkItem>& items);

// Unweighted average recall over the classes present in `gold`, and
// weighted (= overall) accuracy. Throws on empty input.
std::pair<double, double> uar_war(const std::vector<EmotionLabel>& predicted,
                                  const std::vector<EmotionLabel>& gold);

// Support-weighted mean of per-class one-vs-rest F1. Throws on empty.
double weighted_f1(const std::vector<EmotionLabel>& predicted,
                   const std::vector<EmotionLabel>& gold);

// Accuracy per (stress modality, subtask) cell plus the unweighted
// average of the audio and visual cells. Cells without items are absent.
struct StressBreakdown {
  struct Cell {
    int count = 0;
    int correct = 0;
    std::optional<double> accuracy;  // absent when count == 0
  };
  // Indexed by [audio=0 / visual=1][subtask - 1].
  std::array<std::array<Cell, 3>, 2> cells{};

  std::optional<double> accuracy(BenchTask task, StressSubtask sub) const;
  // Mean of the two modality accuracies that are present.
  std::optional<double> averaged(StressSubtask sub) const;
  Json to_json() const;
};

StressBreakdown stress_breakdown(const std::vector<Prediction>& predictions,
                                 const std::vector<bench::BenchmarkItem>& items);

// Per-task rollup for a full benchmark run. Four-choice tasks get
// emotion-level uar/war/weighted-F1 where an abstention is mapped to a
// deterministic wrong label; Yes/No tasks get the scheme above.
struct TaskMetrics {
  int count = 0;
  double accuracy = 0.0;
  std::optional<YesNoMetrics> yes_no;
  std::optional<double> uar;
  std::optional<double> war;
  std::optional<double> wf1;

  Json to_json() const;
};

struct EvalReport {
  int total = 0;
  double overall_accuracy = 0.0;
  std::array<std::optional<TaskMetrics>, kNumBenchTasks> tasks;
  StressBreakdown stress;

  Json to_json() const;
};

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<bench::BenchmarkItem>& items);

// Gaussian-kernel density estimate evaluated on a fixed grid. Bandwidth
// is Scott's rule per sample; the grid is shared across the two samples
// being compared, 512 points spanning both ranges plus three bandwidths.
struct KdeCurve {
  std::vector<double> x;
  std::vector<double> density;
  double bandwidth = 0.0;
};

KdeCurve kde(const std::vector<double>& sample, const std::vector<double>& grid);
std::vector<double> shared_grid(const std::vector<double>& a,
                                const std::vector<double>& b, int points = 512);
double scott_bandwidth(const std::vector<double>& sample);

// Symmetrized KL between two densities on the same grid, after flooring
// at 1e-12 and renormalizing. Zero iff the curves are identical.
double symmetric_kl(const KdeCurve& p, const KdeCurve& q);

// One tokenized single-modality reasoning item for the likelihood and
// attention analyses.
struct ScoredItem {
  std::string id;
  std::vector<int> prompt;
  std::vector<int> correct_tokens;  // the correct choice as response tokens
  std::string av_ref;
  ModalityTag modality_tag = ModalityTag::kA;  // kAV is invalid here
};

struct ShiftReport {
  double mean_original = 0.0;
  double mean_adversarial = 0.0;
  KdeCurve kde_original;
  KdeCurve kde_adversarial;
  double divergence = 0.0;

  Json to_json() const;
};

// Replaces each item's prompt-irrelevant modality with a uniformly drawn
// pool clip (which may be the original) and compares the log-likelihood
// of the correct choice before and after. `swap` must be the irrelevant
// modality of every item.
ShiftReport adversarial_shift(scorer::Model& model,
                              const std::vector<ScoredItem>& items,
                              const prefdata::AvStore& pool, ModalityTag swap,
                              uint64_t seed);

// Attention-share medians per prompt-modality group, before vs after.
struct AttentionComparison {
  struct Group {
    ModalityTag tag = ModalityTag::kA;
    int count = 0;
    scorer::AttentionShare median_before;
    scorer::AttentionShare median_after;
    scorer::AttentionShare delta;  // after minus before, per component
  };
  std::vector<Group> groups;

  Json to_json() const;
};

AttentionComparison attention_comparison(scorer::Model& before,
                                         scorer::Model& after,
                                         const std::vector<ScoredItem>& items,
                                         const prefdata::AvStore& pool);

// Contrastive decoding over explicit choices: each choice is scored by
// logp(choice | AV) - gamma_cd * logp(choice | diffused AV) and the
// argmax index (first on ties) is returned with both score sets.
struct ContrastiveResult {
  int index = 0;
  std::vector<double> original_logp;
  std::vector<double> diffused_logp;
};

ContrastiveResult contrastive_decode(scorer::Model& model,
                                     const scorer::TokenStreams& base,
                                     const std::vector<std::vector<int>>& choices,
                                     double gamma_cd,
                                     const prefdata::StrategyConfig& diffusion,
                                     uint64_t seed);

}  // namespace avemdpo::eval
