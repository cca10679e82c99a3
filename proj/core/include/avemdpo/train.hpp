#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "avemdpo/losses.hpp"
#include "avemdpo/prefdata.hpp"
#include "avemdpo/scorer.hpp"

// Deterministic preference-optimization loop. The policy is the only thing
// that moves; the reference and the text prior are scored once per record
// and cached as constants. Gradients accumulate across micro-batches in
// the parameters themselves, and the optimizer divides by the number of
// records in the window, so accumulation is an exact mean.

namespace avemdpo::train {

// Objective variants selectable from config alone. kNoPmp drops the
// input-preference term, kNoErp keeps a single (visually-relevant)
// rejection, kNoTpd zeroes the text-prior penalty.
enum class Ablation { kFull, kNoPmp, kNoErp, kNoTpd };

Ablation ablation_from_string(std::string_view s);
std::string_view to_string(Ablation a);

// Whitespace-split tokenizer onto [0, vocab): an all-digit word is taken
// literally modulo vocab (synthetic data uses this to plant exact token
// streams), anything else hashes via FNV-1a.
std::vector<int> encode_text(const std::string& text, int vocab);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int grad_accum_steps = 1;
  int epochs = 1;
  uint64_t seed = 0;
  double momentum = 0.0;
  // Optimizer-step cadence for the frozen-drift guard and checkpoint
  // files; 0 means final checkpoint only.
  int checkpoint_every = 0;
  Ablation ablation = Ablation::kFull;
  losses::LossConfig loss;
  scorer::ScorerConfig scorer;
  scorer::AdapterConfig adapter;
  // Empty: no checkpoint files are written (the guard still runs).
  std::string checkpoint_dir;

  // learning_rate may be exactly 0 for no-op diagnostics runs.
  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
  // "toy" (batch 8, lr 1e-3) or "paper-c3" (lr 5e-7, batch 2,
  // 4-step accumulation, one epoch).
  static TrainConfig profile(std::string_view name);
};

struct TrainDataset {
  std::vector<prefdata::PreferenceRecord> records;
  prefdata::AvStore pool;
  prefdata::AvStore derived;

  const prefdata::AvClip& clip(const std::string& ref) const {
    return prefdata::resolve_ref(pool, derived, ref);
  }
};

// One line per optimizer step; all values are means over the records that
// entered that update window.
struct StepLog {
  int64_t step = 0;
  double total = 0.0;
  double tpd_term = 0.0;
  double pmp_term = 0.0;
  double reward_margin = 0.0;
  // Fraction of records whose implicit reward beats both rejections;
  // a zero margin counts half, so an untrained policy sits at 0.5.
  double preference_accuracy = 0.0;

  Json to_json() const;
  static StepLog from_json(const Json& j);
};

void save_history(const std::filesystem::path& path,
                  const std::vector<StepLog>& history);
std::vector<StepLog> load_history(const std::filesystem::path& path);

// Log-likelihoods that cannot change during training.
struct FrozenScores {
  double ref_w = 0.0;
  double ref_vr = 0.0;
  double ref_er = 0.0;
  double ref_w_neg = 0.0;
  double text_w = 0.0;
  double text_vr = 0.0;
  double text_er = 0.0;
};

struct TrainState {
  TrainConfig cfg;
  scorer::ModelSet models;
  scorer::Checkpoint policy_baseline;
  scorer::Checkpoint reference_baseline;
  std::vector<autograd::Matrix> velocity;  // parallel to trainable_params()
  int64_t step = 0;
  int64_t records_consumed = 0;
  std::unordered_map<std::string, FrozenScores> frozen_cache;

  // Window accumulators between optimizer updates.
  int accum_micros = 0;
  int accum_records = 0;
  double accum_total = 0.0;
  double accum_tpd = 0.0;
  double accum_pmp = 0.0;
  double accum_margin = 0.0;
  double accum_pref = 0.0;
};

TrainState init_state(const TrainConfig& cfg);

// Forward-only scoring of one record under all three roles; frozen values
// come from the cache after the first visit.
losses::ScoredSequences score_record(TrainState& state,
                                     const TrainDataset& data,
                                     const prefdata::PreferenceRecord& rec);

// Processes one micro-batch (list of indexes into data.records). Returns
// a log entry when this micro-batch completed an accumulation window and
// an optimizer update was applied. Throws std::runtime_error on a
// non-finite loss after dumping state to cfg.checkpoint_dir if set.
std::optional<StepLog> train_step(TrainState& state, const TrainDataset& data,
                                  const std::vector<size_t>& micro_batch);

// Flushes a partially filled accumulation window, if any.
std::optional<StepLog> flush_pending_update(TrainState& state);

void save_train_checkpoint(const std::filesystem::path& path,
                           const TrainState& state);
// Rebuilds models from cfg, then overwrites policy weights, velocity and
// counters from the file. The file's embedded config must equal cfg in
// everything except checkpoint_dir, which is run placement only.
TrainState load_train_checkpoint(const std::filesystem::path& path,
                                 const TrainConfig& cfg);

struct TrainOutcome {
  TrainState state;
  std::vector<StepLog> history;
  scorer::GuardReport guard;
};

// Runs cfg.epochs passes with a per-epoch shuffled order derived from
// cfg.seed. With resume_from set, fast-forwards to the stored position and
// continues; the concatenated histories of an interrupted and a resumed
// run equal the uninterrupted history bit for bit.
TrainOutcome train_loop(const TrainConfig& cfg, const TrainDataset& data,
                        const std::filesystem::path& resume_from = {});

}  // namespace avemdpo::train
