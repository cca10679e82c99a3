#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avemdpo/annotator.hpp"
#include "avemdpo/jsonl.hpp"
#include "avemdpo/labels.hpp"
#include "avemdpo/rng.hpp"

// Preference-record construction. Each record pairs one chosen response
// with two typed rejected responses (obtained from an annotator) and one
// rejected AV input (obtained by negative sampling, then masked so only
// the prompt-relevant modality differs from the chosen input).

namespace avemdpo::prefdata {

struct AvClip {
  std::vector<int> audio;
  std::vector<int> video;
  EmotionLabel emotion = EmotionLabel::kNeutral;
};

// Clips addressed by stable string refs, insertion-ordered.
class AvStore {
 public:
  // ref must be fresh; returns it for convenience.
  const std::string& add(const std::string& ref, AvClip clip);
  const AvClip& get(const std::string& ref) const;
  bool contains(const std::string& ref) const;
  const std::vector<std::string>& refs() const { return refs_; }
  size_t size() const { return refs_.size(); }

  void save(const std::filesystem::path& path) const;
  static AvStore load(const std::filesystem::path& path);

 private:
  std::vector<std::string> refs_;
  std::map<std::string, AvClip> clips_;
};

struct StrategyConfig {
  NegativeSamplingKind kind = NegativeSamplingKind::kDifferentEmotion;
  // Forward-noise step for the diffusion strategy, on a 1000-step linear
  // schedule; midpoint by default.
  int noise_step = 500;
  // Vocabulary bounds for fresh or re-quantized tokens.
  int audio_vocab = 12;
  int video_vocab = 12;

  void validate() const;
  Json to_json() const;
  static StrategyConfig from_json(const Json& j);
};

// Candidate rejected AV input, before prompt-conditioned masking.
//   random_tensor     fresh uniform tokens, same shape as the chosen clip
//   random_video      uniform over pool entries other than chosen_ref
//   diffuse           chosen clip noised in a fixed embedding space at
//                     noise_step, then re-quantized to nearest tokens
//   different_emotion uniform over pool entries whose emotion differs
// An empty eligible pool is an error, never a silent fallback.
AvClip select_rejected_av(const AvStore& pool, const std::string& chosen_ref,
                          const StrategyConfig& strategy, Rng& rng);

// The diffusion transform by itself (also used by contrastive decoding):
// embeds each token in a fixed codebook, applies forward Gaussian noise
// at strategy.noise_step, and re-quantizes to the nearest code.
AvClip diffuse_clip(const AvClip& chosen, const StrategyConfig& strategy,
                    Rng& rng);

// Keeps the prompt-irrelevant side of the candidate identical to the
// chosen clip: an audio prompt (m=A) keeps the chosen video, a video
// prompt (m=V) keeps the chosen audio, an AV prompt keeps neither. The
// resulting mask tag is pmp_mask_for(m). Idempotent.
AvClip apply_prompt_modality_mask(const AvClip& chosen, AvClip candidate,
                                  ModalityTag m);

struct PreferenceRecord {
  std::string id;
  std::string prompt;
  ModalityTag modality_tag = ModalityTag::kAV;
  std::string y_w;
  std::string y_l_vr;
  std::string y_l_er;
  EmotionLabel emotion = EmotionLabel::kNeutral;
  std::string chosen_av_ref;
  std::string rejected_av_ref;
  NegativeSamplingKind strategy = NegativeSamplingKind::kDifferentEmotion;
  PmpMask pmp_mask = PmpMask::kNoneKept;

  // Rejections must differ from the chosen response; the mask tag must
  // match the prompt's modality.
  void validate() const;
  Json to_json() const;
  static PreferenceRecord from_json(const Json& j);
};

// What record construction starts from: a prompt with its chosen
// response and AV input.
struct PreferenceSource {
  std::string id;
  std::string av_ref;
  ModalityTag modality_tag = ModalityTag::kAV;
  std::string prompt;
  std::string y_w;
  EmotionLabel emotion = EmotionLabel::kNeutral;

  Json to_json() const;
  static PreferenceSource from_json(const Json& j);
};

void save_sources(const std::filesystem::path& path,
                  const std::vector<PreferenceSource>& sources);
// Errors name the 1-based line of the offending source row.
std::vector<PreferenceSource> load_sources(const std::filesystem::path& path);

struct BuildConfig {
  StrategyConfig strategy;
  int retry_limit = 2;  // annotator attempts per item before quarantine
  uint64_t seed = 0;
  std::filesystem::path templates_dir = "templates";
};

// One item. On unrecoverable annotator failure or invariant violation
// returns nullopt and fills *quarantine_entry with {id, reason,
// attempts}. The rejected clip is written to `derived` under
// "<source id>/rejected"; `pool` (chosen clips and sampling candidates)
// is never mutated, so item order cannot change any output.
std::optional<PreferenceRecord> build_preference_record(
    const PreferenceSource& src, annotator::AnnotatorClient& client,
    const AvStore& pool, AvStore& derived, const BuildConfig& cfg,
    Json* quarantine_entry);

struct BuildResult {
  std::vector<PreferenceRecord> records;
  std::vector<Json> quarantined;
  AvStore derived;  // synthesized rejected clips
};

// Whole dataset; per-item randomness is derived from (cfg.seed, item id)
// so item order and parallel execution cannot change the output.
BuildResult build_preference_dataset(
    const std::vector<PreferenceSource>& sources,
    annotator::AnnotatorClient& client, const AvStore& pool,
    const BuildConfig& cfg);

// Record refs point into either the corpus pool or the derived store.
const AvClip& resolve_ref(const AvStore& pool, const AvStore& derived,
                          const std::string& ref);

void save_records(const std::filesystem::path& path,
                  const std::vector<PreferenceRecord>& records);
// Errors name the 1-based line of the offending record.
std::vector<PreferenceRecord> load_records(const std::filesystem::path& path);

}  // namespace avemdpo::prefdata
