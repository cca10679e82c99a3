#pragma once

#include <optional>
#include <string>
#include <vector>

#include "avemdpo/annotator.hpp"
#include "avemdpo/jsonl.hpp"
#include "avemdpo/labels.hpp"
#include "avemdpo/rng.hpp"

// MCQA benchmark construction: caption each video per modality, verify
// the captions against the ground-truth emotion, generate task-templated
// questions, drop items a text-only model can already answer, balance the
// answer distribution, and report statistics.

namespace avemdpo::bench {

struct ManifestRow {
  std::string video_ref;
  EmotionLabel gt_emotion = EmotionLabel::kNeutral;
  std::optional<std::string> subtitle;
  // Videos without an audio track cannot feed audio-side tasks.
  bool has_audio = true;

  Json to_json() const;
  static ManifestRow from_json(const Json& j);
};

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path,
                   const std::vector<ManifestRow>& rows);

struct CaptionPair {
  std::string audio_caption;
  std::string video_caption;
  std::optional<EmotionLabel> audio_emotion;  // absent: no readable emotion
  std::optional<EmotionLabel> video_emotion;
  EmotionLabel gt_emotion = EmotionLabel::kNeutral;
};

struct CaptionVerdict {
  bool keep = false;            // at least one caption names the gt emotion
  bool audio_eligible = false;  // audio caption names the gt emotion
  bool video_eligible = false;
  bool agreement_yes = false;   // both captions name the gt emotion
};

CaptionVerdict verify_captions(const CaptionPair& pair);

struct BenchmarkItem {
  std::string id;
  std::string video_ref;
  BenchTask task = BenchTask::kReasoningBasicAudio;
  StressSubtask subtask = StressSubtask::kNone;
  std::string question;
  std::vector<std::string> choices;  // exactly Yes/No, or 4 emotion words
  int answer_index = -1;
  EmotionLabel emotion = EmotionLabel::kNeutral;
  Json provenance = Json::array();  // pipeline-stage audit trail

  // Choice shape per task, subtask-forced stress answers, index bounds.
  void validate() const;
  Json to_json() const;
  static BenchmarkItem from_json(const Json& j);
};

void save_items(const std::filesystem::path& path,
                const std::vector<BenchmarkItem>& items);
// Errors name the 1-based line of the offending item.
std::vector<BenchmarkItem> load_items(const std::filesystem::path& path);

struct BuildConfig {
  uint64_t seed = 0;
  std::filesystem::path templates_dir = "templates";
};

// Captioning and caption classification for one video. Annotator
// exchanges are recorded in `provenance`.
struct CaptionedVideo {
  ManifestRow row;
  CaptionPair pair;
  Json provenance = Json::array();
};
CaptionedVideo caption_video(const ManifestRow& row,
                             annotator::AnnotatorClient& client,
                             const BuildConfig& cfg);

struct GenerateResult {
  std::vector<BenchmarkItem> items;
  std::vector<Json> quarantined;  // {id, reason} for malformed exchanges
};

// Items of one task for one captioned video. Ineligible pairs yield no
// items; Yes/No answers are always computed locally from the verdict or
// subtask, never read back from the annotator.
GenerateResult generate_items(const CaptionedVideo& video, BenchTask task,
                              annotator::AnnotatorClient& client,
                              const BuildConfig& cfg);

// Caption, verify, and generate every task for one video. A pair whose
// captions both miss the ground-truth emotion is discarded (not an
// error); a failed caption stage quarantines the whole video.
struct VideoOutcome {
  bool discarded = false;
  std::vector<BenchmarkItem> items;
  std::vector<Json> quarantined;
};
VideoOutcome build_video_items(const ManifestRow& row,
                               annotator::AnnotatorClient& client,
                               const BuildConfig& cfg);

// Drops items every guesser answers correctly from the text alone. A
// guesser failure counts as an incorrect guess and is logged. Retained
// items get a provenance entry with the per-guesser verdicts.
struct FilterResult {
  std::vector<BenchmarkItem> retained;
  std::vector<std::string> removed_ids;
  std::vector<std::string> warnings;
};
FilterResult text_only_filter(const std::vector<BenchmarkItem>& items,
                              const std::vector<annotator::TextGuesser*>& guessers);

// Per-item seeded permutation of 4-way choices so the answer position is
// uniform across the set, plus per-task subsampling of the Yes/No
// majority class down to the minority count. Deterministic in (items,
// seed); item order is otherwise preserved.
std::vector<BenchmarkItem> balance_answers(const std::vector<BenchmarkItem>& items,
                                           uint64_t seed);

struct TaskReport {
  int qa_count = 0;
  int unique_videos = 0;
  double random_accuracy = 0.0;  // always 1/|choices| for the task
};

struct StatsReport {
  int total_qa = 0;
  int unique_videos = 0;
  std::array<TaskReport, kNumBenchTasks> tasks{};
  std::array<int, kNumEmotions> emotion_counts{};
  // Total-variation distance between the item emotion distribution and
  // the source manifest distribution, when a source is given.
  std::optional<double> tvd_vs_source;

  Json to_json() const;
};

StatsReport compute_statistics(const std::vector<BenchmarkItem>& items,
                               const std::vector<ManifestRow>* source = nullptr);

}  // namespace avemdpo::bench
