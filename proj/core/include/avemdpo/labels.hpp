#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

// Closed enumerations shared across the pipeline, with their canonical
// on-disk spellings. All from_* parsers throw std::invalid_argument on
// unknown strings so malformed files fail loudly.

namespace avemdpo {

enum class EmotionLabel : uint8_t {
  kHappy = 0,
  kSad,
  kNeutral,
  kAngry,
  kSurprise,
  kDisgust,
  kFear,
};
inline constexpr int kNumEmotions = 7;
inline constexpr std::array<EmotionLabel, kNumEmotions> kAllEmotions = {
    EmotionLabel::kHappy,   EmotionLabel::kSad,     EmotionLabel::kNeutral,
    EmotionLabel::kAngry,   EmotionLabel::kSurprise, EmotionLabel::kDisgust,
    EmotionLabel::kFear,
};

std::string_view to_string(EmotionLabel e);
EmotionLabel emotion_from_string(std::string_view s);

// Which modality the prompt asks about.
enum class ModalityTag : uint8_t { kAV = 0, kA, kV };
std::string_view to_string(ModalityTag m);
ModalityTag modality_from_string(std::string_view s);

// Which sides of a rejected AV input were preserved from the chosen input.
// The prompt tag fixes this: an audio prompt keeps the chosen video and
// vice versa; an AV prompt keeps neither.
enum class PmpMask : uint8_t { kNoneKept = 0, kAudioKept, kVideoKept };
std::string_view to_string(PmpMask m);
PmpMask pmp_mask_from_string(std::string_view s);

// The mask a prompt tag implies.
PmpMask pmp_mask_for(ModalityTag m);

enum class BenchTask : uint8_t {
  kReasoningBasicAudio = 0,
  kReasoningBasicVisual,
  kModalityAgreement,
  kStressAudio,
  kStressVisual,
};
inline constexpr int kNumBenchTasks = 5;
inline constexpr std::array<BenchTask, kNumBenchTasks> kAllBenchTasks = {
    BenchTask::kReasoningBasicAudio, BenchTask::kReasoningBasicVisual,
    BenchTask::kModalityAgreement,   BenchTask::kStressAudio,
    BenchTask::kStressVisual,
};
std::string_view to_string(BenchTask t);
BenchTask bench_task_from_string(std::string_view s);

bool is_stress_task(BenchTask t);
bool is_yes_no_task(BenchTask t);
// Modality the task's prompt asks about.
ModalityTag task_modality(BenchTask t);

enum class StressSubtask : uint8_t {
  kNone = 0,
  kNoHallucination,
  kSpuriousAssociation,
  kEmotionRelevantHallucination,
};
std::string_view to_string(StressSubtask s);
StressSubtask stress_subtask_from_string(std::string_view s);

// Stress answers are forced by the subtask: a real, emotion-relevant cue
// is a Yes; a spurious or hallucinated cue is a No.
bool stress_answer_is_yes(StressSubtask s);

enum class NegativeSamplingKind : uint8_t {
  kRandomTensor = 0,
  kRandomVideo,
  kDiffuse,
  kDifferentEmotion,
};
std::string_view to_string(NegativeSamplingKind k);
NegativeSamplingKind negative_sampling_from_string(std::string_view s);

}  // namespace avemdpo
