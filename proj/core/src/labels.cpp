#include "avemdpo/labels.hpp"

#include <stdexcept>

namespace avemdpo {

namespace {
[[noreturn]] void bad_value(const char* what, std::string_view s) {
  throw std::invalid_argument(std::string("unknown ") + what + ": '" +
                              std::string(s) + "'");
}
}  // namespace

std::string_view to_string(EmotionLabel e) {
  switch (e) {
    case EmotionLabel::kHappy: return "happy";
    case EmotionLabel::kSad: return "sad";
    case EmotionLabel::kNeutral: return "neutral";
    case EmotionLabel::kAngry: return "angry";
    case EmotionLabel::kSurprise: return "surprise";
    case EmotionLabel::kDisgust: return "disgust";
    case EmotionLabel::kFear: return "fear";
  }
  bad_value("emotion", "<enum>");
}

EmotionLabel emotion_from_string(std::string_view s) {
  for (EmotionLabel e : kAllEmotions) {
    if (to_string(e) == s) return e;
  }
  bad_value("emotion", s);
}

std::string_view to_string(ModalityTag m) {
  switch (m) {
    case ModalityTag::kAV: return "AV";
    case ModalityTag::kA: return "A";
    case ModalityTag::kV: return "V";
  }
  bad_value("modality tag", "<enum>");
}

ModalityTag modality_from_string(std::string_view s) {
  if (s == "AV") return ModalityTag::kAV;
  if (s == "A") return ModalityTag::kA;
  if (s == "V") return ModalityTag::kV;
  bad_value("modality tag", s);
}

std::string_view to_string(PmpMask m) {
  switch (m) {
    case PmpMask::kNoneKept: return "none_kept";
    case PmpMask::kAudioKept: return "audio_kept";
    case PmpMask::kVideoKept: return "video_kept";
  }
  bad_value("pmp mask", "<enum>");
}

PmpMask pmp_mask_from_string(std::string_view s) {
  if (s == "none_kept") return PmpMask::kNoneKept;
  if (s == "audio_kept") return PmpMask::kAudioKept;
  if (s == "video_kept") return PmpMask::kVideoKept;
  bad_value("pmp mask", s);
}

PmpMask pmp_mask_for(ModalityTag m) {
  switch (m) {
    case ModalityTag::kAV: return PmpMask::kNoneKept;
    case ModalityTag::kV: return PmpMask::kAudioKept;
    case ModalityTag::kA: return PmpMask::kVideoKept;
  }
  bad_value("modality tag", "<enum>");
}

std::string_view to_string(BenchTask t) {
  switch (t) {
    case BenchTask::kReasoningBasicAudio: return "reasoning_basic_audio";
    case BenchTask::kReasoningBasicVisual: return "reasoning_basic_visual";
    case BenchTask::kModalityAgreement: return "modality_agreement";
    case BenchTask::kStressAudio: return "stress_audio";
    case BenchTask::kStressVisual: return "stress_visual";
  }
  bad_value("task", "<enum>");
}

BenchTask bench_task_from_string(std::string_view s) {
  for (BenchTask t : kAllBenchTasks) {
    if (to_string(t) == s) return t;
  }
  bad_value("task", s);
}

bool is_stress_task(BenchTask t) {
  return t == BenchTask::kStressAudio || t == BenchTask::kStressVisual;
}

bool is_yes_no_task(BenchTask t) {
  return is_stress_task(t) || t == BenchTask::kModalityAgreement;
}

ModalityTag task_modality(BenchTask t) {
  switch (t) {
    case BenchTask::kReasoningBasicAudio:
    case BenchTask::kStressAudio:
      return ModalityTag::kA;
    case BenchTask::kReasoningBasicVisual:
    case BenchTask::kStressVisual:
      return ModalityTag::kV;
    case BenchTask::kModalityAgreement:
      return ModalityTag::kAV;
  }
  bad_value("task", "<enum>");
}

std::string_view to_string(StressSubtask s) {
  switch (s) {
    case StressSubtask::kNone: return "none";
    case StressSubtask::kNoHallucination: return "no_hallucination";
    case StressSubtask::kSpuriousAssociation: return "spurious_association";
    case StressSubtask::kEmotionRelevantHallucination:
      return "emotion_relevant_hallucination";
  }
  bad_value("subtask", "<enum>");
}

StressSubtask stress_subtask_from_string(std::string_view s) {
  if (s == "none") return StressSubtask::kNone;
  if (s == "no_hallucination") return StressSubtask::kNoHallucination;
  if (s == "spurious_association") return StressSubtask::kSpuriousAssociation;
  if (s == "emotion_relevant_hallucination")
    return StressSubtask::kEmotionRelevantHallucination;
  bad_value("subtask", s);
}

bool stress_answer_is_yes(StressSubtask s) {
  switch (s) {
    case StressSubtask::kNoHallucination: return true;
    case StressSubtask::kSpuriousAssociation:
    case StressSubtask::kEmotionRelevantHallucination:
      return false;
    case StressSubtask::kNone:
      break;
  }
  throw std::invalid_argument("subtask carries no forced answer");
}

std::string_view to_string(NegativeSamplingKind k) {
  switch (k) {
    case NegativeSamplingKind::kRandomTensor: return "random_tensor";
    case NegativeSamplingKind::kRandomVideo: return "random_video";
    case NegativeSamplingKind::kDiffuse: return "diffuse";
    case NegativeSamplingKind::kDifferentEmotion: return "different_emotion";
  }
  bad_value("strategy", "<enum>");
}

NegativeSamplingKind negative_sampling_from_string(std::string_view s) {
  if (s == "random_tensor") return NegativeSamplingKind::kRandomTensor;
  if (s == "random_video") return NegativeSamplingKind::kRandomVideo;
  if (s == "diffuse") return NegativeSamplingKind::kDiffuse;
  if (s == "different_emotion") return NegativeSamplingKind::kDifferentEmotion;
  bad_value("strategy", s);
}

}  // namespace avemdpo
