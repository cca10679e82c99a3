#include "avemdpo/synthetic.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "avemdpo/rng.hpp"

namespace avemdpo::synthetic {

namespace {

std::string pad3(int v) {
  std::string s = std::to_string(v);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return s;
}

// Video tokens that encode the emotion index with an alternating pattern.
std::vector<int> emotion_video(int e, int len, int vocab) {
  std::vector<int> out;
  for (int i = 0; i < len; ++i) {
    out.push_back(i % 2 == 0 ? e % vocab : (e + 2) % vocab);
  }
  return out;
}

// The planted rule: the correct response for emotion e is "e (e+3)%10".
std::string rule_response(int e) {
  return std::to_string(e) + " " + std::to_string((e + 3) % 10);
}

std::string long_response(int e, Rng& rng) {
  std::string s = rule_response(e);
  for (int i = 0; i < 3; ++i) {
    s += " " + std::to_string(rng.below(10));
  }
  return s;
}

ModalityTag tag_for(int r) {
  switch (r % 3) {
    case 0: return ModalityTag::kA;
    case 1: return ModalityTag::kV;
    default: return ModalityTag::kAV;
  }
}

}  // namespace

PlantedFlavor planted_flavor_from_string(std::string_view s) {
  if (s == "separable") return PlantedFlavor::kSeparable;
  if (s == "text_biased") return PlantedFlavor::kTextBiased;
  if (s == "erp_required") return PlantedFlavor::kErpRequired;
  throw std::invalid_argument("unknown planted flavor: " + std::string(s));
}

std::string_view to_string(PlantedFlavor f) {
  switch (f) {
    case PlantedFlavor::kSeparable: return "separable";
    case PlantedFlavor::kTextBiased: return "text_biased";
    case PlantedFlavor::kErpRequired: return "erp_required";
  }
  throw std::logic_error("unreachable");
}

train::TrainDataset planted_preference_dataset(PlantedFlavor flavor, int n,
                                               uint64_t seed) {
  if (n < 2) {
    throw std::invalid_argument("planted dataset needs at least 2 records");
  }
  constexpr int kAudioLen = 4;
  constexpr int kVideoLen = 5;
  constexpr int kAudioVocab = 12;
  constexpr int kVideoVocab = 12;

  train::TrainDataset data;
  for (int r = 0; r < n; ++r) {
    Rng rng(derive_seed(seed, "clip." + std::to_string(r)));
    prefdata::AvClip clip;
    clip.emotion = kAllEmotions[r % kNumEmotions];
    clip.video = emotion_video(r % kNumEmotions, kVideoLen, kVideoVocab);
    clip.audio.resize(kAudioLen);
    for (int& t : clip.audio) t = (int)rng.below(kAudioVocab);
    data.pool.add("clip-" + pad3(r), std::move(clip));
  }

  for (int r = 0; r < n; ++r) {
    Rng rng(derive_seed(seed, "record." + std::to_string(r)));
    const int e = r % kNumEmotions;
    prefdata::PreferenceRecord rec;
    rec.id = "rec-" + pad3(r);
    rec.modality_tag = tag_for(r);
    rec.emotion = kAllEmotions[e];
    rec.chosen_av_ref = "clip-" + pad3(r);
    rec.y_w = rule_response(e);

    switch (flavor) {
      case PlantedFlavor::kSeparable:
        // Rejections open with marker tokens no chosen response uses, so
        // pushing them down never fights another record's chosen side.
        rec.prompt = "12 13";
        rec.y_l_vr = "10 " + rule_response((e + 1) % kNumEmotions);
        rec.y_l_er = "11 " + rule_response((e + 2) % kNumEmotions);
        break;
      case PlantedFlavor::kTextBiased:
        rec.prompt = "12";
        rec.y_l_vr = long_response((e + 1) % kNumEmotions, rng);
        rec.y_l_er = long_response((e + 2) % kNumEmotions, rng);
        break;
      case PlantedFlavor::kErpRequired:
        rec.prompt = "12 13";
        rec.y_l_vr = rule_response((e + 1) % kNumEmotions);
        rec.y_l_er = rec.y_w + " " + std::to_string((e + 6) % 10);
        break;
    }

    const int other = (r + 1) % n;
    const prefdata::AvClip& chosen = data.pool.get("clip-" + pad3(r));
    const prefdata::AvClip& candidate = data.pool.get("clip-" + pad3(other));
    prefdata::AvClip rejected = prefdata::apply_prompt_modality_mask(
        chosen, candidate, rec.modality_tag);
    rec.rejected_av_ref = rec.id + "/rejected";
    rec.strategy = NegativeSamplingKind::kRandomVideo;
    rec.pmp_mask = pmp_mask_for(rec.modality_tag);
    data.derived.add(rec.rejected_av_ref, std::move(rejected));

    rec.validate();
    data.records.push_back(std::move(rec));
  }
  return data;
}

std::vector<bench::ManifestRow> synthetic_manifest(int n_videos,
                                                   uint64_t seed) {
  if (n_videos < 1) {
    throw std::invalid_argument("manifest needs at least one video");
  }
  std::vector<bench::ManifestRow> rows;
  for (int i = 0; i < n_videos; ++i) {
    Rng rng(derive_seed(seed, "manifest." + std::to_string(i)));
    bench::ManifestRow row;
    row.video_ref = "synv-" + pad3(i);
    row.gt_emotion = kAllEmotions[rng.below(kNumEmotions)];
    row.has_audio = rng.below(10) != 0;
    if (rng.below(4) == 0) {
      row.subtitle = "line " + std::to_string(rng.below(100));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

prefdata::AvStore synthetic_clip_pool(
    const std::vector<bench::ManifestRow>& rows, uint64_t seed) {
  prefdata::AvStore pool;
  for (const bench::ManifestRow& row : rows) {
    Rng rng(derive_seed(seed, "clip." + row.video_ref));
    prefdata::AvClip clip;
    clip.emotion = row.gt_emotion;
    clip.video = emotion_video((int)row.gt_emotion, 5, 12);
    clip.audio.resize(4);
    for (int& t : clip.audio) t = (int)rng.below(12);
    pool.add(row.video_ref, std::move(clip));
  }
  return pool;
}

double weighted_rejection_log_prob(train::TrainState& state,
                                   const train::TrainDataset& data) {
  if (data.records.empty()) {
    throw std::invalid_argument("empty dataset");
  }
  double sum = 0.0;
  for (const prefdata::PreferenceRecord& rec : data.records) {
    const losses::ScoredSequences s = train::score_record(state, data, rec);
    sum += state.cfg.loss.beta_vr * s.logp_policy_vr +
           state.cfg.loss.beta_er * s.logp_policy_er;
  }
  return sum / (double)data.records.size();
}

namespace {

double margin_score(double margin) {
  if (margin > 0.0) return 1.0;
  if (margin == 0.0) return 0.5;
  return 0.0;
}

}  // namespace

double input_preference_accuracy(train::TrainState& state,
                                 const train::TrainDataset& data) {
  if (data.records.empty()) {
    throw std::invalid_argument("empty dataset");
  }
  double sum = 0.0;
  for (const prefdata::PreferenceRecord& rec : data.records) {
    const losses::ScoredSequences s = train::score_record(state, data, rec);
    sum += margin_score(losses::reward_margin(s.pair_input(), state.cfg.loss));
  }
  return sum / (double)data.records.size();
}

double response_preference_accuracy(train::TrainState& state,
                                    const train::TrainDataset& data) {
  if (data.records.empty()) {
    throw std::invalid_argument("empty dataset");
  }
  double sum = 0.0;
  for (const prefdata::PreferenceRecord& rec : data.records) {
    const losses::ScoredSequences s = train::score_record(state, data, rec);
    const double vr = losses::reward_margin(s.pair_vr(), state.cfg.loss);
    const double er = losses::reward_margin(s.pair_er(), state.cfg.loss);
    sum += margin_score(std::min(vr, er));
  }
  return sum / (double)data.records.size();
}

}  // namespace avemdpo::synthetic
