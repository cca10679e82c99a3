#include "avemdpo/prefdata.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace avemdpo::prefdata {

namespace {

constexpr int kDiffuseDim = 8;
constexpr int kDiffuseSteps = 1000;
constexpr double kBetaStart = 1e-4;
constexpr double kBetaEnd = 0.02;

// Embedding table used only by the diffusion strategy. Seeded from the
// stream name and vocabulary alone so the token<->vector mapping is a
// fixed property of the codec, not of any pipeline seed.
std::vector<double> diffuse_codebook(const std::string& stream, int vocab) {
  Rng rng(derive_seed(0x5eedc0debull,
                      "diffuse-codebook." + stream + "." + std::to_string(vocab)));
  std::vector<double> code((size_t)vocab * kDiffuseDim);
  for (double& v : code) v = rng.normal();
  return code;
}

double alpha_bar(int step) {
  double prod = 1.0;
  for (int s = 1; s <= step; ++s) {
    const double beta = kBetaStart + (kBetaEnd - kBetaStart) *
                                         (double)(s - 1) / (kDiffuseSteps - 1);
    prod *= 1.0 - beta;
  }
  return prod;
}

std::vector<int> diffuse_tokens(const std::vector<int>& tokens,
                                const std::string& stream, int vocab, int step,
                                Rng& rng) {
  const std::vector<double> code = diffuse_codebook(stream, vocab);
  const double keep = std::sqrt(alpha_bar(step));
  const double noise = std::sqrt(1.0 - alpha_bar(step));
  std::vector<int> out(tokens.size());
  double x[kDiffuseDim];
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= vocab) {
      throw std::out_of_range("diffuse: " + stream + " token " +
                              std::to_string(tokens[i]) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    const double* c0 = &code[(size_t)tokens[i] * kDiffuseDim];
    for (int d = 0; d < kDiffuseDim; ++d) x[d] = keep * c0[d] + noise * rng.normal();
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int t = 0; t < vocab; ++t) {
      double dist = 0.0;
      const double* c = &code[(size_t)t * kDiffuseDim];
      for (int d = 0; d < kDiffuseDim; ++d) dist += (x[d] - c[d]) * (x[d] - c[d]);
      if (dist < best_dist) {
        best_dist = dist;
        best = t;
      }
    }
    out[i] = best;
  }
  return out;
}

Json clip_to_json(const std::string& ref, const AvClip& clip) {
  return Json{{"ref", ref},
              {"audio", clip.audio},
              {"video", clip.video},
              {"emotion", std::string(to_string(clip.emotion))}};
}

}  // namespace

const std::string& AvStore::add(const std::string& ref, AvClip clip) {
  if (ref.empty()) throw std::invalid_argument("AvStore: empty ref");
  if (clips_.count(ref)) {
    throw std::invalid_argument("AvStore: ref '" + ref + "' already present");
  }
  refs_.push_back(ref);
  clips_.emplace(ref, std::move(clip));
  return refs_.back();
}

const AvClip& AvStore::get(const std::string& ref) const {
  auto it = clips_.find(ref);
  if (it == clips_.end()) {
    throw std::out_of_range("AvStore: no clip under ref '" + ref + "'");
  }
  return it->second;
}

bool AvStore::contains(const std::string& ref) const {
  return clips_.count(ref) != 0;
}

void AvStore::save(const std::filesystem::path& path) const {
  std::vector<Json> rows;
  rows.reserve(refs_.size());
  for (const auto& ref : refs_) rows.push_back(clip_to_json(ref, clips_.at(ref)));
  write_jsonl_atomic(path, rows);
}

AvStore AvStore::load(const std::filesystem::path& path) {
  AvStore store;
  for (const Json& row : read_jsonl(path)) {
    AvClip clip;
    clip.audio = row.at("audio").get<std::vector<int>>();
    clip.video = row.at("video").get<std::vector<int>>();
    clip.emotion = emotion_from_string(row.at("emotion").get<std::string>());
    store.add(row.at("ref").get<std::string>(), std::move(clip));
  }
  return store;
}

void StrategyConfig::validate() const {
  if (noise_step < 1 || noise_step > kDiffuseSteps) {
    throw std::invalid_argument("noise_step must be in [1, " +
                                std::to_string(kDiffuseSteps) + "], got " +
                                std::to_string(noise_step));
  }
  if (audio_vocab < 2 || video_vocab < 2) {
    throw std::invalid_argument("negative sampling needs vocabularies of >= 2 tokens");
  }
}

Json StrategyConfig::to_json() const {
  return Json{{"kind", std::string(to_string(kind))},
              {"noise_step", noise_step},
              {"audio_vocab", audio_vocab},
              {"video_vocab", video_vocab}};
}

StrategyConfig StrategyConfig::from_json(const Json& j) {
  StrategyConfig cfg;
  cfg.kind = negative_sampling_from_string(j.at("kind").get<std::string>());
  cfg.noise_step = j.value("noise_step", cfg.noise_step);
  cfg.audio_vocab = j.value("audio_vocab", cfg.audio_vocab);
  cfg.video_vocab = j.value("video_vocab", cfg.video_vocab);
  cfg.validate();
  return cfg;
}

AvClip select_rejected_av(const AvStore& pool, const std::string& chosen_ref,
                          const StrategyConfig& strategy, Rng& rng) {
  strategy.validate();
  const AvClip& chosen = pool.get(chosen_ref);
  switch (strategy.kind) {
    case NegativeSamplingKind::kRandomTensor: {
      AvClip out;
      out.emotion = chosen.emotion;
      out.audio.resize(chosen.audio.size());
      out.video.resize(chosen.video.size());
      for (int& t : out.audio) t = (int)rng.below((uint64_t)strategy.audio_vocab);
      for (int& t : out.video) t = (int)rng.below((uint64_t)strategy.video_vocab);
      return out;
    }
    case NegativeSamplingKind::kRandomVideo: {
      std::vector<std::string> eligible;
      for (const auto& ref : pool.refs())
        if (ref != chosen_ref) eligible.push_back(ref);
      if (eligible.empty()) {
        throw std::runtime_error(
            "negative sampling (random_video): no clip in the pool other than '" +
            chosen_ref + "'");
      }
      return pool.get(eligible[rng.below(eligible.size())]);
    }
    case NegativeSamplingKind::kDiffuse:
      return diffuse_clip(chosen, strategy, rng);
    case NegativeSamplingKind::kDifferentEmotion: {
      std::vector<std::string> eligible;
      for (const auto& ref : pool.refs())
        if (ref != chosen_ref && pool.get(ref).emotion != chosen.emotion)
          eligible.push_back(ref);
      if (eligible.empty()) {
        throw std::runtime_error(
            "negative sampling (different_emotion): pool has no clip with an "
            "emotion other than '" +
            std::string(to_string(chosen.emotion)) + "'");
      }
      return pool.get(eligible[rng.below(eligible.size())]);
    }
  }
  throw std::logic_error("unreachable negative sampling kind");
}

AvClip diffuse_clip(const AvClip& chosen, const StrategyConfig& strategy,
                    Rng& rng) {
  strategy.validate();
  AvClip out;
  out.emotion = chosen.emotion;
  out.audio = diffuse_tokens(chosen.audio, "audio", strategy.audio_vocab,
                             strategy.noise_step, rng);
  out.video = diffuse_tokens(chosen.video, "video", strategy.video_vocab,
                             strategy.noise_step, rng);
  return out;
}

AvClip apply_prompt_modality_mask(const AvClip& chosen, AvClip candidate,
                                  ModalityTag m) {
  switch (m) {
    case ModalityTag::kA:
      candidate.video = chosen.video;
      break;
    case ModalityTag::kV:
      candidate.audio = chosen.audio;
      break;
    case ModalityTag::kAV:
      break;
  }
  return candidate;
}

void PreferenceRecord::validate() const {
  auto fail = [this](const std::string& what) {
    throw std::invalid_argument("preference record '" + id + "': " + what);
  };
  if (id.empty()) fail("empty id");
  if (prompt.empty()) fail("empty prompt");
  if (y_w.empty()) fail("empty chosen response");
  if (y_l_vr.empty() || y_l_er.empty()) fail("empty rejected response");
  if (y_l_vr == y_w) fail("visually-relevant rejection equals the chosen response");
  if (y_l_er == y_w) fail("emotion-relevant rejection equals the chosen response");
  if (chosen_av_ref.empty() || rejected_av_ref.empty()) fail("empty AV ref");
  if (pmp_mask != pmp_mask_for(modality_tag)) {
    fail("mask '" + std::string(to_string(pmp_mask)) +
         "' inconsistent with modality '" + std::string(to_string(modality_tag)) +
         "'");
  }
}

Json PreferenceRecord::to_json() const {
  return Json{{"id", id},
              {"prompt", prompt},
              {"modality_tag", std::string(to_string(modality_tag))},
              {"y_w", y_w},
              {"y_l_vr", y_l_vr},
              {"y_l_er", y_l_er},
              {"emotion", std::string(to_string(emotion))},
              {"chosen_av_ref", chosen_av_ref},
              {"rejected_av_ref", rejected_av_ref},
              {"strategy", std::string(to_string(strategy))},
              {"pmp_mask", std::string(to_string(pmp_mask))}};
}

PreferenceRecord PreferenceRecord::from_json(const Json& j) {
  PreferenceRecord r;
  r.id = j.at("id").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.modality_tag = modality_from_string(j.at("modality_tag").get<std::string>());
  r.y_w = j.at("y_w").get<std::string>();
  r.y_l_vr = j.at("y_l_vr").get<std::string>();
  r.y_l_er = j.at("y_l_er").get<std::string>();
  r.emotion = emotion_from_string(j.at("emotion").get<std::string>());
  r.chosen_av_ref = j.at("chosen_av_ref").get<std::string>();
  r.rejected_av_ref = j.at("rejected_av_ref").get<std::string>();
  r.strategy = negative_sampling_from_string(j.at("strategy").get<std::string>());
  r.pmp_mask = pmp_mask_from_string(j.at("pmp_mask").get<std::string>());
  r.validate();
  return r;
}

Json PreferenceSource::to_json() const {
  return Json{{"id", id},
              {"av_ref", av_ref},
              {"modality_tag", std::string(to_string(modality_tag))},
              {"prompt", prompt},
              {"y_w", y_w},
              {"emotion", std::string(to_string(emotion))}};
}

PreferenceSource PreferenceSource::from_json(const Json& j) {
  PreferenceSource s;
  s.id = j.at("id").get<std::string>();
  s.av_ref = j.at("av_ref").get<std::string>();
  s.modality_tag = modality_from_string(j.at("modality_tag").get<std::string>());
  s.prompt = j.at("prompt").get<std::string>();
  s.y_w = j.at("y_w").get<std::string>();
  s.emotion = emotion_from_string(j.at("emotion").get<std::string>());
  if (s.id.empty()) throw std::invalid_argument("source id must be non-empty");
  if (s.av_ref.empty()) throw std::invalid_argument("source av_ref must be non-empty");
  if (s.y_w.empty()) throw std::invalid_argument("source y_w must be non-empty");
  return s;
}

namespace {

struct FlavorInfo {
  const char* flavor;
  const char* template_id;
};

FlavorInfo flavor_for(ModalityTag m) {
  switch (m) {
    case ModalityTag::kA:
      return {"audio-reasoning", "pref_rejections_audio"};
    case ModalityTag::kV:
      return {"visual-reasoning", "pref_rejections_visual"};
    case ModalityTag::kAV:
      return {"modality-agreement", "pref_rejections_agreement"};
  }
  throw std::logic_error("unreachable modality");
}

}  // namespace

std::optional<PreferenceRecord> build_preference_record(
    const PreferenceSource& src, annotator::AnnotatorClient& client,
    const AvStore& pool, AvStore& derived, const BuildConfig& cfg,
    Json* quarantine_entry) {
  if (cfg.retry_limit < 1) throw std::invalid_argument("retry_limit must be >= 1");
  const AvClip& chosen = pool.get(src.av_ref);
  const FlavorInfo info = flavor_for(src.modality_tag);
  const std::string prompt_text = annotator::render_template(
      annotator::load_template(cfg.templates_dir, info.template_id),
      {{"prompt", src.prompt},
       {"response", src.y_w},
       {"emotion", std::string(to_string(src.emotion))}});
  const Json request{{"kind", "rejection_pair"},
                     {"flavor", info.flavor},
                     {"prompt", src.prompt},
                     {"y_w", src.y_w},
                     {"emotion", std::string(to_string(src.emotion))},
                     {"prompt_text", prompt_text}};

  std::string y_l_vr;
  std::string y_l_er;
  std::string last_reason;
  int attempts = 0;
  bool ok = false;
  while (attempts < cfg.retry_limit && !ok) {
    ++attempts;
    try {
      const Json response = client.annotate(request);
      y_l_vr = response.at("y_l_vr").get<std::string>();
      y_l_er = response.at("y_l_er").get<std::string>();
      if (y_l_vr.empty() || y_l_er.empty()) {
        last_reason = "annotator returned an empty rejection";
      } else if (y_l_vr == src.y_w || y_l_er == src.y_w) {
        last_reason = "annotator returned a rejection equal to the chosen response";
      } else {
        ok = true;
      }
    } catch (const std::exception& e) {
      last_reason = e.what();
    }
  }
  if (!ok) {
    if (quarantine_entry != nullptr) {
      *quarantine_entry = Json{
          {"id", src.id}, {"reason", last_reason}, {"attempts", attempts}};
    }
    return std::nullopt;
  }

  Rng rng(derive_seed(cfg.seed, src.id));
  AvClip candidate = select_rejected_av(pool, src.av_ref, cfg.strategy, rng);
  AvClip masked = apply_prompt_modality_mask(chosen, std::move(candidate),
                                             src.modality_tag);

  PreferenceRecord rec;
  rec.id = src.id;
  rec.prompt = src.prompt;
  rec.modality_tag = src.modality_tag;
  rec.y_w = src.y_w;
  rec.y_l_vr = y_l_vr;
  rec.y_l_er = y_l_er;
  rec.emotion = src.emotion;
  rec.chosen_av_ref = src.av_ref;
  rec.rejected_av_ref = src.id + "/rejected";
  rec.strategy = cfg.strategy.kind;
  rec.pmp_mask = pmp_mask_for(src.modality_tag);
  rec.validate();
  derived.add(rec.rejected_av_ref, std::move(masked));
  return rec;
}

BuildResult build_preference_dataset(
    const std::vector<PreferenceSource>& sources,
    annotator::AnnotatorClient& client, const AvStore& pool,
    const BuildConfig& cfg) {
  BuildResult result;
  for (const auto& src : sources) {
    Json entry;
    auto rec =
        build_preference_record(src, client, pool, result.derived, cfg, &entry);
    if (rec) {
      result.records.push_back(std::move(*rec));
    } else {
      result.quarantined.push_back(std::move(entry));
    }
  }
  return result;
}

const AvClip& resolve_ref(const AvStore& pool, const AvStore& derived,
                          const std::string& ref) {
  if (pool.contains(ref)) return pool.get(ref);
  return derived.get(ref);
}

void save_records(const std::filesystem::path& path,
                  const std::vector<PreferenceRecord>& records) {
  std::vector<Json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    r.validate();
    rows.push_back(r.to_json());
  }
  write_jsonl_atomic(path, rows);
}

std::vector<PreferenceRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<PreferenceRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(PreferenceRecord::from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return records;
}

void save_sources(const std::filesystem::path& path,
                  const std::vector<PreferenceSource>& sources) {
  std::vector<Json> rows;
  rows.reserve(sources.size());
  for (const auto& s : sources) rows.push_back(s.to_json());
  write_jsonl_atomic(path, rows);
}

std::vector<PreferenceSource> load_sources(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<PreferenceSource> sources;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      sources.push_back(PreferenceSource::from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return sources;
}

}  // namespace avemdpo::prefdata
