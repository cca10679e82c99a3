#include "avemdpo/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace avemdpo::bench {

namespace {

std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  const size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
  for (char& c : s) c = (char)std::tolower((unsigned char)c);
  return s;
}

const std::vector<std::string> kYesNo = {"Yes", "No"};

}  // namespace

Json ManifestRow::to_json() const {
  Json j{{"video_ref", video_ref},
         {"gt_emotion", std::string(to_string(gt_emotion))}};
  if (subtitle) j["subtitle"] = *subtitle;
  if (!has_audio) j["has_audio"] = false;
  return j;
}

ManifestRow ManifestRow::from_json(const Json& j) {
  ManifestRow row;
  row.video_ref = j.at("video_ref").get<std::string>();
  if (row.video_ref.empty()) throw std::invalid_argument("manifest row: empty video_ref");
  row.gt_emotion = emotion_from_string(j.at("gt_emotion").get<std::string>());
  if (j.contains("subtitle")) row.subtitle = j.at("subtitle").get<std::string>();
  row.has_audio = j.value("has_audio", true);
  return row;
}

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  std::vector<ManifestRow> rows;
  size_t lineno = 0;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(ManifestRow::from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return rows;
}

void save_manifest(const std::filesystem::path& path,
                   const std::vector<ManifestRow>& rows) {
  std::vector<Json> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.to_json());
  write_jsonl_atomic(path, out);
}

CaptionVerdict verify_captions(const CaptionPair& pair) {
  CaptionVerdict v;
  v.audio_eligible = pair.audio_emotion && *pair.audio_emotion == pair.gt_emotion;
  v.video_eligible = pair.video_emotion && *pair.video_emotion == pair.gt_emotion;
  v.keep = v.audio_eligible || v.video_eligible;
  v.agreement_yes = v.audio_eligible && v.video_eligible;
  return v;
}

void BenchmarkItem::validate() const {
  auto fail = [this](const std::string& what) {
    throw std::invalid_argument("benchmark item '" + id + "': " + what);
  };
  if (id.empty()) fail("empty id");
  if (video_ref.empty()) fail("empty video_ref");
  if (trim(question).empty()) fail("empty question");
  if (is_yes_no_task(task)) {
    if (choices != kYesNo) fail("choices must be exactly Yes/No");
  } else {
    if (choices.size() != 4) fail("expected 4 choices, got " +
                                  std::to_string(choices.size()));
    std::set<std::string> uniq(choices.begin(), choices.end());
    if (uniq.size() != 4) fail("duplicate choices");
    for (const auto& c : choices)
      if (c.empty()) fail("empty choice");
  }
  if (answer_index < 0 || answer_index >= (int)choices.size()) {
    fail("answer_index " + std::to_string(answer_index) + " out of range");
  }
  if (is_stress_task(task)) {
    if (subtask == StressSubtask::kNone) fail("stress item without subtask");
    const bool want_yes = stress_answer_is_yes(subtask);
    if ((choices[answer_index] == "Yes") != want_yes) {
      fail(std::string("answer contradicts subtask '") +
           std::string(to_string(subtask)) + "'");
    }
  } else if (subtask != StressSubtask::kNone) {
    fail("subtask on a non-stress task");
  }
}

Json BenchmarkItem::to_json() const {
  return Json{{"id", id},
              {"video_ref", video_ref},
              {"task", std::string(to_string(task))},
              {"subtask", std::string(to_string(subtask))},
              {"question", question},
              {"choices", choices},
              {"answer_index", answer_index},
              {"emotion", std::string(to_string(emotion))},
              {"provenance", provenance}};
}

BenchmarkItem BenchmarkItem::from_json(const Json& j) {
  BenchmarkItem item;
  item.id = j.at("id").get<std::string>();
  item.video_ref = j.at("video_ref").get<std::string>();
  item.task = bench_task_from_string(j.at("task").get<std::string>());
  item.subtask = stress_subtask_from_string(j.at("subtask").get<std::string>());
  item.question = j.at("question").get<std::string>();
  item.choices = j.at("choices").get<std::vector<std::string>>();
  item.answer_index = j.at("answer_index").get<int>();
  item.emotion = emotion_from_string(j.at("emotion").get<std::string>());
  item.provenance = j.value("provenance", Json::array());
  item.validate();
  return item;
}

void save_items(const std::filesystem::path& path,
                const std::vector<BenchmarkItem>& items) {
  std::vector<Json> rows;
  rows.reserve(items.size());
  for (const auto& it : items) {
    it.validate();
    rows.push_back(it.to_json());
  }
  write_jsonl_atomic(path, rows);
}

std::vector<BenchmarkItem> load_items(const std::filesystem::path& path) {
  std::vector<BenchmarkItem> items;
  size_t lineno = 0;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      items.push_back(BenchmarkItem::from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return items;
}

namespace {

struct Exchange {
  Json response;
  Json provenance;
};

Exchange call(annotator::AnnotatorClient& client, Json request,
              const std::string& stage, const std::string& template_id,
              const std::string& template_text,
              const std::map<std::string, std::string>& vars) {
  request["prompt_text"] = annotator::render_template(template_text, vars);
  Exchange ex;
  ex.provenance = Json{{"stage", stage},
                       {"template", template_id},
                       {"fixture", annotator::request_key(request)}};
  ex.response = client.annotate(request);
  return ex;
}

std::optional<EmotionLabel> parse_caption_emotion(const Json& response) {
  const std::string word = response.at("emotion").get<std::string>();
  if (word == "none") return std::nullopt;
  return emotion_from_string(word);
}

}  // namespace

CaptionedVideo caption_video(const ManifestRow& row,
                             annotator::AnnotatorClient& client,
                             const BuildConfig& cfg) {
  CaptionedVideo out;
  out.row = row;
  out.pair.gt_emotion = row.gt_emotion;
  const std::string gt(to_string(row.gt_emotion));

  for (const bool audio : {true, false}) {
    if (audio && !row.has_audio) continue;
    const std::string modality = audio ? "audio" : "visual";
    const std::string template_id = audio ? "caption_audio" : "caption_visual";
    Exchange cap = call(
        client,
        Json{{"kind", "caption"}, {"modality", modality},
             {"video_ref", row.video_ref}, {"gt_emotion", gt}},
        "caption", template_id,
        annotator::load_template(cfg.templates_dir, template_id),
        {{"video_ref", row.video_ref}});
    const std::string text = cap.response.at("caption").get<std::string>();
    if (trim(text).empty()) {
      throw annotator::AnnotatorError("empty " + modality + " caption for '" +
                                      row.video_ref + "'");
    }
    cap.provenance["modality"] = modality;
    out.provenance.push_back(cap.provenance);

    Exchange cls = call(
        client, Json{{"kind", "classify_emotion"}, {"caption", text}},
        "classify_emotion", "classify_emotion",
        annotator::load_template(cfg.templates_dir, "classify_emotion"),
        {{"caption", text}});
    cls.provenance["modality"] = modality;
    out.provenance.push_back(cls.provenance);

    if (audio) {
      out.pair.audio_caption = text;
      out.pair.audio_emotion = parse_caption_emotion(cls.response);
    } else {
      out.pair.video_caption = text;
      out.pair.video_emotion = parse_caption_emotion(cls.response);
    }
  }
  return out;
}

namespace {

std::vector<std::string> emotion_choices(EmotionLabel correct, Rng& rng) {
  std::vector<EmotionLabel> others;
  for (EmotionLabel e : kAllEmotions)
    if (e != correct) others.push_back(e);
  rng.shuffle(others);
  std::vector<std::string> choices = {std::string(to_string(correct))};
  for (int i = 0; i < 3; ++i) choices.push_back(std::string(to_string(others[i])));
  return choices;
}

void generate_reasoning(const CaptionedVideo& video, BenchTask task,
                        annotator::AnnotatorClient& client,
                        const BuildConfig& cfg, GenerateResult& out) {
  const bool audio = task == BenchTask::kReasoningBasicAudio;
  const std::string& caption =
      audio ? video.pair.audio_caption : video.pair.video_caption;
  const std::string gt(to_string(video.row.gt_emotion));
  const std::string id =
      video.row.video_ref + "#" + std::string(to_string(task));
  try {
    Exchange ex = call(
        client,
        Json{{"kind", "question"}, {"task", std::string(to_string(task))},
             {"caption", caption}, {"emotion", gt}},
        "question", "question_reasoning",
        annotator::load_template(cfg.templates_dir, "question_reasoning"),
        {{"caption", caption}, {"emotion", gt}});
    const std::string question = trim(ex.response.at("question").get<std::string>());
    if (question.empty()) throw annotator::AnnotatorError("empty question");
    if (lower(question).find(gt) != std::string::npos) {
      throw annotator::AnnotatorError("generated question names the answer emotion");
    }
    BenchmarkItem item;
    item.id = id;
    item.video_ref = video.row.video_ref;
    item.task = task;
    item.question = question;
    Rng rng(derive_seed(cfg.seed, id + "/distractors"));
    item.choices = emotion_choices(video.row.gt_emotion, rng);
    item.answer_index = 0;
    item.emotion = video.row.gt_emotion;
    item.provenance = video.provenance;
    item.provenance.push_back(ex.provenance);
    item.validate();
    out.items.push_back(std::move(item));
  } catch (const std::exception& e) {
    out.quarantined.push_back(Json{{"id", id}, {"reason", e.what()}});
  }
}

void generate_agreement(const CaptionedVideo& video, const CaptionVerdict& verdict,
                        const BuildConfig& cfg, GenerateResult& out) {
  BenchmarkItem item;
  item.id = video.row.video_ref + "#modality_agreement";
  item.video_ref = video.row.video_ref;
  item.task = BenchTask::kModalityAgreement;
  item.question =
      trim(annotator::load_template(cfg.templates_dir, "agreement_question"));
  item.choices = kYesNo;
  item.answer_index = verdict.agreement_yes ? 0 : 1;
  item.emotion = video.row.gt_emotion;
  item.provenance = video.provenance;
  item.provenance.push_back(
      Json{{"stage", "question"}, {"template", "agreement_question"}});
  item.validate();
  out.items.push_back(std::move(item));
}

void generate_stress(const CaptionedVideo& video, BenchTask task,
                     annotator::AnnotatorClient& client, const BuildConfig& cfg,
                     GenerateResult& out) {
  const bool audio = task == BenchTask::kStressAudio;
  const std::string& caption =
      audio ? video.pair.audio_caption : video.pair.video_caption;
  const std::string modality = audio ? "A" : "V";
  const std::string gt(to_string(video.row.gt_emotion));
  const std::string question_template =
      annotator::load_template(cfg.templates_dir, "stress_question");
  for (StressSubtask sub :
       {StressSubtask::kNoHallucination, StressSubtask::kSpuriousAssociation,
        StressSubtask::kEmotionRelevantHallucination}) {
    const std::string id = video.row.video_ref + "#" +
                           std::string(to_string(task)) + "#" +
                           std::string(to_string(sub));
    try {
      Exchange ex = call(
          client,
          Json{{"kind", "stress_cue"}, {"subtask", std::string(to_string(sub))},
               {"modality", modality}, {"caption", caption}, {"emotion", gt}},
          "stress_cue", "stress_cue",
          annotator::load_template(cfg.templates_dir, "stress_cue"),
          {{"caption", caption},
           {"emotion", gt},
           {"modality", modality},
           {"subtask", std::string(to_string(sub))}});
      const std::string cue = trim(ex.response.at("cue").get<std::string>());
      if (cue.empty()) throw annotator::AnnotatorError("empty cue");
      BenchmarkItem item;
      item.id = id;
      item.video_ref = video.row.video_ref;
      item.task = task;
      item.subtask = sub;
      item.question = trim(annotator::render_template(
          question_template, {{"cue", cue}, {"emotion", gt}}));
      item.choices = kYesNo;
      item.answer_index = stress_answer_is_yes(sub) ? 0 : 1;
      item.emotion = video.row.gt_emotion;
      item.provenance = video.provenance;
      item.provenance.push_back(ex.provenance);
      item.validate();
      out.items.push_back(std::move(item));
    } catch (const std::exception& e) {
      out.quarantined.push_back(Json{{"id", id}, {"reason", e.what()}});
    }
  }
}

}  // namespace

GenerateResult generate_items(const CaptionedVideo& video, BenchTask task,
                              annotator::AnnotatorClient& client,
                              const BuildConfig& cfg) {
  GenerateResult out;
  const CaptionVerdict verdict = verify_captions(video.pair);
  const bool audio_ok = verdict.audio_eligible && video.row.has_audio;
  switch (task) {
    case BenchTask::kReasoningBasicAudio:
      if (audio_ok) generate_reasoning(video, task, client, cfg, out);
      break;
    case BenchTask::kReasoningBasicVisual:
      if (verdict.video_eligible) generate_reasoning(video, task, client, cfg, out);
      break;
    case BenchTask::kModalityAgreement:
      if (verdict.keep && video.row.has_audio)
        generate_agreement(video, verdict, cfg, out);
      break;
    case BenchTask::kStressAudio:
      if (audio_ok) generate_stress(video, task, client, cfg, out);
      break;
    case BenchTask::kStressVisual:
      if (verdict.video_eligible) generate_stress(video, task, client, cfg, out);
      break;
  }
  return out;
}

VideoOutcome build_video_items(const ManifestRow& row,
                               annotator::AnnotatorClient& client,
                               const BuildConfig& cfg) {
  VideoOutcome out;
  CaptionedVideo video;
  try {
    video = caption_video(row, client, cfg);
  } catch (const std::exception& e) {
    out.quarantined.push_back(Json{{"id", row.video_ref}, {"reason", e.what()}});
    return out;
  }
  if (!verify_captions(video.pair).keep) {
    out.discarded = true;
    return out;
  }
  for (BenchTask task : kAllBenchTasks) {
    GenerateResult r = generate_items(video, task, client, cfg);
    for (auto& it : r.items) out.items.push_back(std::move(it));
    for (auto& q : r.quarantined) out.quarantined.push_back(std::move(q));
  }
  return out;
}

FilterResult text_only_filter(const std::vector<BenchmarkItem>& items,
                              const std::vector<annotator::TextGuesser*>& guessers) {
  if (guessers.empty()) throw std::invalid_argument("text_only_filter needs >= 1 guesser");
  FilterResult out;
  for (const auto& item : items) {
    Json verdicts = Json::array();
    bool all_correct = true;
    for (annotator::TextGuesser* g : guessers) {
      bool correct = false;
      try {
        correct = g->guess(item.question, item.choices) == item.answer_index;
      } catch (const std::exception& e) {
        out.warnings.push_back("guesser '" + g->name() + "' failed on item '" +
                               item.id + "': " + e.what());
      }
      verdicts.push_back(Json{{"guesser", g->name()}, {"correct", correct}});
      all_correct = all_correct && correct;
    }
    if (all_correct) {
      out.removed_ids.push_back(item.id);
    } else {
      BenchmarkItem kept = item;
      kept.provenance.push_back(
          Json{{"stage", "text_only_filter"}, {"verdicts", verdicts}});
      out.retained.push_back(std::move(kept));
    }
  }
  return out;
}

std::vector<BenchmarkItem> balance_answers(const std::vector<BenchmarkItem>& items,
                                           uint64_t seed) {
  std::vector<BenchmarkItem> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    item.validate();
    BenchmarkItem next = item;
    if (item.choices.size() == 4) {
      Rng rng(derive_seed(seed, item.id + "/balance"));
      std::vector<int> perm = {0, 1, 2, 3};
      rng.shuffle(perm);
      std::vector<std::string> shuffled(4);
      for (int i = 0; i < 4; ++i) shuffled[perm[i]] = item.choices[i];
      next.choices = std::move(shuffled);
      next.answer_index = perm[item.answer_index];
      next.provenance.push_back(Json{{"stage", "balance"}, {"permutation", perm}});
    }
    out.push_back(std::move(next));
  }

  // Subsample the Yes/No majority class to the minority count, per task.
  std::set<size_t> dropped;
  for (BenchTask task : kAllBenchTasks) {
    if (!is_yes_no_task(task)) continue;
    std::vector<size_t> yes, no;
    for (size_t i = 0; i < out.size(); ++i) {
      if (out[i].task != task) continue;
      (out[i].choices[out[i].answer_index] == "Yes" ? yes : no).push_back(i);
    }
    std::vector<size_t>& majority = yes.size() >= no.size() ? yes : no;
    const size_t excess =
        majority.size() - std::min(yes.size(), no.size());
    if (excess == 0) continue;
    Rng rng(derive_seed(seed, std::string(to_string(task)) + "/subsample"));
    rng.shuffle(majority);
    for (size_t k = 0; k < excess; ++k) dropped.insert(majority[k]);
  }
  if (dropped.empty()) return out;
  std::vector<BenchmarkItem> final_items;
  final_items.reserve(out.size() - dropped.size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (!dropped.count(i)) final_items.push_back(std::move(out[i]));
  }
  return final_items;
}

StatsReport compute_statistics(const std::vector<BenchmarkItem>& items,
                               const std::vector<ManifestRow>* source) {
  StatsReport report;
  std::set<std::string> all_videos;
  std::array<std::set<std::string>, kNumBenchTasks> task_videos;
  for (int t = 0; t < kNumBenchTasks; ++t) {
    report.tasks[t].random_accuracy =
        is_yes_no_task(kAllBenchTasks[t]) ? 0.5 : 0.25;
  }
  for (const auto& item : items) {
    const int t = (int)item.task;
    report.total_qa += 1;
    report.tasks[t].qa_count += 1;
    all_videos.insert(item.video_ref);
    task_videos[t].insert(item.video_ref);
    report.emotion_counts[(int)item.emotion] += 1;
  }
  report.unique_videos = (int)all_videos.size();
  for (int t = 0; t < kNumBenchTasks; ++t) {
    report.tasks[t].unique_videos = (int)task_videos[t].size();
  }
  if (source != nullptr && !items.empty() && !source->empty()) {
    std::array<double, kNumEmotions> q{};
    for (const auto& row : *source) q[(int)row.gt_emotion] += 1.0;
    double tvd = 0.0;
    for (int e = 0; e < kNumEmotions; ++e) {
      const double p = (double)report.emotion_counts[e] / report.total_qa;
      tvd += std::abs(p - q[e] / (double)source->size());
    }
    report.tvd_vs_source = 0.5 * tvd;
  }
  return report;
}

Json StatsReport::to_json() const {
  Json tasks_json = Json::object();
  for (int t = 0; t < kNumBenchTasks; ++t) {
    tasks_json[std::string(to_string(kAllBenchTasks[t]))] =
        Json{{"qa_count", tasks[t].qa_count},
             {"unique_videos", tasks[t].unique_videos},
             {"random_accuracy", tasks[t].random_accuracy}};
  }
  Json emotions_json = Json::object();
  for (int e = 0; e < kNumEmotions; ++e) {
    emotions_json[std::string(to_string(kAllEmotions[e]))] = emotion_counts[e];
  }
  Json j{{"total_qa", total_qa},
         {"unique_videos", unique_videos},
         {"tasks", tasks_json},
         {"emotion_counts", emotions_json}};
  if (tvd_vs_source) j["tvd_vs_source"] = *tvd_vs_source;
  return j;
}

}  // namespace avemdpo::bench
