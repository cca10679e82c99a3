#include "avemdpo/annotator.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace avemdpo::annotator {

std::string request_key(const Json& request) {
  const std::string dump = request.dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex;
  for (int shift = 60; shift >= 0; shift -= 4) {
    out << ((h >> shift) & 0xF);
  }
  return out.str();
}

FixtureAnnotator::FixtureAnnotator(std::filesystem::path dir)
    : dir_(std::move(dir)) {}

Json FixtureAnnotator::annotate(const Json& request) {
  const std::string key = request_key(request);
  const std::filesystem::path file = dir_ / (key + ".json");
  if (!std::filesystem::exists(file)) {
    throw AnnotatorError("no fixture " + key + ".json in " + dir_.string() +
                         " for request kind '" +
                         request.value("kind", std::string("?")) + "'");
  }
  Json doc;
  try {
    doc = Json::parse(read_text(file));
  } catch (const Json::parse_error& e) {
    throw AnnotatorError("fixture " + file.string() + " is not valid JSON: " +
                         e.what());
  }
  if (doc.value("request", Json()) != request) {
    throw AnnotatorError("fixture " + key + ".json was recorded for a "
                         "different request (stale or colliding fixture)");
  }
  return doc.at("response");
}

void FixtureAnnotator::record(const std::filesystem::path& dir,
                              const Json& request, const Json& response) {
  const std::string key = request_key(request);
  Json doc{{"request", request}, {"response", response}};
  write_text_atomic(dir / (key + ".json"), doc.dump(2) + "\n");
}

namespace {

const std::vector<std::string>& cue_table(EmotionLabel e, bool audio) {
  static const std::vector<std::string> a_happy = {
      "bright rising laughter", "an upbeat lilt in the voice",
      "a warm chuckle between words", "a quick cheerful cadence"};
  static const std::vector<std::string> a_sad = {
      "a cracking tearful voice", "slow heavy sighs", "muffled sobbing",
      "flat trailing-off sentences"};
  static const std::vector<std::string> a_neutral = {
      "even measured narration", "a steady conversational tone",
      "unhurried plain delivery", "calm level phrasing"};
  static const std::vector<std::string> a_angry = {
      "sharp raised shouting", "clipped harsh consonants",
      "growling low threats", "rapid forceful outbursts"};
  static const std::vector<std::string> a_surprise = {
      "a sudden sharp gasp", "pitch jumping mid-sentence",
      "breathless exclamations", "an abrupt startled cry"};
  static const std::vector<std::string> a_disgust = {
      "a drawn-out groan of distaste", "scoffing under the breath",
      "a nasal sneering tone", "a curt dismissive snort"};
  static const std::vector<std::string> a_fear = {
      "a trembling whisper", "shaky quickened breathing",
      "halting stammered words", "a thin quavering pitch"};

  static const std::vector<std::string> v_happy = {
      "a wide open smile", "crinkled eyes while laughing",
      "a relaxed bouncing posture", "raised cheeks and a bright gaze"};
  static const std::vector<std::string> v_sad = {
      "a downturned mouth and wet eyes", "slumped shoulders",
      "a slow wiping of tears", "a lowered head and distant stare"};
  static const std::vector<std::string> v_neutral = {
      "a still relaxed face", "a level steady gaze",
      "loose arms at the sides", "an unchanging calm expression"};
  static const std::vector<std::string> v_angry = {
      "a furrowed brow and clenched jaw", "pointed jabbing gestures",
      "a reddened tense face", "fists pressed on the table"};
  static const std::vector<std::string> v_surprise = {
      "raised eyebrows and an open mouth", "hands flying up to the face",
      "a frozen wide-eyed stare", "a sudden step backward"};
  static const std::vector<std::string> v_disgust = {
      "a wrinkled nose and curled lip", "the head turning away sharply",
      "a squinting recoil", "a hand pushing the plate away"};
  static const std::vector<std::string> v_fear = {
      "widened eyes darting around", "shrinking back against the wall",
      "hands gripping the collar", "a stiff frozen crouch"};

  switch (e) {
    case EmotionLabel::kHappy:
      return audio ? a_happy : v_happy;
    case EmotionLabel::kSad:
      return audio ? a_sad : v_sad;
    case EmotionLabel::kNeutral:
      return audio ? a_neutral : v_neutral;
    case EmotionLabel::kAngry:
      return audio ? a_angry : v_angry;
    case EmotionLabel::kSurprise:
      return audio ? a_surprise : v_surprise;
    case EmotionLabel::kDisgust:
      return audio ? a_disgust : v_disgust;
    case EmotionLabel::kFear:
      return audio ? a_fear : v_fear;
  }
  throw std::invalid_argument("unknown emotion label");
}

}  // namespace

const std::vector<std::string>& audio_cues(EmotionLabel e) {
  return cue_table(e, true);
}

const std::vector<std::string>& visual_cues(EmotionLabel e) {
  return cue_table(e, false);
}

const std::vector<std::string>& spurious_cues(ModalityTag m) {
  static const std::vector<std::string> audio = {
      "a faint air-conditioner hum", "distant traffic noise",
      "a clatter of dishes off-screen", "a low room echo"};
  static const std::vector<std::string> visual = {
      "a potted plant in the corner", "the plain beige wallpaper",
      "a stack of books on the desk", "a striped curtain behind the chair"};
  static const std::vector<std::string> both = {
      "a faint air-conditioner hum", "distant traffic noise",
      "a potted plant in the corner", "the plain beige wallpaper"};
  switch (m) {
    case ModalityTag::kA:
      return audio;
    case ModalityTag::kV:
      return visual;
    case ModalityTag::kAV:
      return both;
  }
  throw std::invalid_argument("unknown modality tag");
}

SyntheticAnnotator::SyntheticAnnotator(uint64_t seed) : seed_(seed) {}

namespace {

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}

Json synth_caption(Rng& rng, const Json& request) {
  const bool audio = request.at("modality") == "audio";
  const EmotionLabel gt =
      emotion_from_string(request.at("gt_emotion").get<std::string>());
  const double roll = rng.next_double();
  if (roll >= 0.95) {
    // Evasive caption: no readable emotion.
    return Json{{"caption",
                 audio ? "A voice speaks over light background noise, the "
                         "tone hard to place."
                       : "A figure sits partly out of frame, the face hard "
                         "to read."}};
  }
  EmotionLabel described = gt;
  if (roll >= 0.80) {
    // Mislabeled caption.
    while (described == gt) {
      described = kAllEmotions[rng.below(kAllEmotions.size())];
    }
  }
  const std::string cue = pick(rng, cue_table(described, audio));
  const std::string caption =
      std::string(audio ? "The character speaks with " : "The character shows ") +
      cue + ", suggesting a " + std::string(to_string(described)) + " mood.";
  return Json{{"caption", caption}};
}

Json synth_classify(const Json& request) {
  const std::string caption = request.at("caption");
  for (EmotionLabel e : kAllEmotions) {
    if (caption.find(std::string(to_string(e))) != std::string::npos) {
      return Json{{"emotion", std::string(to_string(e))}};
    }
  }
  return Json{{"emotion", "none"}};
}

// Cut the caption's explicit ", suggesting a <emotion> mood" giveaway so
// generated questions do not leak their answer.
std::string strip_emotion_clause(std::string caption) {
  const size_t at = caption.find(", suggesting");
  if (at != std::string::npos) {
    caption = caption.substr(0, at) + ".";
  }
  return caption;
}

Json synth_question(Rng& rng, const Json& request) {
  static const std::vector<std::string> stems = {
      "Which emotion does the character most likely express?",
      "What emotion best matches the character's state?",
      "Which of the following emotions fits the character best?"};
  const std::string caption = strip_emotion_clause(request.at("caption"));
  return Json{{"question", caption + " " + pick(rng, stems)}};
}

Json synth_stress_cue(Rng& rng, const Json& request) {
  const StressSubtask sub =
      stress_subtask_from_string(request.at("subtask").get<std::string>());
  const ModalityTag m =
      modality_from_string(request.at("modality").get<std::string>());
  const EmotionLabel e =
      emotion_from_string(request.at("emotion").get<std::string>());
  switch (sub) {
    case StressSubtask::kNoHallucination:
    case StressSubtask::kEmotionRelevantHallucination:
      return Json{{"cue", pick(rng, cue_table(e, m == ModalityTag::kA))}};
    case StressSubtask::kSpuriousAssociation:
      return Json{{"cue", pick(rng, spurious_cues(m))}};
    case StressSubtask::kNone:
      break;
  }
  throw AnnotatorError("stress_cue request for subtask 'none'");
}

Json synth_rejections(Rng& rng, const Json& request) {
  const std::string flavor = request.at("flavor");
  const EmotionLabel e =
      emotion_from_string(request.at("emotion").get<std::string>());
  const bool audio_flavor = flavor == "audio-reasoning";
  // Spurious but genuinely present cue, wrong grounds for the emotion.
  const std::string vr =
      "The " +
      pick(rng, spurious_cues(audio_flavor ? ModalityTag::kA : ModalityTag::kV)) +
      " hints at the character's state here.";
  // Emotion-appropriate cue that the clip never shows.
  const std::string er =
      "The character's " + pick(rng, cue_table(e, audio_flavor)) +
      " makes the " + std::string(to_string(e)) + " feeling obvious.";
  return Json{{"y_l_vr", vr}, {"y_l_er", er}};
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back((char)std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int lexical_best(const std::string& question,
                 const std::vector<std::string>& choices) {
  const std::vector<std::string> qw = words_of(question);
  const std::set<std::string> qset(qw.begin(), qw.end());
  int best = 0;
  int best_overlap = -1;
  for (size_t i = 0; i < choices.size(); ++i) {
    int overlap = 0;
    for (const std::string& w : words_of(choices[i])) {
      if (qset.count(w)) ++overlap;
    }
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = (int)i;
    }
  }
  return best;
}

Json synth_text_guess(const Json& request) {
  const std::vector<std::string> choices =
      request.at("choices").get<std::vector<std::string>>();
  if (choices.empty()) throw AnnotatorError("text_guess with no choices");
  const int idx = lexical_best(request.at("question"), choices);
  return Json{{"answer", choices[idx]}};
}

}  // namespace

Json SyntheticAnnotator::annotate(const Json& request) {
  const std::string kind = request.value("kind", std::string());
  Rng rng(derive_seed(seed_, request.dump()));
  if (kind == "caption") return synth_caption(rng, request);
  if (kind == "classify_emotion") return synth_classify(request);
  if (kind == "question") return synth_question(rng, request);
  if (kind == "stress_cue") return synth_stress_cue(rng, request);
  if (kind == "rejection_pair") return synth_rejections(rng, request);
  if (kind == "text_guess") return synth_text_guess(request);
  throw AnnotatorError("unknown request kind '" + kind + "'");
}

RandomGuesser::RandomGuesser(std::string name, uint64_t seed)
    : name_(std::move(name)), rng_(seed) {}

int RandomGuesser::guess(const std::string& question,
                         const std::vector<std::string>& choices) {
  (void)question;
  if (choices.empty()) throw std::invalid_argument("guess with no choices");
  return (int)rng_.below(choices.size());
}

int LexicalGuesser::guess(const std::string& question,
                          const std::vector<std::string>& choices) {
  if (choices.empty()) throw std::invalid_argument("guess with no choices");
  return lexical_best(question, choices);
}

ClientGuesser::ClientGuesser(std::shared_ptr<AnnotatorClient> client)
    : client_(std::move(client)) {}

std::string ClientGuesser::name() const {
  return "client:" + client_->name();
}

int ClientGuesser::guess(const std::string& question,
                         const std::vector<std::string>& choices) {
  const Json response = client_->annotate(
      Json{{"kind", "text_guess"}, {"question", question}, {"choices", choices}});
  const std::string answer = response.at("answer");
  for (size_t i = 0; i < choices.size(); ++i) {
    if (choices[i] == answer) return (int)i;
  }
  throw AnnotatorError("text_guess answer '" + answer +
                       "' matches no choice");
}

std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& vars) {
  std::string out;
  std::vector<std::string> unresolved;
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    const size_t close = text.find('}', i + 1);
    if (close == std::string::npos) {
      throw std::invalid_argument("unterminated '{' in template");
    }
    const std::string name = text.substr(i + 1, close - i - 1);
    auto it = vars.find(name);
    if (it == vars.end()) {
      unresolved.push_back(name);
      out += "{" + name + "}";
    } else {
      out += it->second;
    }
    i = close + 1;
  }
  if (!unresolved.empty()) {
    std::string msg = "unresolved template placeholders:";
    for (const std::string& n : unresolved) msg += " {" + n + "}";
    throw std::invalid_argument(msg);
  }
  return out;
}

std::string load_template(const std::filesystem::path& dir,
                          const std::string& id) {
  return read_text(dir / (id + ".txt"));
}

}  // namespace avemdpo::annotator
