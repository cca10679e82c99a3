#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "avemdpo/jsonl.hpp"
#include "avemdpo/labels.hpp"
#include "avemdpo/rng.hpp"

// Clients standing in for the captioning / labeling / generation models
// the pipelines call out to. Everything speaks JSON request/response so a
// recorded-fixture client can replay any exchange byte-for-byte.
//
// Request documents carry a "kind" field:
//   caption          {kind, modality: audio|visual, video_ref, gt_emotion}
//   classify_emotion {kind, caption}
//   question         {kind, task, caption, emotion}
//   stress_cue       {kind, subtask, modality, caption, emotion}
//   rejection_pair   {kind, flavor, prompt, y_w, emotion}
//   text_guess       {kind, question, choices}
// plus an optional "prompt_text" with the rendered instruction template,
// which replay keys include so template edits invalidate stale fixtures.

namespace avemdpo::annotator {

struct AnnotatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class AnnotatorClient {
 public:
  virtual ~AnnotatorClient() = default;
  virtual Json annotate(const Json& request) = 0;
  virtual std::string name() const = 0;
};

// Stable content hash of a request, used as the fixture file stem.
std::string request_key(const Json& request);

// Replays responses recorded under <dir>/<key>.json. A missing or
// mismatched fixture raises AnnotatorError naming the key so the operator
// can record it.
class FixtureAnnotator : public AnnotatorClient {
 public:
  explicit FixtureAnnotator(std::filesystem::path dir);
  Json annotate(const Json& request) override;
  std::string name() const override { return "fixture"; }

  // Writes {request, response} for later replay.
  static void record(const std::filesystem::path& dir, const Json& request,
                     const Json& response);

 private:
  std::filesystem::path dir_;
};

// Deterministic generator: the response is a pure function of (seed,
// request), so call order never matters. Captions carry an explicit
// emotion word most of the time and are deliberately wrong or evasive on
// a seeded minority, which exercises the discard paths downstream.
class SyntheticAnnotator : public AnnotatorClient {
 public:
  explicit SyntheticAnnotator(uint64_t seed);
  Json annotate(const Json& request) override;
  std::string name() const override { return "synthetic"; }

 private:
  uint64_t seed_;
};

// Cue phrase tables the synthetic annotator draws from; exposed so
// fixtures and the synthetic dataset builder stay consistent with it.
const std::vector<std::string>& audio_cues(EmotionLabel e);
const std::vector<std::string>& visual_cues(EmotionLabel e);
// Present-but-emotion-irrelevant cues for the spurious stress subtask.
const std::vector<std::string>& spurious_cues(ModalityTag m);

// Text-only answerers for the benchmark's guessability filter.
class TextGuesser {
 public:
  virtual ~TextGuesser() = default;
  virtual std::string name() const = 0;
  // Returns the chosen index into `choices`; may throw on failure.
  virtual int guess(const std::string& question,
                    const std::vector<std::string>& choices) = 0;
};

// Uniform over choices; independent draws, one stream per guesser.
class RandomGuesser : public TextGuesser {
 public:
  RandomGuesser(std::string name, uint64_t seed);
  std::string name() const override { return name_; }
  int guess(const std::string& question,
            const std::vector<std::string>& choices) override;

 private:
  std::string name_;
  Rng rng_;
};

// Picks the choice with the most word overlap against the question,
// first index winning ties.
class LexicalGuesser : public TextGuesser {
 public:
  std::string name() const override { return "lexical"; }
  int guess(const std::string& question,
            const std::vector<std::string>& choices) override;
};

// Routes guesses through an annotator client's text_guess kind; the
// response's "answer" must equal one choice verbatim.
class ClientGuesser : public TextGuesser {
 public:
  explicit ClientGuesser(std::shared_ptr<AnnotatorClient> client);
  std::string name() const override;
  int guess(const std::string& question,
            const std::vector<std::string>& choices) override;

 private:
  std::shared_ptr<AnnotatorClient> client_;
};

// {placeholder} substitution. Unresolved names throw with the full list.
std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& vars);
// Loads <dir>/<id>.txt.
std::string load_template(const std::filesystem::path& dir,
                          const std::string& id);

}  // namespace avemdpo::annotator
