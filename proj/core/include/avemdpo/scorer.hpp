#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avemdpo/autograd.hpp"
#include "avemdpo/jsonl.hpp"
#include "avemdpo/labels.hpp"

// A small decoder-only transformer that scores a response given discrete
// audio tokens, video tokens and a text prompt, laid out as the sequence
// [audio][video][prompt][response]. Three scoring roles share one
// architecture:
//
//   policy     adapted model being trained; the only trainable pieces are
//              low-rank adapters on attention projections plus the audio
//              and video input projectors
//   reference  frozen copy of the policy's initialization
//   text prior the reference backbone run on [prompt][response] alone
//
// The adapter computes y = x W + (scale / rank) x A B with B zero at
// init, so a fresh policy scores bit-identically to its reference.

namespace avemdpo::scorer {

struct ScorerConfig {
  int text_vocab = 16;
  int audio_vocab = 12;
  int video_vocab = 12;
  int d_model = 16;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 32;
  int code_dim = 8;  // codebook width before the AV projectors
  int max_seq = 64;
  uint64_t init_seed = 17;

  void validate() const;
  Json to_json() const;
  static ScorerConfig from_json(const Json& j);
};

struct AdapterConfig {
  int rank = 8;
  double scale = 4.0;
  bool on_q = true;
  bool on_v = true;

  void validate() const;
  Json to_json() const;
  static AdapterConfig from_json(const Json& j);
};

struct TokenStreams {
  std::vector<int> audio;
  std::vector<int> video;
  std::vector<int> prompt;
  std::vector<int> response;
  // Which modality the prompt asks about; carried for mask bookkeeping,
  // scoring itself does not read it.
  ModalityTag modality_tag = ModalityTag::kAV;
};

// kTextOnly drops the audio and video segments entirely; the text prior
// is the reference model scored in this mode.
enum class InputMode { kFull, kTextOnly };

struct Model {
  ScorerConfig cfg;
  std::optional<AdapterConfig> adapter;
  // deque keeps Param addresses stable while the model lives.
  std::deque<autograd::Param> params;

  autograd::Param& find(std::string_view name);
  const autograd::Param& find(std::string_view name) const;
  std::vector<autograd::Param*> trainable_params();
  size_t trainable_size() const;
};

// Builds a model with freshly initialized weights. Every weight stream is
// derived from (cfg.init_seed, parameter name), so construction order
// cannot change the numbers. When `adapter` is set its A/B matrices and
// the AV projectors are trainable; everything else is frozen.
Model init_model(const ScorerConfig& cfg,
                 const std::optional<AdapterConfig>& adapter);

struct ModelSet {
  Model policy;
  Model reference;
};

// Policy with adapters plus a frozen adapter-free copy. The two score
// identically until the first optimizer step.
ModelSet init_models(const ScorerConfig& cfg, const AdapterConfig& adapter);

struct ScoreGraph {
  autograd::Tape tape;
  autograd::NodeId logp = -1;    // 1x1 sum of response-token log-probs
  autograd::NodeId logits = -1;  // T x text_vocab pre-softmax scores
  std::vector<autograd::NodeId> attention;  // one per (layer, head)
  int audio_len = 0;
  int video_len = 0;
  int prompt_len = 0;
  int response_len = 0;
};

// Forward pass; call graph.tape.backward(graph.logp, seed) to train.
ScoreGraph build_score_graph(Model& model, const TokenStreams& s,
                             InputMode mode);

double sequence_log_prob(Model& model, const TokenStreams& s,
                         InputMode mode = InputMode::kFull);

// Reference backbone on text alone; ignores s.audio / s.video.
double text_prior_log_prob(Model& reference, const TokenStreams& s);

// Percentage of post-softmax attention mass that response positions spend
// on each input segment, averaged over layers and heads. Sums to 100.
struct AttentionShare {
  double audio = 0.0;
  double video = 0.0;
  double text = 0.0;  // prompt plus response
  double multimodal() const { return audio + video; }
};
AttentionShare attention_share(Model& model, const TokenStreams& s);

// Extends s.response by n_new argmax tokens. Deterministic.
std::vector<int> greedy_decode(Model& model, const TokenStreams& s, int n_new,
                               InputMode mode = InputMode::kFull);

// Binary checkpoint: magic, JSON meta (with a table of blob shapes), then
// raw little-endian doubles. Round-trips bit-exactly.
struct Checkpoint {
  Json meta;
  std::vector<std::pair<std::string, autograd::Matrix>> blobs;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// All parameters of `model` as checkpoint blobs under their names.
Checkpoint snapshot_params(const Model& model, Json meta);
// Copies matching blobs back into the model; throws on missing names or
// shape mismatches.
void restore_params(Model& model, const Checkpoint& ck);

// Drift check against snapshots taken before training. Frozen things must
// not move: the reference (whose backbone doubles as the text prior) and
// the policy's non-trainable backbone. Throws on any frozen drift.
struct GuardReport {
  double reference_drift = 0.0;  // max |delta| over reference params
  double backbone_drift = 0.0;   // max |delta| over frozen policy params
  double adapter_change = 0.0;   // max |delta| over trainable policy params
};
GuardReport apply_adapter_step_guard(const Model& policy,
                                     const Model& reference,
                                     const Checkpoint& policy_baseline,
                                     const Checkpoint& reference_baseline);

}  // namespace avemdpo::scorer
