#include "avemdpo/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "avemdpo/rng.hpp"

namespace avemdpo::scorer {

using autograd::Matrix;
using autograd::NodeId;
using autograd::Param;
using autograd::Tape;

void ScorerConfig::validate() const {
  if (text_vocab < 2 || audio_vocab < 1 || video_vocab < 1) {
    throw std::invalid_argument("vocab sizes must be positive (text >= 2)");
  }
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || code_dim < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("d_model must be divisible by n_heads");
  }
  if (max_seq < 2) {
    throw std::invalid_argument("max_seq must be at least 2");
  }
}

Json ScorerConfig::to_json() const {
  return Json{{"text_vocab", text_vocab},   {"audio_vocab", audio_vocab},
              {"video_vocab", video_vocab}, {"d_model", d_model},
              {"n_layers", n_layers},       {"n_heads", n_heads},
              {"d_ff", d_ff},               {"code_dim", code_dim},
              {"max_seq", max_seq},         {"init_seed", init_seed}};
}

ScorerConfig ScorerConfig::from_json(const Json& j) {
  ScorerConfig c;
  c.text_vocab = j.value("text_vocab", c.text_vocab);
  c.audio_vocab = j.value("audio_vocab", c.audio_vocab);
  c.video_vocab = j.value("video_vocab", c.video_vocab);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.code_dim = j.value("code_dim", c.code_dim);
  c.max_seq = j.value("max_seq", c.max_seq);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

void AdapterConfig::validate() const {
  if (rank < 1) throw std::invalid_argument("adapter rank must be positive");
  if (!(scale > 0.0)) throw std::invalid_argument("adapter scale must be > 0");
  if (!on_q && !on_v) {
    throw std::invalid_argument("adapter must target at least one projection");
  }
}

Json AdapterConfig::to_json() const {
  return Json{{"rank", rank}, {"scale", scale}, {"on_q", on_q}, {"on_v", on_v}};
}

AdapterConfig AdapterConfig::from_json(const Json& j) {
  AdapterConfig a;
  a.rank = j.value("rank", a.rank);
  a.scale = j.value("scale", a.scale);
  a.on_q = j.value("on_q", a.on_q);
  a.on_v = j.value("on_v", a.on_v);
  a.validate();
  return a;
}

Param& Model::find(std::string_view name) {
  for (Param& p : params) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("no parameter named '" + std::string(name) + "'");
}

const Param& Model::find(std::string_view name) const {
  for (const Param& p : params) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("no parameter named '" + std::string(name) + "'");
}

std::vector<Param*> Model::trainable_params() {
  std::vector<Param*> out;
  for (Param& p : params) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

size_t Model::trainable_size() const {
  size_t n = 0;
  for (const Param& p : params) {
    if (p.trainable) n += p.w.size();
  }
  return n;
}

namespace {

void init_normal(Param& p, uint64_t model_seed, double stddev) {
  Rng rng(derive_seed(model_seed, p.name));
  for (double& v : p.w.data) v = rng.normal() * stddev;
}

void init_ones(Param& p) {
  for (double& v : p.w.data) v = 1.0;
}

}  // namespace

Model init_model(const ScorerConfig& cfg,
                 const std::optional<AdapterConfig>& adapter) {
  cfg.validate();
  if (adapter) adapter->validate();

  Model m;
  m.cfg = cfg;
  m.adapter = adapter;
  const uint64_t seed = cfg.init_seed;

  auto add = [&](const std::string& name, int rows, int cols,
                 bool trainable) -> Param& {
    m.params.emplace_back(name, rows, cols, trainable);
    return m.params.back();
  };

  const double embed_sd = 0.5;
  const double proj_sd = 1.0 / std::sqrt((double)cfg.code_dim);
  const double attn_sd = 1.0 / std::sqrt((double)cfg.d_model);
  const double ff_sd = 1.0 / std::sqrt((double)cfg.d_ff);

  init_normal(add("text_embed", cfg.text_vocab, cfg.d_model, false), seed,
              embed_sd);
  init_normal(add("audio_codes", cfg.audio_vocab, cfg.code_dim, false), seed,
              embed_sd);
  init_normal(add("video_codes", cfg.video_vocab, cfg.code_dim, false), seed,
              embed_sd);
  const bool train_proj = adapter.has_value();
  init_normal(add("audio_proj", cfg.code_dim, cfg.d_model, train_proj), seed,
              proj_sd);
  init_normal(add("video_proj", cfg.code_dim, cfg.d_model, train_proj), seed,
              proj_sd);
  init_normal(add("seg_embed", 4, cfg.d_model, false), seed, 0.1);
  init_normal(add("pos_embed", cfg.max_seq, cfg.d_model, false), seed, 0.1);

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "L" + std::to_string(l) + ".";
    init_ones(add(pre + "ln1_gain", 1, cfg.d_model, false));
    init_normal(add(pre + "wq", cfg.d_model, cfg.d_model, false), seed, attn_sd);
    init_normal(add(pre + "wk", cfg.d_model, cfg.d_model, false), seed, attn_sd);
    init_normal(add(pre + "wv", cfg.d_model, cfg.d_model, false), seed, attn_sd);
    init_normal(add(pre + "wo", cfg.d_model, cfg.d_model, false), seed, attn_sd);
    if (adapter) {
      const double a_sd = 1.0 / std::sqrt((double)adapter->rank);
      if (adapter->on_q) {
        init_normal(add(pre + "lora_q.a", cfg.d_model, adapter->rank, true),
                    seed, a_sd);
        add(pre + "lora_q.b", adapter->rank, cfg.d_model, true);  // zeros
      }
      if (adapter->on_v) {
        init_normal(add(pre + "lora_v.a", cfg.d_model, adapter->rank, true),
                    seed, a_sd);
        add(pre + "lora_v.b", adapter->rank, cfg.d_model, true);
      }
    }
    init_ones(add(pre + "ln2_gain", 1, cfg.d_model, false));
    init_normal(add(pre + "ff1", cfg.d_model, cfg.d_ff, false), seed, attn_sd);
    init_normal(add(pre + "ff2", cfg.d_ff, cfg.d_model, false), seed, ff_sd);
  }
  init_ones(add("final_gain", 1, cfg.d_model, false));
  return m;
}

ModelSet init_models(const ScorerConfig& cfg, const AdapterConfig& adapter) {
  ModelSet set{init_model(cfg, adapter), init_model(cfg, std::nullopt)};
  // Frozen backbones are derived from the same seed, so the copies are
  // already identical; assert rather than trust.
  for (const Param& p : set.reference.params) {
    const Param& q = set.policy.find(p.name);
    if (q.w.data != p.w.data) {
      throw std::logic_error("policy/reference initialization diverged at " +
                             p.name);
    }
  }
  return set;
}

namespace {

void check_tokens(const std::vector<int>& ids, int vocab, const char* stream) {
  for (int v : ids) {
    if (v < 0 || v >= vocab) {
      throw std::invalid_argument(std::string(stream) + " token " +
                                  std::to_string(v) + " outside [0, " +
                                  std::to_string(vocab) + ")");
    }
  }
}

// Adapted projection: x W (+ scale/rank * x A B when the adapter targets
// this projection).
NodeId project(Tape& t, Model& m, NodeId x, const std::string& layer,
               const char* which, bool adapted) {
  NodeId y = t.matmul(x, t.param(m.find(layer + ".w" + which)));
  if (adapted && m.adapter) {
    NodeId a = t.param(m.find(layer + ".lora_" + which + ".a"));
    NodeId b = t.param(m.find(layer + ".lora_" + which + ".b"));
    NodeId delta = t.matmul(t.matmul(x, a), b);
    y = t.add(y, t.scale(delta, m.adapter->scale / m.adapter->rank));
  }
  return y;
}

}  // namespace

ScoreGraph build_score_graph(Model& m, const TokenStreams& s, InputMode mode) {
  const ScorerConfig& cfg = m.cfg;
  const bool text_only = mode == InputMode::kTextOnly;

  if (s.prompt.empty()) throw std::invalid_argument("prompt must be non-empty");
  if (s.response.empty()) {
    throw std::invalid_argument("response must be non-empty");
  }
  check_tokens(s.prompt, cfg.text_vocab, "prompt");
  check_tokens(s.response, cfg.text_vocab, "response");
  if (!text_only) {
    check_tokens(s.audio, cfg.audio_vocab, "audio");
    check_tokens(s.video, cfg.video_vocab, "video");
  }

  const int la = text_only ? 0 : (int)s.audio.size();
  const int lv = text_only ? 0 : (int)s.video.size();
  const int lp = (int)s.prompt.size();
  const int lr = (int)s.response.size();
  const int T = la + lv + lp + lr;
  if (T > cfg.max_seq) {
    throw std::invalid_argument("sequence length " + std::to_string(T) +
                                " exceeds max_seq " +
                                std::to_string(cfg.max_seq));
  }

  ScoreGraph g;
  g.audio_len = la;
  g.video_len = lv;
  g.prompt_len = lp;
  g.response_len = lr;
  Tape& t = g.tape;

  // Input embeddings per segment, stacked in sequence order.
  std::vector<int> text_ids = s.prompt;
  text_ids.insert(text_ids.end(), s.response.begin(), s.response.end());
  NodeId x = t.rows_gather(t.param(m.find("text_embed")), text_ids);
  if (lv > 0) {
    NodeId ve = t.matmul(t.rows_gather(t.param(m.find("video_codes")), s.video),
                         t.param(m.find("video_proj")));
    x = t.concat_rows(ve, x);
  }
  if (la > 0) {
    NodeId ae = t.matmul(t.rows_gather(t.param(m.find("audio_codes")), s.audio),
                         t.param(m.find("audio_proj")));
    x = t.concat_rows(ae, x);
  }

  std::vector<int> seg_ids, pos_ids;
  seg_ids.reserve(T);
  pos_ids.reserve(T);
  for (int i = 0; i < la; ++i) seg_ids.push_back(0);
  for (int i = 0; i < lv; ++i) seg_ids.push_back(1);
  for (int i = 0; i < lp; ++i) seg_ids.push_back(2);
  for (int i = 0; i < lr; ++i) seg_ids.push_back(3);
  for (int i = 0; i < T; ++i) pos_ids.push_back(i);
  x = t.add(x, t.rows_gather(t.param(m.find("seg_embed")), seg_ids));
  x = t.add(x, t.rows_gather(t.param(m.find("pos_embed")), pos_ids));

  const int dh = cfg.d_model / cfg.n_heads;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "L" + std::to_string(l);
    NodeId normed = t.rmsnorm(x, t.param(m.find(pre + ".ln1_gain")));
    const bool adapt_q = m.adapter && m.adapter->on_q;
    const bool adapt_v = m.adapter && m.adapter->on_v;
    NodeId q = project(t, m, normed, pre, "q", adapt_q);
    NodeId k = project(t, m, normed, pre, "k", false);
    NodeId v = project(t, m, normed, pre, "v", adapt_v);

    NodeId heads = -1;
    for (int h = 0; h < cfg.n_heads; ++h) {
      NodeId qh = t.slice_cols(q, h * dh, (h + 1) * dh);
      NodeId kh = t.slice_cols(k, h * dh, (h + 1) * dh);
      NodeId vh = t.slice_cols(v, h * dh, (h + 1) * dh);
      NodeId scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt((double)dh));
      NodeId attn = t.causal_softmax(scores);
      g.attention.push_back(attn);
      NodeId ctx = t.matmul(attn, vh);
      heads = (h == 0) ? ctx : t.concat_cols(heads, ctx);
    }
    NodeId attn_out = t.matmul(heads, t.param(m.find(pre + ".wo")));
    x = t.add(x, attn_out);

    NodeId normed2 = t.rmsnorm(x, t.param(m.find(pre + ".ln2_gain")));
    NodeId ff = t.matmul(t.tanh_op(t.matmul(normed2, t.param(m.find(pre + ".ff1")))),
                         t.param(m.find(pre + ".ff2")));
    x = t.add(x, ff);
  }

  NodeId final_norm = t.rmsnorm(x, t.param(m.find("final_gain")));
  g.logits = t.matmul_nt(final_norm, t.param(m.find("text_embed")));

  // Logits at position p predict the token at p + 1.
  const int first_resp = la + lv + lp;
  std::vector<std::pair<int, int>> picks;
  picks.reserve(lr);
  for (int i = 0; i < lr; ++i) {
    picks.emplace_back(first_resp - 1 + i, s.response[i]);
  }
  g.logp = t.log_softmax_gather_sum(g.logits, std::move(picks));
  return g;
}

double sequence_log_prob(Model& m, const TokenStreams& s, InputMode mode) {
  ScoreGraph g = build_score_graph(m, s, mode);
  return g.tape.scalar(g.logp);
}

double text_prior_log_prob(Model& reference, const TokenStreams& s) {
  return sequence_log_prob(reference, s, InputMode::kTextOnly);
}

AttentionShare attention_share(Model& m, const TokenStreams& s) {
  ScoreGraph g = build_score_graph(m, s, InputMode::kFull);
  const int a_end = g.audio_len;
  const int v_end = a_end + g.video_len;
  const int first_resp = v_end + g.prompt_len;
  const int T = first_resp + g.response_len;

  double audio = 0.0, video = 0.0, text = 0.0;
  for (NodeId id : g.attention) {
    const Matrix& attn = g.tape.value(id);
    for (int r = first_resp; r < T; ++r) {
      for (int c = 0; c < a_end; ++c) audio += attn.at(r, c);
      for (int c = a_end; c < v_end; ++c) video += attn.at(r, c);
      for (int c = v_end; c < T; ++c) text += attn.at(r, c);
    }
  }
  const double rows = (double)g.attention.size() * g.response_len;
  AttentionShare share;
  share.audio = 100.0 * audio / rows;
  share.video = 100.0 * video / rows;
  share.text = 100.0 * text / rows;
  return share;
}

std::vector<int> greedy_decode(Model& m, const TokenStreams& s, int n_new,
                               InputMode mode) {
  if (n_new < 1) throw std::invalid_argument("n_new must be positive");
  TokenStreams cur = s;
  std::vector<int> out;
  out.reserve(n_new);
  for (int step = 0; step < n_new; ++step) {
    // Score with a placeholder final token; its logits row is the one
    // before it, which depends only on the real tokens.
    cur.response.push_back(0);
    ScoreGraph g = build_score_graph(m, cur, mode);
    const Matrix& logits = g.tape.value(g.logits);
    const int row = logits.rows - 2 >= 0 ? logits.rows - 2 : 0;
    int best = 0;
    for (int c = 1; c < logits.cols; ++c) {
      if (logits.at(row, c) > logits.at(row, best)) best = c;
    }
    cur.response.back() = best;
    out.push_back(best);
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'A', 'V', 'D', 'P', '0', '0', '0', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Json header = ck.meta;
  Json table = Json::array();
  for (const auto& [name, mat] : ck.blobs) {
    table.push_back(Json{{"name", name}, {"rows", mat.rows}, {"cols", mat.cols}});
  }
  header["blobs"] = table;
  const std::string header_bytes = header.dump();

  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    }
    out.write(kMagic, sizeof(kMagic));
    const uint64_t len = header_bytes.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_bytes.data(), (std::streamsize)header_bytes.size());
    for (const auto& [name, mat] : ck.blobs) {
      out.write(reinterpret_cast<const char*>(mat.data.data()),
                (std::streamsize)(mat.data.size() * sizeof(double)));
    }
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint file");
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1ull << 30)) {
    throw std::runtime_error(path.string() + ": corrupt header length");
  }
  std::string header_bytes(len, '\0');
  in.read(header_bytes.data(), (std::streamsize)len);
  if (!in) throw std::runtime_error(path.string() + ": truncated header");

  Json header;
  try {
    header = Json::parse(header_bytes);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": corrupt header JSON: " +
                             e.what());
  }

  Checkpoint ck;
  for (const auto& entry : header.at("blobs")) {
    const std::string name = entry.at("name");
    Matrix mat(entry.at("rows").get<int>(), entry.at("cols").get<int>());
    in.read(reinterpret_cast<char*>(mat.data.data()),
            (std::streamsize)(mat.data.size() * sizeof(double)));
    if (!in) {
      throw std::runtime_error(path.string() + ": truncated blob '" + name +
                               "'");
    }
    ck.blobs.emplace_back(name, std::move(mat));
  }
  header.erase("blobs");
  ck.meta = std::move(header);
  return ck;
}

Checkpoint snapshot_params(const Model& m, Json meta) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  for (const Param& p : m.params) {
    ck.blobs.emplace_back(p.name, p.w);
  }
  return ck;
}

namespace {

const Matrix& blob_named(const Checkpoint& ck, const std::string& name) {
  for (const auto& [n, mat] : ck.blobs) {
    if (n == name) return mat;
  }
  throw std::runtime_error("baseline snapshot is missing '" + name + "'");
}

double max_abs_delta(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::runtime_error("baseline snapshot shape mismatch");
  }
  double mx = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    mx = std::max(mx, std::fabs(a.data[i] - b.data[i]));
  }
  return mx;
}

}  // namespace

GuardReport apply_adapter_step_guard(const Model& policy,
                                     const Model& reference,
                                     const Checkpoint& policy_baseline,
                                     const Checkpoint& reference_baseline) {
  GuardReport r;
  for (const Param& p : reference.params) {
    r.reference_drift = std::max(
        r.reference_drift, max_abs_delta(p.w, blob_named(reference_baseline, p.name)));
  }
  for (const Param& p : policy.params) {
    const double d = max_abs_delta(p.w, blob_named(policy_baseline, p.name));
    if (p.trainable) {
      r.adapter_change = std::max(r.adapter_change, d);
    } else {
      r.backbone_drift = std::max(r.backbone_drift, d);
    }
  }
  if (r.reference_drift != 0.0) {
    throw std::runtime_error("frozen reference drifted by " +
                             std::to_string(r.reference_drift));
  }
  if (r.backbone_drift != 0.0) {
    throw std::runtime_error("frozen policy backbone drifted by " +
                             std::to_string(r.backbone_drift));
  }
  return r;
}

void restore_params(Model& m, const Checkpoint& ck) {
  for (Param& p : m.params) {
    const autograd::Matrix* found = nullptr;
    for (const auto& [name, mat] : ck.blobs) {
      if (name == p.name) {
        found = &mat;
        break;
      }
    }
    if (!found) {
      throw std::runtime_error("checkpoint is missing parameter '" + p.name +
                               "'");
    }
    if (found->rows != p.w.rows || found->cols != p.w.cols) {
      throw std::runtime_error("checkpoint shape mismatch for '" + p.name +
                               "'");
    }
    p.w = *found;
  }
}

}  // namespace avemdpo::scorer
