#include "avemdpo/train.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "avemdpo/rng.hpp"

namespace avemdpo::train {

namespace fs = std::filesystem;

Ablation ablation_from_string(std::string_view s) {
  if (s == "full") return Ablation::kFull;
  if (s == "no_pmp") return Ablation::kNoPmp;
  if (s == "no_erp") return Ablation::kNoErp;
  if (s == "no_tpd") return Ablation::kNoTpd;
  throw std::invalid_argument("unknown ablation: " + std::string(s));
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoPmp: return "no_pmp";
    case Ablation::kNoErp: return "no_erp";
    case Ablation::kNoTpd: return "no_tpd";
  }
  throw std::logic_error("unreachable");
}

std::vector<int> encode_text(const std::string& text, int vocab) {
  if (vocab <= 0) {
    throw std::invalid_argument("encode_text: vocabulary must be positive");
  }
  std::vector<int> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace((unsigned char)text[i])) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace((unsigned char)text[j])) ++j;
    if (j == i) break;
    bool digits = true;
    for (size_t k = i; k < j; ++k) {
      digits = digits && std::isdigit((unsigned char)text[k]);
    }
    if (digits) {
      long v = 0;
      for (size_t k = i; k < j; ++k) v = (v * 10 + (text[k] - '0')) % vocab;
      out.push_back((int)v);
    } else {
      uint64_t h = 1469598103934665603ull;
      for (size_t k = i; k < j; ++k) {
        h ^= (unsigned char)text[k];
        h *= 1099511628211ull;
      }
      out.push_back((int)(h % (uint64_t)vocab));
    }
    i = j;
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (grad_accum_steps < 1) {
    throw std::invalid_argument("grad_accum_steps must be >= 1");
  }
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (checkpoint_every < 0) {
    throw std::invalid_argument("checkpoint_every must be >= 0");
  }
  loss.validate();
  scorer.validate();
  adapter.validate();
}

namespace {

Json loss_to_json(const losses::LossConfig& c) {
  return Json{{"beta", c.beta},
              {"beta_vr", c.beta_vr},
              {"beta_er", c.beta_er},
              {"gamma_tpd", c.gamma_tpd},
              {"lambda_av", c.lambda_av}};
}

losses::LossConfig loss_from_json(const Json& j) {
  losses::LossConfig c;
  c.beta = j.at("beta").get<double>();
  c.beta_vr = j.at("beta_vr").get<double>();
  c.beta_er = j.at("beta_er").get<double>();
  c.gamma_tpd = j.at("gamma_tpd").get<double>();
  c.lambda_av = j.at("lambda_av").get<double>();
  return c;
}

}  // namespace

Json TrainConfig::to_json() const {
  return Json{{"learning_rate", learning_rate},
              {"batch_size", batch_size},
              {"grad_accum_steps", grad_accum_steps},
              {"epochs", epochs},
              {"seed", seed},
              {"momentum", momentum},
              {"checkpoint_every", checkpoint_every},
              {"ablation", std::string(to_string(ablation))},
              {"loss", loss_to_json(loss)},
              {"scorer", scorer.to_json()},
              {"adapter", adapter.to_json()},
              {"checkpoint_dir", checkpoint_dir}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.grad_accum_steps = j.at("grad_accum_steps").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("checkpoint_every")) {
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
  }
  if (j.contains("ablation")) {
    c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  }
  if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"));
  if (j.contains("scorer")) {
    c.scorer = scorer::ScorerConfig::from_json(j.at("scorer"));
  }
  if (j.contains("adapter")) {
    c.adapter = scorer::AdapterConfig::from_json(j.at("adapter"));
  }
  if (j.contains("checkpoint_dir")) {
    c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::profile(std::string_view name) {
  TrainConfig c;
  if (name == "toy") {
    c.learning_rate = 3e-2;
    c.batch_size = 8;
    c.grad_accum_steps = 1;
    c.epochs = 1;
    return c;
  }
  if (name == "paper-c3") {
    c.learning_rate = 5e-7;
    c.batch_size = 2;
    c.grad_accum_steps = 4;
    c.epochs = 1;
    return c;
  }
  throw std::invalid_argument("unknown training profile: " + std::string(name));
}

Json StepLog::to_json() const {
  return Json{{"step", step},
              {"total", total},
              {"tpd_term", tpd_term},
              {"pmp_term", pmp_term},
              {"reward_margin", reward_margin},
              {"preference_accuracy", preference_accuracy}};
}

StepLog StepLog::from_json(const Json& j) {
  StepLog log;
  log.step = j.at("step").get<int64_t>();
  log.total = j.at("total").get<double>();
  log.tpd_term = j.at("tpd_term").get<double>();
  log.pmp_term = j.at("pmp_term").get<double>();
  log.reward_margin = j.at("reward_margin").get<double>();
  log.preference_accuracy = j.at("preference_accuracy").get<double>();
  return log;
}

void save_history(const fs::path& path, const std::vector<StepLog>& history) {
  std::vector<Json> rows;
  rows.reserve(history.size());
  for (const StepLog& log : history) rows.push_back(log.to_json());
  write_jsonl_atomic(path, rows);
}

std::vector<StepLog> load_history(const fs::path& path) {
  std::vector<StepLog> out;
  const std::vector<Json> rows = read_jsonl(path);
  for (size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(StepLog::from_json(rows[i]));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(i + 1) +
                               ": " + e.what());
    }
  }
  return out;
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.cfg = cfg;
  st.models = scorer::init_models(cfg.scorer, cfg.adapter);
  st.policy_baseline =
      scorer::snapshot_params(st.models.policy, Json{{"role", "policy-baseline"}});
  st.reference_baseline = scorer::snapshot_params(
      st.models.reference, Json{{"role", "reference-baseline"}});
  for (autograd::Param* p : st.models.policy.trainable_params()) {
    st.velocity.emplace_back(p->w.rows, p->w.cols);
  }
  return st;
}

namespace {

struct RecordStreams {
  scorer::TokenStreams w;
  scorer::TokenStreams vr;
  scorer::TokenStreams er;
  scorer::TokenStreams neg;
};

RecordStreams record_streams(const TrainConfig& cfg, const TrainDataset& data,
                             const prefdata::PreferenceRecord& rec) {
  const int vocab = cfg.scorer.text_vocab;
  const prefdata::AvClip& chosen = data.clip(rec.chosen_av_ref);
  const prefdata::AvClip& rejected = data.clip(rec.rejected_av_ref);

  RecordStreams ss;
  ss.w.audio = chosen.audio;
  ss.w.video = chosen.video;
  ss.w.prompt = encode_text(rec.prompt, vocab);
  ss.w.modality_tag = rec.modality_tag;
  ss.w.response = encode_text(rec.y_w, vocab);

  ss.vr = ss.w;
  ss.vr.response = encode_text(rec.y_l_vr, vocab);
  ss.er = ss.w;
  ss.er.response = encode_text(rec.y_l_er, vocab);

  ss.neg = ss.w;
  ss.neg.audio = rejected.audio;
  ss.neg.video = rejected.video;
  return ss;
}

const FrozenScores& frozen_for(TrainState& st, const RecordStreams& ss,
                               const std::string& id) {
  auto it = st.frozen_cache.find(id);
  if (it != st.frozen_cache.end()) return it->second;
  FrozenScores f;
  scorer::Model& ref = st.models.reference;
  f.ref_w = scorer::sequence_log_prob(ref, ss.w);
  f.ref_vr = scorer::sequence_log_prob(ref, ss.vr);
  f.ref_er = scorer::sequence_log_prob(ref, ss.er);
  f.ref_w_neg = scorer::sequence_log_prob(ref, ss.neg);
  f.text_w = scorer::text_prior_log_prob(ref, ss.w);
  f.text_vr = scorer::text_prior_log_prob(ref, ss.vr);
  f.text_er = scorer::text_prior_log_prob(ref, ss.er);
  return st.frozen_cache.emplace(id, f).first->second;
}

losses::ScoredSequences assemble(const FrozenScores& f,
                                 const prefdata::PreferenceRecord& rec,
                                 double pw, double pvr, double per,
                                 double pneg) {
  losses::ScoredSequences s;
  s.logp_policy_w = pw;
  s.logp_policy_vr = pvr;
  s.logp_policy_er = per;
  s.logp_policy_w_neg = pneg;
  s.logp_ref_w = f.ref_w;
  s.logp_ref_vr = f.ref_vr;
  s.logp_ref_er = f.ref_er;
  s.logp_ref_w_neg = f.ref_w_neg;
  s.logp_text_w = f.text_w;
  s.logp_text_vr = f.text_vr;
  s.logp_text_er = f.text_er;
  s.pmp_mask = rec.pmp_mask;
  return s;
}

struct PartsGrad {
  losses::AvemDpoParts parts;
  losses::PolicyGrad grad;
};

PartsGrad apply_objective(const losses::ScoredSequences& s, ModalityTag m,
                          const losses::LossConfig& lc, Ablation a) {
  switch (a) {
    case Ablation::kFull:
      return {losses::avem_dpo_loss(s, m, lc), losses::avem_dpo_grad(s, m, lc)};
    case Ablation::kNoPmp: {
      losses::AvemDpoParts parts;
      parts.tpd_term = losses::tpd_response_loss(s, lc);
      parts.pmp_term = 0.0;
      parts.total = parts.tpd_term;
      return {parts, losses::tpd_response_grad(s, lc)};
    }
    case Ablation::kNoErp: {
      losses::AvemDpoParts parts;
      parts.tpd_term = losses::tpd_single_loss(s, false, lc);
      parts.pmp_term = losses::pmp_loss(s, m, lc);
      parts.total = parts.tpd_term + lc.lambda_av * parts.pmp_term;
      losses::PolicyGrad g = losses::tpd_single_grad(s, false, lc);
      const losses::PolicyGrad pg = losses::pmp_grad(s, m, lc);
      g.w += lc.lambda_av * pg.w;
      g.w_neg += lc.lambda_av * pg.w_neg;
      return {parts, g};
    }
    case Ablation::kNoTpd: {
      losses::LossConfig flat = lc;
      flat.gamma_tpd = 0.0;
      return {losses::avem_dpo_loss(s, m, flat),
              losses::avem_dpo_grad(s, m, flat)};
    }
  }
  throw std::logic_error("unreachable");
}

[[noreturn]] void abort_non_finite(TrainState& st, const std::string& field,
                                   double value,
                                   const prefdata::PreferenceRecord& rec) {
  std::string dumped;
  if (!st.cfg.checkpoint_dir.empty()) {
    fs::create_directories(st.cfg.checkpoint_dir);
    const fs::path path = fs::path(st.cfg.checkpoint_dir) / "dump.ckpt";
    save_train_checkpoint(path, st);
    dumped = "; state dumped to " + path.string();
  }
  throw std::runtime_error("non-finite " + field + " (" +
                           std::to_string(value) + ") scoring record '" +
                           rec.id + "' after optimizer step " +
                           std::to_string(st.step) + dumped);
}

void check_finite_scores(TrainState& st, const losses::ScoredSequences& s,
                         const prefdata::PreferenceRecord& rec) {
  const std::pair<const char*, double> fields[] = {
      {"logp_policy_w", s.logp_policy_w},
      {"logp_policy_vr", s.logp_policy_vr},
      {"logp_policy_er", s.logp_policy_er},
      {"logp_policy_w_neg", s.logp_policy_w_neg},
      {"logp_ref_w", s.logp_ref_w},
      {"logp_ref_vr", s.logp_ref_vr},
      {"logp_ref_er", s.logp_ref_er},
      {"logp_ref_w_neg", s.logp_ref_w_neg},
      {"logp_text_w", s.logp_text_w},
      {"logp_text_vr", s.logp_text_vr},
      {"logp_text_er", s.logp_text_er},
  };
  for (const auto& [name, value] : fields) {
    if (!std::isfinite(value)) abort_non_finite(st, name, value, rec);
  }
}

double preference_score(double margin_vr, double margin_er) {
  const double lo = std::min(margin_vr, margin_er);
  if (lo > 0.0) return 1.0;
  if (lo == 0.0) return 0.5;
  return 0.0;
}

StepLog apply_update(TrainState& st) {
  const double inv = 1.0 / (double)st.accum_records;
  std::vector<autograd::Param*> params = st.models.policy.trainable_params();
  for (size_t i = 0; i < params.size(); ++i) {
    autograd::Param* p = params[i];
    autograd::Matrix& v = st.velocity[i];
    for (size_t j = 0; j < p->w.data.size(); ++j) {
      const double g = p->g.data[j] * inv;
      v.data[j] = st.cfg.momentum * v.data[j] + g;
      p->w.data[j] -= st.cfg.learning_rate * v.data[j];
    }
    p->zero_grad();
  }
  st.step += 1;

  StepLog log;
  log.step = st.step;
  log.total = st.accum_total * inv;
  log.tpd_term = st.accum_tpd * inv;
  log.pmp_term = st.accum_pmp * inv;
  log.reward_margin = st.accum_margin * inv;
  log.preference_accuracy = st.accum_pref * inv;

  st.accum_micros = 0;
  st.accum_records = 0;
  st.accum_total = 0.0;
  st.accum_tpd = 0.0;
  st.accum_pmp = 0.0;
  st.accum_margin = 0.0;
  st.accum_pref = 0.0;
  return log;
}

}  // namespace

losses::ScoredSequences score_record(TrainState& state,
                                     const TrainDataset& data,
                                     const prefdata::PreferenceRecord& rec) {
  const RecordStreams ss = record_streams(state.cfg, data, rec);
  const FrozenScores& f = frozen_for(state, ss, rec.id);
  scorer::Model& policy = state.models.policy;
  return assemble(f, rec, scorer::sequence_log_prob(policy, ss.w),
                  scorer::sequence_log_prob(policy, ss.vr),
                  scorer::sequence_log_prob(policy, ss.er),
                  scorer::sequence_log_prob(policy, ss.neg));
}

std::optional<StepLog> train_step(TrainState& state, const TrainDataset& data,
                                  const std::vector<size_t>& micro_batch) {
  if (micro_batch.empty()) {
    throw std::invalid_argument("empty micro-batch");
  }
  for (size_t idx : micro_batch) {
    const prefdata::PreferenceRecord& rec = data.records.at(idx);
    const RecordStreams ss = record_streams(state.cfg, data, rec);
    const FrozenScores& frozen = frozen_for(state, ss, rec.id);

    scorer::Model& policy = state.models.policy;
    scorer::ScoreGraph gw =
        scorer::build_score_graph(policy, ss.w, scorer::InputMode::kFull);
    scorer::ScoreGraph gvr =
        scorer::build_score_graph(policy, ss.vr, scorer::InputMode::kFull);
    scorer::ScoreGraph ger =
        scorer::build_score_graph(policy, ss.er, scorer::InputMode::kFull);
    scorer::ScoreGraph gneg =
        scorer::build_score_graph(policy, ss.neg, scorer::InputMode::kFull);

    const losses::ScoredSequences s =
        assemble(frozen, rec, gw.tape.scalar(gw.logp), gvr.tape.scalar(gvr.logp),
                 ger.tape.scalar(ger.logp), gneg.tape.scalar(gneg.logp));
    check_finite_scores(state, s, rec);

    const PartsGrad pg =
        apply_objective(s, rec.modality_tag, state.cfg.loss, state.cfg.ablation);
    if (!std::isfinite(pg.parts.total)) {
      abort_non_finite(state, "total loss", pg.parts.total, rec);
    }

    if (pg.grad.w != 0.0) gw.tape.backward(gw.logp, pg.grad.w);
    if (pg.grad.vr != 0.0) gvr.tape.backward(gvr.logp, pg.grad.vr);
    if (pg.grad.er != 0.0) ger.tape.backward(ger.logp, pg.grad.er);
    if (pg.grad.w_neg != 0.0) gneg.tape.backward(gneg.logp, pg.grad.w_neg);

    const double margin_vr = losses::reward_margin(s.pair_vr(), state.cfg.loss);
    const double margin_er = losses::reward_margin(s.pair_er(), state.cfg.loss);
    state.accum_records += 1;
    state.accum_total += pg.parts.total;
    state.accum_tpd += pg.parts.tpd_term;
    state.accum_pmp += pg.parts.pmp_term;
    state.accum_margin += 0.5 * (margin_vr + margin_er);
    state.accum_pref += preference_score(margin_vr, margin_er);
  }
  state.accum_micros += 1;
  state.records_consumed += (int64_t)micro_batch.size();

  if (state.accum_micros >= state.cfg.grad_accum_steps) {
    return apply_update(state);
  }
  return std::nullopt;
}

std::optional<StepLog> flush_pending_update(TrainState& state) {
  if (state.accum_micros == 0) return std::nullopt;
  return apply_update(state);
}

namespace {

// The checkpoint directory is run placement, not training semantics: two
// runs differing only in where they write are the same computation, so
// the embedded config is stored and compared with it blanked. This keeps
// checkpoint bytes independent of the output path and lets a resumed run
// write somewhere new.
Json portable_config(const TrainConfig& cfg) {
  Json j = cfg.to_json();
  j["checkpoint_dir"] = "";
  return j;
}

}  // namespace

void save_train_checkpoint(const fs::path& path, const TrainState& state) {
  Json meta{{"format", "avemdpo-train-state"},
            {"step", state.step},
            {"records_consumed", state.records_consumed},
            {"config", portable_config(state.cfg)}};
  scorer::Checkpoint ck = scorer::snapshot_params(state.models.policy, meta);
  const scorer::Model& policy = state.models.policy;
  size_t i = 0;
  for (const autograd::Param& p : policy.params) {
    if (!p.trainable) continue;
    ck.blobs.emplace_back("velocity/" + p.name, state.velocity.at(i));
    ++i;
  }
  scorer::save_checkpoint(path, ck);
}

TrainState load_train_checkpoint(const fs::path& path,
                                 const TrainConfig& cfg) {
  scorer::Checkpoint ck = scorer::load_checkpoint(path);
  if (ck.meta.value("format", "") != "avemdpo-train-state") {
    throw std::runtime_error(path.string() +
                             ": not a training-state checkpoint");
  }
  if (ck.meta.at("config") != portable_config(cfg)) {
    throw std::invalid_argument(
        path.string() + ": checkpoint was written under a different config");
  }
  TrainState st = init_state(cfg);
  scorer::restore_params(st.models.policy, ck);
  std::vector<autograd::Param*> params = st.models.policy.trainable_params();
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string want = "velocity/" + params[i]->name;
    const autograd::Matrix* found = nullptr;
    for (const auto& [name, mat] : ck.blobs) {
      if (name == want) {
        found = &mat;
        break;
      }
    }
    if (!found) {
      throw std::runtime_error(path.string() + ": checkpoint is missing '" +
                               want + "'");
    }
    if (found->rows != st.velocity[i].rows ||
        found->cols != st.velocity[i].cols) {
      throw std::runtime_error(path.string() + ": shape mismatch for '" +
                               want + "'");
    }
    st.velocity[i] = *found;
  }
  st.step = ck.meta.at("step").get<int64_t>();
  st.records_consumed = ck.meta.at("records_consumed").get<int64_t>();
  return st;
}

TrainOutcome train_loop(const TrainConfig& cfg, const TrainDataset& data,
                        const fs::path& resume_from) {
  cfg.validate();
  if (data.records.empty()) {
    throw std::invalid_argument("training dataset is empty");
  }

  TrainOutcome out;
  out.state = resume_from.empty() ? init_state(cfg)
                                  : load_train_checkpoint(resume_from, cfg);
  TrainState& st = out.state;
  const int64_t skip = st.records_consumed;

  auto checkpoint_now = [&](const std::string& stem) {
    out.guard = scorer::apply_adapter_step_guard(
        st.models.policy, st.models.reference, st.policy_baseline,
        st.reference_baseline);
    if (!cfg.checkpoint_dir.empty()) {
      fs::create_directories(cfg.checkpoint_dir);
      save_train_checkpoint(fs::path(cfg.checkpoint_dir) / (stem + ".ckpt"),
                            st);
    }
  };

  int64_t position = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(data.records.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(derive_seed(cfg.seed, "epoch." + std::to_string(epoch)));
    rng.shuffle(order);

    for (size_t i = 0; i < order.size();) {
      const size_t take =
          std::min((size_t)cfg.batch_size, order.size() - i);
      if (position + (int64_t)take <= skip) {
        position += (int64_t)take;
        i += take;
        continue;
      }
      const std::vector<size_t> micro(order.begin() + i,
                                      order.begin() + i + take);
      if (std::optional<StepLog> log = train_step(st, data, micro)) {
        out.history.push_back(*log);
        if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0) {
          checkpoint_now("ckpt-step-" + std::to_string(st.step));
        }
      }
      position += (int64_t)take;
      i += take;
    }
  }
  if (std::optional<StepLog> log = flush_pending_update(st)) {
    out.history.push_back(*log);
  }
  checkpoint_now("final");
  return out;
}

}  // namespace avemdpo::train
