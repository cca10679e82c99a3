#include <doctest.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avemdpo/annotator.hpp"
#include "avemdpo/bench.hpp"
#include "avemdpo/eval.hpp"
#include "avemdpo/jsonl.hpp"
#include "avemdpo/losses.hpp"
#include "avemdpo/prefdata.hpp"
#include "avemdpo/rng.hpp"
#include "avemdpo/scorer.hpp"
#include "avemdpo/synthetic.hpp"
#include "avemdpo/train.hpp"
#include "cli.hpp"

// End-to-end acceptance gate. Each test case covers one release criterion
// and prints exactly one PASS/FAIL line; the binary fails if any criterion
// fails. Oracle constants are frozen from independent high-precision
// computation, not recomputed through the code under test.

using namespace avemdpo;
namespace fs = std::filesystem;

namespace {

const fs::path kTemplates = fs::path(AVEMDPO_REPO_DIR) / "templates";

constexpr double kLn2 = 0.6931471805599453;
constexpr double kSoftplus02 = 0.5981388693815918;   // ln(1 + e^-0.2)
constexpr double kSoftplusNeg02 = 0.7981388693815918;  // ln(1 + e^+0.2)

class Criterion {
 public:
  Criterion(int number, std::string title)
      : number_(number),
        title_(std::move(title)),
        start_(std::chrono::steady_clock::now()) {}

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok_ = false;
      MESSAGE("criterion " << number_ << ": " << what);
    }
    CHECK(cond);
  }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

  ~Criterion() {
    if (std::uncaught_exceptions() > 0) ok_ = false;
    std::printf("%s  criterion %d: %s  [%.1f s]\n", ok_ ? "PASS" : "FAIL",
                number_, title_.c_str(), elapsed());
    std::fflush(stdout);
  }

 private:
  int number_;
  std::string title_;
  bool ok_ = true;
  std::chrono::steady_clock::time_point start_;
};

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

losses::ScoredSequences zero_scores(ModalityTag m) {
  losses::ScoredSequences s;
  s.logp_policy_w = s.logp_policy_vr = s.logp_policy_er = s.logp_policy_w_neg =
      0.0;
  s.logp_ref_w = s.logp_ref_vr = s.logp_ref_er = s.logp_ref_w_neg = 0.0;
  s.logp_text_w = s.logp_text_vr = s.logp_text_er = 0.0;
  s.pmp_mask = pmp_mask_for(m);
  return s;
}

losses::ScoredSequences random_scores(Rng& rng, ModalityTag m) {
  losses::ScoredSequences s = zero_scores(m);
  s.logp_policy_w = rng.uniform(-8.0, 0.0);
  s.logp_policy_vr = rng.uniform(-8.0, 0.0);
  s.logp_policy_er = rng.uniform(-8.0, 0.0);
  s.logp_policy_w_neg = rng.uniform(-8.0, 0.0);
  s.logp_ref_w = rng.uniform(-8.0, 0.0);
  s.logp_ref_vr = rng.uniform(-8.0, 0.0);
  s.logp_ref_er = rng.uniform(-8.0, 0.0);
  s.logp_ref_w_neg = rng.uniform(-8.0, 0.0);
  s.logp_text_w = rng.uniform(-8.0, 0.0);
  s.logp_text_vr = rng.uniform(-8.0, 0.0);
  s.logp_text_er = rng.uniform(-8.0, 0.0);
  return s;
}

ModalityTag tag_of(int i) {
  return std::array<ModalityTag, 3>{ModalityTag::kA, ModalityTag::kV,
                                    ModalityTag::kAV}[(size_t)i % 3];
}

// The 500-step convergence run shared by criteria 3, 4 and 8:
// 200 planted records, toy profile, 25 optimizer steps per epoch.
struct BigRun {
  train::TrainDataset data;
  train::TrainOutcome outcome;
};

const BigRun& big_run() {
  static const BigRun run = [] {
    BigRun r;
    r.data = synthetic::planted_preference_dataset(
        synthetic::PlantedFlavor::kSeparable, 200, 101);
    train::TrainConfig cfg = train::TrainConfig::profile("toy");
    cfg.epochs = 20;
    cfg.seed = 101;
    r.outcome = train::train_loop(cfg, r.data);
    return r;
  }();
  return run;
}

train::TrainOutcome small_run(synthetic::PlantedFlavor flavor,
                              train::Ablation ablation,
                              const train::TrainDataset& data) {
  train::TrainConfig cfg = train::TrainConfig::profile("toy");
  cfg.epochs = 25;
  cfg.seed = 7;
  cfg.ablation = ablation;
  (void)flavor;
  return train::train_loop(cfg, data);
}

struct CliResult {
  int code = 0;
  std::string out;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  std::streambuf* old_out = std::cout.rdbuf(out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(err.rdbuf());
  CliResult result;
  try {
    result.code = cli::run(args);
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  result.out = out.str();
  return result;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    files[fs::relative(entry.path(), dir).string()] = read_text(entry.path());
  }
  return files;
}

}  // namespace

TEST_CASE("criterion 1") {
  Criterion crit(1, "loss-kernel analytic oracles and exact reductions");
  const losses::LossConfig cfg;

  // Zero-margin cases land on ln 2 for every kernel.
  losses::PairScores flat;
  flat.policy_chosen = flat.ref_chosen = flat.policy_rejected =
      flat.ref_rejected = 0.0;
  crit.expect(std::abs(losses::naive_dpo_loss(flat, cfg) - kLn2) <= 1e-9,
              "naive zero-margin is ln 2");
  const losses::ScoredSequences zeros = zero_scores(ModalityTag::kA);
  crit.expect(
      std::abs(losses::av_preference_loss(zeros, cfg) - kLn2) <= 1e-9,
      "input-preference zero-margin is ln 2");
  crit.expect(std::abs(losses::pmp_loss(zeros, ModalityTag::kA, cfg) - kLn2) <=
                  1e-9,
              "pmp zero-margin is ln 2");
  crit.expect(
      std::abs(losses::response_preference_loss(zeros, cfg) - kLn2) <= 1e-9,
      "response-preference zero-margin is ln 2");
  crit.expect(std::abs(losses::tpd_response_loss(zeros, cfg) - kLn2) <= 1e-9,
              "tpd with zero text gap is ln 2");

  // A +2 chosen margin at beta = 0.1 gives softplus(-0.2).
  losses::PairScores up = flat;
  up.policy_chosen = 2.0;
  crit.expect(std::abs(losses::naive_dpo_loss(up, cfg) - kSoftplus02) <= 1e-9,
              "0.2-margin naive loss");

  // The same response margin with a +2 text-prior gap at gamma = 0.2
  // flips the sign: softplus(+0.2).
  losses::ScoredSequences tpd = zeros;
  tpd.logp_policy_w = 2.0;
  tpd.logp_text_w = 2.0;
  crit.expect(
      std::abs(losses::tpd_response_loss(tpd, cfg) - kSoftplusNeg02) <= 1e-9,
      "text-prior penalty flips the 0.2 margin");

  // Zero margins everywhere with equal text scores at lambda = 1.
  const losses::AvemDpoParts parts =
      losses::avem_dpo_loss(zeros, ModalityTag::kA, cfg);
  crit.expect(std::abs(parts.total - 2.0 * kLn2) <= 1e-9,
              "combined zero-margin loss is 2 ln 2");
  crit.expect(std::abs(parts.tpd_term - kLn2) <= 1e-9, "tpd part is ln 2");
  crit.expect(std::abs(parts.pmp_term - kLn2) <= 1e-9, "pmp part is ln 2");

  // Exact reductions on 1,000 random inputs.
  losses::LossConfig no_gamma = cfg;
  no_gamma.gamma_tpd = 0.0;
  losses::LossConfig no_lambda = cfg;
  no_lambda.lambda_av = 0.0;
  const losses::LossConfig vr_only = losses::LossConfig::with_vr_weight(1.0);
  Rng rng(2024);
  double worst_gamma = 0.0, worst_lambda = 0.0, worst_vr = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const ModalityTag m = tag_of(i);
    const losses::ScoredSequences s = random_scores(rng, m);
    worst_gamma = std::max(
        worst_gamma, std::abs(losses::tpd_response_loss(s, no_gamma) -
                              losses::response_preference_loss(s, no_gamma)));
    const losses::AvemDpoParts p = losses::avem_dpo_loss(s, m, no_lambda);
    worst_lambda = std::max(
        worst_lambda, std::abs(p.total - losses::tpd_response_loss(s, no_lambda)));
    worst_vr = std::max(
        worst_vr, std::abs(losses::tpd_response_loss(s, vr_only) -
                           losses::tpd_single_loss(s, false, vr_only)));
  }
  crit.expect(worst_gamma <= 1e-12, "gamma=0 collapses to response preference");
  crit.expect(worst_lambda <= 1e-12, "lambda=0 collapses to the tpd term");
  crit.expect(worst_vr <= 1e-12, "beta_vr=1 collapses to one rejection");
  crit.expect(crit.elapsed() < 10.0, "runtime under 10 s");
}

TEST_CASE("criterion 2") {
  Criterion crit(2, "analytic gradients match central finite differences");
  train::TrainConfig cfg = train::TrainConfig::profile("toy");
  train::TrainDataset data = synthetic::planted_preference_dataset(
      synthetic::PlantedFlavor::kSeparable, 3, 55);
  train::TrainState st = train::init_state(cfg);

  // Move the adapter off its all-zero start so no gradient is trivially 0.
  Rng jitter(4242);
  for (autograd::Param* p : st.models.policy.trainable_params()) {
    for (double& x : p->w.data) x += jitter.uniform(-0.05, 0.05);
  }

  const prefdata::PreferenceRecord& rec = data.records[0];
  const int vocab = cfg.scorer.text_vocab;
  const prefdata::AvClip& chosen = data.clip(rec.chosen_av_ref);
  const prefdata::AvClip& rejected = data.clip(rec.rejected_av_ref);
  scorer::TokenStreams sw;
  sw.audio = chosen.audio;
  sw.video = chosen.video;
  sw.prompt = train::encode_text(rec.prompt, vocab);
  sw.response = train::encode_text(rec.y_w, vocab);
  sw.modality_tag = rec.modality_tag;
  scorer::TokenStreams svr = sw;
  svr.response = train::encode_text(rec.y_l_vr, vocab);
  scorer::TokenStreams ser = sw;
  ser.response = train::encode_text(rec.y_l_er, vocab);
  scorer::TokenStreams sneg = sw;
  sneg.audio = rejected.audio;
  sneg.video = rejected.video;

  losses::ScoredSequences frozen = zero_scores(rec.modality_tag);
  frozen.pmp_mask = rec.pmp_mask;
  scorer::Model& reference = st.models.reference;
  frozen.logp_ref_w = scorer::sequence_log_prob(reference, sw);
  frozen.logp_ref_vr = scorer::sequence_log_prob(reference, svr);
  frozen.logp_ref_er = scorer::sequence_log_prob(reference, ser);
  frozen.logp_ref_w_neg = scorer::sequence_log_prob(reference, sneg);
  frozen.logp_text_w = scorer::text_prior_log_prob(reference, sw);
  frozen.logp_text_vr = scorer::text_prior_log_prob(reference, svr);
  frozen.logp_text_er = scorer::text_prior_log_prob(reference, ser);

  scorer::Model& policy = st.models.policy;
  auto scored = [&](double pw, double pvr, double per, double pneg) {
    losses::ScoredSequences s = frozen;
    s.logp_policy_w = pw;
    s.logp_policy_vr = pvr;
    s.logp_policy_er = per;
    s.logp_policy_w_neg = pneg;
    return s;
  };
  auto loss_now = [&]() {
    return losses::avem_dpo_loss(
               scored(scorer::sequence_log_prob(policy, sw),
                      scorer::sequence_log_prob(policy, svr),
                      scorer::sequence_log_prob(policy, ser),
                      scorer::sequence_log_prob(policy, sneg)),
               rec.modality_tag, cfg.loss)
        .total;
  };

  // Analytic: chain the loss gradient through each sequence graph.
  for (autograd::Param* p : policy.trainable_params()) p->zero_grad();
  scorer::ScoreGraph gw =
      scorer::build_score_graph(policy, sw, scorer::InputMode::kFull);
  scorer::ScoreGraph gvr =
      scorer::build_score_graph(policy, svr, scorer::InputMode::kFull);
  scorer::ScoreGraph ger =
      scorer::build_score_graph(policy, ser, scorer::InputMode::kFull);
  scorer::ScoreGraph gneg =
      scorer::build_score_graph(policy, sneg, scorer::InputMode::kFull);
  const losses::PolicyGrad pg = losses::avem_dpo_grad(
      scored(gw.tape.scalar(gw.logp), gvr.tape.scalar(gvr.logp),
             ger.tape.scalar(ger.logp), gneg.tape.scalar(gneg.logp)),
      rec.modality_tag, cfg.loss);
  gw.tape.backward(gw.logp, pg.w);
  gvr.tape.backward(gvr.logp, pg.vr);
  ger.tape.backward(ger.logp, pg.er);
  gneg.tape.backward(gneg.logp, pg.w_neg);

  std::vector<double> analytic;
  for (autograd::Param* p : policy.trainable_params()) {
    analytic.insert(analytic.end(), p->g.data.begin(), p->g.data.end());
  }

  const double h = 1e-5;
  size_t within = 0;
  size_t total = 0;
  double worst = 0.0;
  size_t k = 0;
  for (autograd::Param* p : policy.trainable_params()) {
    for (size_t i = 0; i < p->w.data.size(); ++i, ++k) {
      const double saved = p->w.data[i];
      p->w.data[i] = saved + h;
      const long double up = loss_now();
      p->w.data[i] = saved - h;
      const long double down = loss_now();
      p->w.data[i] = saved;
      const double fd = (double)((up - down) / (2.0L * (long double)h));
      const double a = analytic[k];
      const double rel =
          std::abs(a - fd) / std::max({1e-6, std::abs(a), std::abs(fd)});
      worst = std::max(worst, rel);
      if (rel < 1e-4) ++within;
      ++total;
    }
  }
  crit.expect(total >= 1000, "at least 1,000 trainable coordinates checked");
  crit.expect((double)within / (double)total >= 0.95,
              "95% of coordinates within 1e-4 relative error");
  crit.expect(worst < 1e-3, "worst coordinate within 1e-3");
  crit.expect(crit.elapsed() < 120.0, "runtime under 2 min");
}

TEST_CASE("criterion 3") {
  Criterion crit(3, "frozen models drift exactly zero over 500 steps");
  const BigRun& run = big_run();
  crit.expect(run.outcome.state.step == 500, "run took 500 optimizer steps");
  crit.expect(run.outcome.state.cfg.loss.gamma_tpd == 0.2,
              "text-prior penalty active at 0.2");
  // The reference scorer doubles as the text prior, so zero drift here
  // covers both frozen roles; the backbone check covers non-adapter
  // policy parameters.
  crit.expect(run.outcome.guard.reference_drift == 0.0,
              "reference and text-prior parameters unchanged");
  crit.expect(run.outcome.guard.backbone_drift == 0.0,
              "frozen policy backbone unchanged");
  crit.expect(run.outcome.guard.adapter_change > 0.0,
              "adapter actually moved");
}

TEST_CASE("criterion 4") {
  Criterion crit(4, "planted-preference convergence and ablation ordering");
  const BigRun& run = big_run();
  const std::vector<train::StepLog>& history = run.outcome.history;
  crit.expect(history.size() == 500, "500 logged steps");
  crit.expect(history.front().preference_accuracy == 0.5,
              "untrained accuracy starts at one half");
  double last_epoch = 0.0;
  for (size_t i = history.size() - 25; i < history.size(); ++i) {
    last_epoch += history[i].preference_accuracy;
  }
  last_epoch /= 25.0;
  crit.expect(last_epoch > 0.9, "final-epoch preference accuracy above 0.9");

  // Ablations on datasets planted to need the removed term.
  train::TrainDataset erp_data = synthetic::planted_preference_dataset(
      synthetic::PlantedFlavor::kErpRequired, 48, 7);
  train::TrainOutcome erp_full = small_run(
      synthetic::PlantedFlavor::kErpRequired, train::Ablation::kFull, erp_data);
  train::TrainOutcome erp_cut =
      small_run(synthetic::PlantedFlavor::kErpRequired, train::Ablation::kNoErp,
                erp_data);
  const double full_er =
      synthetic::response_preference_accuracy(erp_full.state, erp_data);
  const double cut_er =
      synthetic::response_preference_accuracy(erp_cut.state, erp_data);
  crit.expect(full_er > 0.7, "full objective separates the planted rejections");
  crit.expect(cut_er < full_er,
              "dropping the typed-rejection term lowers accuracy");

  train::TrainDataset pmp_data = synthetic::planted_preference_dataset(
      synthetic::PlantedFlavor::kSeparable, 48, 7);
  train::TrainOutcome pmp_full = small_run(
      synthetic::PlantedFlavor::kSeparable, train::Ablation::kFull, pmp_data);
  train::TrainOutcome pmp_cut = small_run(
      synthetic::PlantedFlavor::kSeparable, train::Ablation::kNoPmp, pmp_data);
  const double full_in =
      synthetic::input_preference_accuracy(pmp_full.state, pmp_data);
  const double cut_in =
      synthetic::input_preference_accuracy(pmp_cut.state, pmp_data);
  crit.expect(full_in > 0.7, "full objective prefers the chosen input");
  crit.expect(cut_in < full_in,
              "dropping the input-preference term lowers input accuracy");
  crit.expect(crit.elapsed() < 600.0, "runtime under 10 min");
}

TEST_CASE("criterion 5") {
  Criterion crit(5, "masked rejected inputs preserve the untouched modality");
  const auto rows = synthetic::synthetic_manifest(30, 5);
  const prefdata::AvStore pool = synthetic::synthetic_clip_pool(rows, 5);
  std::vector<prefdata::PreferenceSource> sources;
  for (size_t i = 0; i < rows.size(); ++i) {
    prefdata::PreferenceSource src;
    src.id = "src-" + std::to_string(i);
    src.av_ref = rows[i].video_ref;
    src.modality_tag = tag_of((int)i);
    src.prompt = "Why does the person react this way?";
    src.y_w = "The tone and the expression both point to the same feeling.";
    src.emotion = rows[i].gt_emotion;
    sources.push_back(src);
  }

  int checked = 0;
  for (const NegativeSamplingKind kind :
       {NegativeSamplingKind::kRandomTensor, NegativeSamplingKind::kRandomVideo,
        NegativeSamplingKind::kDiffuse,
        NegativeSamplingKind::kDifferentEmotion}) {
    annotator::SyntheticAnnotator client(91);
    prefdata::BuildConfig cfg;
    cfg.strategy.kind = kind;
    cfg.seed = 17;
    cfg.templates_dir = kTemplates;
    const prefdata::BuildResult br =
        prefdata::build_preference_dataset(sources, client, pool, cfg);
    crit.expect(br.records.size() == sources.size(),
                std::string("no records lost under ") +
                    std::string(to_string(kind)));
    for (const auto& rec : br.records) {
      const prefdata::AvClip& rec_chosen = pool.get(rec.chosen_av_ref);
      const prefdata::AvClip& rec_rejected =
          prefdata::resolve_ref(pool, br.derived, rec.rejected_av_ref);
      crit.expect(rec.pmp_mask == pmp_mask_for(rec.modality_tag),
                  "mask matches the prompt modality");
      if (rec.modality_tag == ModalityTag::kA) {
        crit.expect(rec_rejected.video == rec_chosen.video,
                    "audio prompt keeps the chosen video bit-exactly");
      } else if (rec.modality_tag == ModalityTag::kV) {
        crit.expect(rec_rejected.audio == rec_chosen.audio,
                    "video prompt keeps the chosen audio bit-exactly");
      }
      ++checked;
    }
  }

  // The planted fixtures go through the same masking path.
  for (const synthetic::PlantedFlavor flavor :
       {synthetic::PlantedFlavor::kSeparable,
        synthetic::PlantedFlavor::kTextBiased,
        synthetic::PlantedFlavor::kErpRequired}) {
    const train::TrainDataset data =
        synthetic::planted_preference_dataset(flavor, 60, 9);
    for (const auto& rec : data.records) {
      const prefdata::AvClip& rec_chosen = data.clip(rec.chosen_av_ref);
      const prefdata::AvClip& rec_rejected = data.clip(rec.rejected_av_ref);
      if (rec.modality_tag == ModalityTag::kA) {
        crit.expect(rec_rejected.video == rec_chosen.video,
                    "planted audio prompt keeps the chosen video");
      } else if (rec.modality_tag == ModalityTag::kV) {
        crit.expect(rec_rejected.audio == rec_chosen.audio,
                    "planted video prompt keeps the chosen audio");
      }
      ++checked;
    }
  }
  crit.expect(checked == 30 * 4 + 60 * 3, "every record was checked");
}

TEST_CASE("criterion 6") {
  Criterion crit(6, "benchmark pipeline on a 200-video synthetic manifest");
  const auto rows = synthetic::synthetic_manifest(200, 31);
  annotator::SyntheticAnnotator client(derive_seed(31, "annotator"));
  bench::BuildConfig bcfg;
  bcfg.seed = 31;
  bcfg.templates_dir = kTemplates;

  std::vector<bench::BenchmarkItem> items;
  int quarantined = 0;
  for (const auto& row : rows) {
    bench::VideoOutcome vo = bench::build_video_items(row, client, bcfg);
    items.insert(items.end(), vo.items.begin(), vo.items.end());
    quarantined += (int)vo.quarantined.size();
  }
  crit.expect(quarantined == 0, "no videos quarantined");
  crit.expect(items.size() > 400, "items were generated at scale");

  // Taxonomy soundness, including subtask-forced stress answers.
  bool sound = true;
  for (const auto& item : items) {
    try {
      item.validate();
    } catch (const std::exception&) {
      sound = false;
    }
    if (is_stress_task(item.task)) {
      sound = sound && ((item.choices[(size_t)item.answer_index] == "Yes") ==
                        stress_answer_is_yes(item.subtask));
    }
  }
  crit.expect(sound, "every item passes taxonomy validation");

  // Monte-Carlo removal rate of three independent random guessers on a
  // four-choice item: all three must hit the answer, p = (1/4)^3 = 1/64.
  std::vector<bench::BenchmarkItem> four_choice;
  for (const auto& item : items) {
    if (!is_yes_no_task(item.task)) four_choice.push_back(item);
  }
  crit.expect(!four_choice.empty(), "four-choice items exist");
  int removed = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    std::array<std::unique_ptr<annotator::RandomGuesser>, 3> owners;
    std::vector<annotator::TextGuesser*> guessers;
    for (int g = 0; g < 3; ++g) {
      owners[(size_t)g] = std::make_unique<annotator::RandomGuesser>(
          "g" + std::to_string(g),
          derive_seed(77, "trial." + std::to_string(t) + "." + std::to_string(g)));
      guessers.push_back(owners[(size_t)g].get());
    }
    const bench::FilterResult fr = bench::text_only_filter(
        {four_choice[(size_t)t % four_choice.size()]}, guessers);
    removed += (int)fr.removed_ids.size();
  }
  const double rate = (double)removed / (double)trials;
  crit.expect(std::abs(rate - 1.0 / 64.0) <= 0.005,
              "removal rate 1/64 within half a point, got " +
                  std::to_string(rate));

  // Yes/No balance is exact after balancing.
  std::array<std::unique_ptr<annotator::RandomGuesser>, 3> owners;
  std::vector<annotator::TextGuesser*> guessers;
  for (int g = 0; g < 3; ++g) {
    owners[(size_t)g] = std::make_unique<annotator::RandomGuesser>(
        "g" + std::to_string(g), derive_seed(31, "guesser." + std::to_string(g)));
    guessers.push_back(owners[(size_t)g].get());
  }
  const bench::FilterResult fr = bench::text_only_filter(items, guessers);
  const std::vector<bench::BenchmarkItem> balanced =
      bench::balance_answers(fr.retained, derive_seed(31, "balance"));
  for (const BenchTask task : kAllBenchTasks) {
    if (!is_yes_no_task(task)) continue;
    int yes = 0, no = 0;
    for (const auto& item : balanced) {
      if (item.task != task) continue;
      (item.choices[(size_t)item.answer_index] == "Yes" ? yes : no) += 1;
    }
    crit.expect(yes == no, std::string("Yes/No balance exact for ") +
                               std::string(to_string(task)));
  }

  // Statistics report shape: per-task QA counts, video counts and random
  // accuracy, plus totals and the emotion distribution.
  const bench::StatsReport report = bench::compute_statistics(balanced, &rows);
  int qa_sum = 0;
  int emotion_sum = 0;
  bool acc_ok = true;
  for (int t = 0; t < kNumBenchTasks; ++t) {
    qa_sum += report.tasks[(size_t)t].qa_count;
    const double want = is_yes_no_task(kAllBenchTasks[(size_t)t]) ? 0.5 : 0.25;
    acc_ok = acc_ok && report.tasks[(size_t)t].random_accuracy == want;
  }
  for (const int c : report.emotion_counts) emotion_sum += c;
  crit.expect(report.total_qa == (int)balanced.size(), "total counts items");
  crit.expect(qa_sum == report.total_qa, "task counts sum to the total");
  crit.expect(emotion_sum == report.total_qa, "emotion counts sum to the total");
  crit.expect(acc_ok, "random accuracy is one over the choice count");
  crit.expect(report.unique_videos <= 200, "video count bounded by manifest");
  const Json j = report.to_json();
  for (const char* key : {"total_qa", "unique_videos", "tasks", "emotion_counts"}) {
    crit.expect(j.contains(key), std::string("report has ") + key);
  }
  // No external item list is provided in this environment, so the
  // released-totals equality has nothing to run against.
}

TEST_CASE("criterion 7") {
  Criterion crit(7, "metrics match the brute-force confusion oracle");
  Rng rng(808);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 3 + (int)rng.below(38);
    std::vector<EmotionLabel> predicted(static_cast<size_t>(n));
    std::vector<EmotionLabel> gold(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      predicted[(size_t)i] = kAllEmotions[rng.below(kNumEmotions)];
      gold[(size_t)i] = kAllEmotions[rng.below(kNumEmotions)];
    }
    const auto [uar, war] = eval::uar_war(predicted, gold);
    const double wf1 = eval::weighted_f1(predicted, gold);

    // Independent oracle in extended precision.
    std::array<long double, kNumEmotions> tp{}, fp{}, fn{}, support{};
    long double correct = 0.0L;
    for (int i = 0; i < n; ++i) {
      const auto p = (size_t)predicted[(size_t)i];
      const auto g = (size_t)gold[(size_t)i];
      support[g] += 1.0L;
      if (p == g) {
        tp[g] += 1.0L;
        correct += 1.0L;
      } else {
        fp[p] += 1.0L;
        fn[g] += 1.0L;
      }
    }
    long double recall_sum = 0.0L, classes = 0.0L, f1_sum = 0.0L;
    for (size_t c = 0; c < kNumEmotions; ++c) {
      if (support[c] == 0.0L) continue;
      classes += 1.0L;
      recall_sum += tp[c] / support[c];
      const long double denom = 2.0L * tp[c] + fp[c] + fn[c];
      const long double f1 = denom == 0.0L ? 0.0L : 2.0L * tp[c] / denom;
      f1_sum += support[c] * f1;
    }
    worst = std::max(worst, std::abs(uar - (double)(recall_sum / classes)));
    worst = std::max(worst, std::abs(war - (double)(correct / (long double)n)));
    worst = std::max(worst, std::abs(wf1 - (double)(f1_sum / (long double)n)));
  }
  crit.expect(worst <= 1e-12, "uar/war/weighted-f1 match the oracle");

  // Hand examples. Five Yes items with four hits and five No items with
  // three hits: precision 0.8, recall 0.6, f1 their harmonic mean.
  std::vector<bench::BenchmarkItem> items;
  std::vector<eval::Prediction> preds;
  for (int i = 0; i < 10; ++i) {
    bench::BenchmarkItem item;
    item.id = "q-" + std::to_string(i);
    item.video_ref = "v";
    item.task = BenchTask::kModalityAgreement;
    item.question = "Do both modalities agree?";
    item.choices = {"Yes", "No"};
    item.answer_index = i < 5 ? 0 : 1;
    items.push_back(item);
    const bool correct = i < 4 || i >= 7;
    preds.push_back(eval::Prediction{
        item.id, "", correct ? item.answer_index : 1 - item.answer_index});
  }
  const eval::YesNoMetrics yn = eval::yes_no_metrics(preds, items);
  crit.expect(yn.precision.has_value() && *yn.precision == 0.8,
              "precision 0.8 exactly");
  crit.expect(yn.recall.has_value() && *yn.recall == 0.6, "recall 0.6 exactly");
  crit.expect(yn.f1.has_value() && *yn.f1 == 2.0 * 0.8 * 0.6 / (0.8 + 0.6),
              "f1 is the harmonic mean, about 0.6857");

  const std::vector<EmotionLabel> gold(9, EmotionLabel::kHappy);
  std::vector<EmotionLabel> gold_mixed = gold;
  gold_mixed.push_back(EmotionLabel::kSad);
  const std::vector<EmotionLabel> all_happy(10, EmotionLabel::kHappy);
  const auto [uar, war] = eval::uar_war(all_happy, gold_mixed);
  crit.expect(uar == 0.5, "uar 0.5 exactly");
  crit.expect(war == 0.9, "war 0.9 exactly");
}

TEST_CASE("criterion 8") {
  Criterion crit(8, "attention shares and adversarial-shift behavior");
  const BigRun& run = big_run();
  const train::TrainDataset& data = run.data;
  train::TrainState& st = const_cast<train::TrainState&>(run.outcome.state);
  const int vocab = st.cfg.scorer.text_vocab;

  std::vector<eval::ScoredItem> v_items;
  std::vector<eval::ScoredItem> all_items;
  for (const auto& rec : data.records) {
    if (rec.modality_tag == ModalityTag::kAV) continue;
    eval::ScoredItem item;
    item.id = rec.id;
    item.prompt = train::encode_text(rec.prompt, vocab);
    item.correct_tokens = train::encode_text(rec.y_w, vocab);
    item.av_ref = rec.chosen_av_ref;
    item.modality_tag = rec.modality_tag;
    if (all_items.size() < 24) all_items.push_back(item);
    if (rec.modality_tag == ModalityTag::kV && v_items.size() < 16) {
      v_items.push_back(item);
    }
  }

  // Shares sum to 100 everywhere: per item and per group median.
  double worst_sum = 0.0;
  for (const auto& item : all_items) {
    scorer::TokenStreams s;
    const prefdata::AvClip& clip = data.clip(item.av_ref);
    s.audio = clip.audio;
    s.video = clip.video;
    s.prompt = item.prompt;
    s.response = item.correct_tokens;
    s.modality_tag = item.modality_tag;
    for (scorer::Model* model : {&st.models.policy, &st.models.reference}) {
      const scorer::AttentionShare share = scorer::attention_share(*model, s);
      worst_sum = std::max(
          worst_sum, std::abs(share.audio + share.video + share.text - 100.0));
    }
  }
  crit.expect(worst_sum <= 1e-6, "attention shares sum to 100");

  // Group medians are taken per component, so they need not sum to 100,
  // but each component must stay a valid percentage.
  const eval::AttentionComparison att = eval::attention_comparison(
      st.models.reference, st.models.policy, all_items, data.pool);
  bool groups_ok = !att.groups.empty();
  for (const auto& group : att.groups) {
    groups_ok = groups_ok && group.count > 0;
    for (const scorer::AttentionShare* share :
         {&group.median_before, &group.median_after}) {
      for (const double v : {share->audio, share->video, share->text}) {
        groups_ok = groups_ok && v >= 0.0 && v <= 100.0;
      }
    }
  }
  crit.expect(groups_ok, "group medians are valid percentages");

  // A pool with one clip cannot change the input: divergence exactly 0.
  {
    prefdata::AvStore single;
    prefdata::AvClip clip;
    clip.audio = {1, 2, 3, 4};
    clip.video = {5, 6, 7, 8, 9};
    single.add("only", clip);
    std::vector<eval::ScoredItem> items;
    for (int i = 0; i < 4; ++i) {
      eval::ScoredItem item;
      item.id = "s-" + std::to_string(i);
      item.prompt = {1, (i + 2) % 12};
      item.correct_tokens = {3, 4};
      item.av_ref = "only";
      item.modality_tag = ModalityTag::kA;
      items.push_back(item);
    }
    scorer::ModelSet models =
        scorer::init_models(scorer::ScorerConfig{}, scorer::AdapterConfig{});
    const eval::ShiftReport same = eval::adversarial_shift(
        models.policy, items, single, ModalityTag::kV, 5);
    crit.expect(same.divergence == 0.0, "identical inputs give zero shift");

    // A scorer whose audio pathway is zeroed cannot see audio swaps.
    prefdata::AvStore pool;
    Rng rng(12);
    for (int c = 0; c < 6; ++c) {
      prefdata::AvClip p;
      for (int i = 0; i < 4; ++i) p.audio.push_back((int)rng.below(12));
      for (int i = 0; i < 5; ++i) p.video.push_back((int)rng.below(12));
      pool.add("p-" + std::to_string(c), p);
    }
    std::vector<eval::ScoredItem> vitems;
    for (int i = 0; i < 4; ++i) {
      eval::ScoredItem item;
      item.id = "v-" + std::to_string(i);
      item.prompt = {2, (i + 1) % 12};
      item.correct_tokens = {5, 6};
      item.av_ref = "p-" + std::to_string(i);
      item.modality_tag = ModalityTag::kV;
      vitems.push_back(item);
    }
    scorer::ModelSet blind =
        scorer::init_models(scorer::ScorerConfig{}, scorer::AdapterConfig{});
    for (double& x : blind.policy.find("audio_proj").w.data) x = 0.0;
    const eval::ShiftReport deaf = eval::adversarial_shift(
        blind.policy, vitems, pool, ModalityTag::kA, 5);
    crit.expect(deaf.divergence == 0.0, "audio-blind scorer shows zero shift");
    const eval::ShiftReport seeing = eval::adversarial_shift(
        models.policy, vitems, pool, ModalityTag::kA, 5);
    crit.expect(seeing.divergence > 0.0,
                "cross-modal dependence shows a positive shift");
  }

  // Training on the planted data sharpens the correct response and damps
  // sensitivity to swapping the prompt-irrelevant modality.
  const eval::ShiftReport trained = eval::adversarial_shift(
      st.models.policy, v_items, data.pool, ModalityTag::kA, 99);
  const eval::ShiftReport untrained = eval::adversarial_shift(
      st.models.reference, v_items, data.pool, ModalityTag::kA, 99);
  crit.expect(untrained.divergence > 0.0, "untrained policy shifts");
  crit.expect(trained.divergence < untrained.divergence,
              "trained divergence strictly below untrained, " +
                  std::to_string(trained.divergence) + " vs " +
                  std::to_string(untrained.divergence));
}

TEST_CASE("criterion 9") {
  Criterion crit(9, "CLI byte-reproducibility and exact resume");
  const fs::path dir = temp_dir("avemdpo-acceptance-cli");
  // Inputs shared by the subcommands.
  bench::save_manifest(dir / "manifest.jsonl", synthetic::synthetic_manifest(8, 3));
  {
    const train::TrainDataset planted = synthetic::planted_preference_dataset(
        synthetic::PlantedFlavor::kSeparable, 6, 13);
    prefdata::save_records(dir / "records.jsonl", planted.records);
    planted.pool.save(dir / "pool.jsonl");
    planted.derived.save(dir / "derived.jsonl");
    std::vector<prefdata::PreferenceSource> sources;
    const auto rows = synthetic::synthetic_manifest(6, 11);
    prefdata::AvStore src_pool = synthetic::synthetic_clip_pool(rows, 11);
    src_pool.save(dir / "src_pool.jsonl");
    for (size_t i = 0; i < rows.size(); ++i) {
      prefdata::PreferenceSource src;
      src.id = "src-" + std::to_string(i);
      src.av_ref = rows[i].video_ref;
      src.modality_tag = tag_of((int)i);
      src.prompt = "Why does the person react this way?";
      src.y_w = "The tone and the expression both point to the same feeling.";
      src.emotion = rows[i].gt_emotion;
      sources.push_back(src);
    }
    prefdata::save_sources(dir / "sources.jsonl", sources);
    std::vector<Json> an_rows;
    for (int i = 0; i < 4; ++i) {
      an_rows.push_back(Json{{"id", "an-" + std::to_string(i)},
                             {"prompt", std::to_string(i) + " 3 5"},
                             {"answer", std::to_string((i + 2) % 10) + " 7"},
                             {"av_ref", "clip-00" + std::to_string(i)},
                             {"modality", i % 2 == 0 ? "A" : "V"}});
    }
    write_jsonl_atomic(dir / "an_items.jsonl", an_rows);
  }

  auto reproducible = [&](const std::string& name,
                          const std::vector<std::string>& base,
                          const std::string& out_flag) {
    std::vector<std::string> first = base;
    first.push_back(out_flag);
    first.push_back((dir / (name + "-a")).string());
    std::vector<std::string> second = base;
    second.push_back(out_flag);
    second.push_back((dir / (name + "-b")).string());
    const CliResult ra = run_cli(first);
    const CliResult rb = run_cli(second);
    crit.expect(ra.code == 0 && rb.code == 0, name + " runs succeed");
    crit.expect(dir_bytes(dir / (name + "-a")) == dir_bytes(dir / (name + "-b")),
                name + " outputs byte-identical");
    crit.expect(ra.out == rb.out, name + " stdout identical");
  };

  reproducible("bench",
               {"bench-build", "--manifest", (dir / "manifest.jsonl").string(),
                "--templates", kTemplates.string(), "--seed", "5"},
               "--out");
  reproducible("pref",
               {"pref-build", "--sources", (dir / "sources.jsonl").string(),
                "--pool", (dir / "src_pool.jsonl").string(), "--templates",
                kTemplates.string(), "--strategy", "random_video", "--seed",
                "9"},
               "--out");
  reproducible("train",
               {"train", "--records", (dir / "records.jsonl").string(),
                "--pool", (dir / "pool.jsonl").string(), "--derived",
                (dir / "derived.jsonl").string(), "--epochs", "3", "--seed",
                "9"},
               "--out");
  reproducible("analyze",
               {"analyze", "--model",
                (dir / "train-a" / "final.ckpt").string(), "--items",
                (dir / "an_items.jsonl").string(), "--pool",
                (dir / "pool.jsonl").string(), "--seed", "4"},
               "--out");
  {
    const auto items = bench::load_items(dir / "bench-a" / "items.jsonl");
    std::vector<Json> outputs;
    for (size_t i = 0; i < items.size(); ++i) {
      outputs.push_back(Json{
          {"item_id", items[i].id},
          {"raw_output", i % 2 == 0 ? items[i].choices[0] : items[i].choices[1]}});
    }
    write_jsonl_atomic(dir / "outputs.jsonl", outputs);
  }
  reproducible("eval",
               {"eval", "--items", (dir / "bench-a" / "items.jsonl").string(),
                "--outputs", (dir / "outputs.jsonl").string()},
               "--out");
  {
    // stats writes a single file, so compare bytes directly.
    const std::vector<std::string> base = {
        "stats", "--items", (dir / "bench-a" / "items.jsonl").string(),
        "--manifest", (dir / "manifest.jsonl").string()};
    std::vector<std::string> first = base;
    first.insert(first.end(), {"--out", (dir / "stats-a.json").string()});
    std::vector<std::string> second = base;
    second.insert(second.end(), {"--out", (dir / "stats-b.json").string()});
    const CliResult ra = run_cli(first);
    const CliResult rb = run_cli(second);
    crit.expect(ra.code == 0 && rb.code == 0, "stats runs succeed");
    crit.expect(read_text(dir / "stats-a.json") ==
                    read_text(dir / "stats-b.json"),
                "stats outputs byte-identical");
    crit.expect(ra.out == rb.out && !ra.out.empty(), "stats stdout identical");
  }

  // Interrupted-plus-resumed equals uninterrupted, bit for bit.
  auto train_args = [&](const std::string& out) {
    return std::vector<std::string>{"train",
                                    "--records", (dir / "records.jsonl").string(),
                                    "--pool", (dir / "pool.jsonl").string(),
                                    "--derived", (dir / "derived.jsonl").string(),
                                    "--out", out,
                                    "--epochs", "4",
                                    "--checkpoint-every", "2",
                                    "--seed", "9"};
  };
  crit.expect(run_cli(train_args((dir / "full").string())).code == 0,
              "full run succeeds");
  auto resumed = train_args((dir / "resumed").string());
  resumed.push_back("--resume");
  resumed.push_back((dir / "full" / "ckpt-step-2.ckpt").string());
  crit.expect(run_cli(resumed).code == 0, "resumed run succeeds");
  const auto full = train::load_history(dir / "full" / "history.jsonl");
  const auto tail = train::load_history(dir / "resumed" / "history.jsonl");
  bool match = full.size() == 4 && tail.size() == 2;
  for (size_t i = 0; match && i < tail.size(); ++i) {
    match = tail[i].to_json() == full[i + 2].to_json();
  }
  crit.expect(match, "resumed history equals the uninterrupted tail");
  crit.expect(read_text(dir / "full" / "final.ckpt") ==
                  read_text(dir / "resumed" / "final.ckpt"),
              "final checkpoints identical");
}
