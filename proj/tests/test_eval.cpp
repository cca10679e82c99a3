#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "avemdpo/eval.hpp"

using namespace avemdpo;
using namespace avemdpo::eval;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() / tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::vector<std::string> kEmotions4 = {"happy", "sad", "angry", "fear"};
const std::vector<std::string> kYesNo = {"Yes", "No"};

bench::BenchmarkItem yes_no_item(const std::string& id, BenchTask task,
                                 bool yes, StressSubtask sub) {
  bench::BenchmarkItem item;
  item.id = id;
  item.video_ref = "vid/" + id;
  item.task = task;
  item.subtask = sub;
  item.question = is_stress_task(task)
                      ? "Does the cue suggest happy of the character?"
                      : "Do the modalities agree?";
  item.choices = kYesNo;
  item.answer_index = yes ? 0 : 1;
  item.emotion = EmotionLabel::kHappy;
  return item;
}

bench::BenchmarkItem agreement_item(const std::string& id, bool yes) {
  return yes_no_item(id, BenchTask::kModalityAgreement, yes,
                     StressSubtask::kNone);
}

Prediction answer(const std::string& id, int index) {
  Prediction p;
  p.item_id = id;
  p.raw_output = "choice " + std::to_string(index);
  p.extracted_index = index;
  return p;
}

}  // namespace

TEST_CASE("raw outputs map to choice indexes conservatively") {
  CHECK(extract_choice("(B) The woman's cheerful smile lights the scene.",
                       kEmotions4) == 1);
  CHECK(extract_choice("b.", kEmotions4) == 1);
  CHECK(extract_choice("C", kEmotions4) == 2);
  CHECK(extract_choice("  d)", kEmotions4) == 3);
  CHECK(extract_choice("\"A\"", kEmotions4) == 0);
  CHECK(extract_choice("Yes, both modalities agree", kYesNo) == 0);
  CHECK(extract_choice("sad", kEmotions4) == 1);
  CHECK(extract_choice("The answer is SAD!", kEmotions4) == 1);
  CHECK(extract_choice("A happy face appears", kEmotions4) == 0);
  CHECK(extract_choice("happy or sad, hard to say", kEmotions4) == kAbstain);
  CHECK(extract_choice("the character looks calm", kEmotions4) == kAbstain);
  CHECK(extract_choice("D.", kYesNo) == kAbstain);
  CHECK(extract_choice("", kEmotions4) == kAbstain);
  CHECK_THROWS_AS(extract_choice("anything", {}), std::invalid_argument);
}

TEST_CASE("prediction files round-trip and validate") {
  const fs::path dir = temp_dir("avemdpo_preds");
  std::vector<Prediction> preds = {answer("i1", 2), answer("i2", kAbstain)};
  save_predictions(dir / "preds.jsonl", preds);
  std::vector<Prediction> back = load_predictions(dir / "preds.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].to_json() == preds[0].to_json());
  CHECK(back[1].extracted_index == kAbstain);

  std::ofstream out(dir / "preds.jsonl", std::ios::app);
  out << "{\"item_id\": \"x\", \"raw_output\": \"y\", \"extracted_index\": -2}\n";
  out.close();
  CHECK_THROWS_WITH_AS(
      load_predictions(dir / "preds.jsonl"),
      doctest::Contains(((dir / "preds.jsonl").string() + ":3:").c_str()),
      std::runtime_error);
}

TEST_CASE("yes/no metrics follow the benchmark's bespoke definitions") {
  std::vector<bench::BenchmarkItem> items;
  std::vector<Prediction> preds;
  for (int i = 0; i < 10; ++i) {
    items.push_back(agreement_item("y" + std::to_string(i), true));
    preds.push_back(answer("y" + std::to_string(i), i < 8 ? 0 : 1));
  }
  for (int i = 0; i < 10; ++i) {
    items.push_back(agreement_item("n" + std::to_string(i), false));
    preds.push_back(answer("n" + std::to_string(i), i < 6 ? 1 : 0));
  }
  YesNoMetrics m = yes_no_metrics(preds, items);
  CHECK(m.n_yes == 10);
  CHECK(m.n_no == 10);
  CHECK(m.accuracy == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(*m.precision == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(*m.recall == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(*m.f1 == doctest::Approx(0.6857142857142857).epsilon(1e-12));

  SUBCASE("item order cannot change the numbers") {
    std::vector<bench::BenchmarkItem> shuffled = items;
    std::reverse(shuffled.begin(), shuffled.end());
    std::vector<Prediction> shuffled_preds(preds.rbegin(), preds.rend());
    YesNoMetrics m2 = yes_no_metrics(shuffled_preds, shuffled);
    CHECK(m2.accuracy == m.accuracy);
    CHECK(*m2.f1 == *m.f1);
  }

  SUBCASE("always answering Yes zeroes recall and f1") {
    std::vector<Prediction> all_yes;
    for (const auto& item : items) all_yes.push_back(answer(item.id, 0));
    YesNoMetrics d = yes_no_metrics(all_yes, items);
    CHECK(*d.precision == 1.0);
    CHECK(*d.recall == 0.0);
    CHECK(*d.f1 == 0.0);
    CHECK(d.accuracy == doctest::Approx(0.5));
  }

  SUBCASE("missing predictions count as wrong") {
    YesNoMetrics d = yes_no_metrics({}, items);
    CHECK(d.accuracy == 0.0);
    CHECK(*d.precision == 0.0);
  }

  SUBCASE("a one-sided item set reports absent components") {
    std::vector<bench::BenchmarkItem> only_yes(items.begin(), items.begin() + 10);
    YesNoMetrics d = yes_no_metrics(preds, only_yes);
    CHECK(d.precision.has_value());
    CHECK_FALSE(d.recall.has_value());
    CHECK_FALSE(d.f1.has_value());
    Json j = d.to_json();
    CHECK(j.contains("precision"));
    CHECK_FALSE(j.contains("f1"));
  }

  SUBCASE("four-choice items are rejected") {
    bench::BenchmarkItem four;
    four.id = "bad";
    four.video_ref = "vid/bad";
    four.task = BenchTask::kReasoningBasicAudio;
    four.question = "which?";
    four.choices = kEmotions4;
    four.answer_index = 0;
    CHECK_THROWS_AS(yes_no_metrics(preds, {four}), std::invalid_argument);
  }

  SUBCASE("all correct is all ones") {
    std::vector<Prediction> perfect;
    for (const auto& item : items) perfect.push_back(answer(item.id, item.answer_index));
    YesNoMetrics d = yes_no_metrics(perfect, items);
    CHECK(d.accuracy == 1.0);
    CHECK(*d.precision == 1.0);
    CHECK(*d.recall == 1.0);
    CHECK(*d.f1 == 1.0);
  }
}

TEST_CASE("recall averages match hand tallies") {
  using E = EmotionLabel;
  SUBCASE("equal supports") {
    std::vector<E> gold, pred;
    for (int i = 0; i < 10; ++i) {
      gold.push_back(E::kHappy);
      pred.push_back(E::kHappy);
    }
    for (int i = 0; i < 10; ++i) {
      gold.push_back(E::kSad);
      pred.push_back(i < 5 ? E::kSad : E::kHappy);
    }
    auto [uar, war] = uar_war(pred, gold);
    CHECK(uar == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(war == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("skewed supports") {
    std::vector<E> gold, pred;
    for (int i = 0; i < 90; ++i) {
      gold.push_back(E::kHappy);
      pred.push_back(E::kHappy);
    }
    for (int i = 0; i < 10; ++i) {
      gold.push_back(E::kFear);
      pred.push_back(E::kHappy);
    }
    auto [uar, war] = uar_war(pred, gold);
    CHECK(uar == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(war == doctest::Approx(0.9).epsilon(1e-12));
  }
  SUBCASE("single class collapses both to its recall") {
    std::vector<E> gold(7, E::kNeutral);
    std::vector<E> pred = {E::kNeutral, E::kNeutral, E::kSad, E::kNeutral,
                           E::kNeutral, E::kFear,    E::kNeutral};
    auto [uar, war] = uar_war(pred, gold);
    CHECK(uar == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
    CHECK(war == uar);
  }
  SUBCASE("bad input throws") {
    CHECK_THROWS_AS(uar_war({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(uar_war({E::kHappy}, {E::kHappy, E::kSad}),
                    std::invalid_argument);
  }
}

TEST_CASE("weighted f1 matches hand tallies") {
  using E = EmotionLabel;
  SUBCASE("perfect predictions") {
    std::vector<E> gold = {E::kHappy, E::kSad, E::kFear, E::kSad};
    CHECK(weighted_f1(gold, gold) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("majority-class collapse on an 80/20 split") {
    std::vector<E> gold, pred;
    for (int i = 0; i < 80; ++i) gold.push_back(E::kHappy);
    for (int i = 0; i < 20; ++i) gold.push_back(E::kSad);
    pred.assign(100, E::kHappy);
    CHECK(weighted_f1(pred, gold) ==
          doctest::Approx(0.7111111111111111).epsilon(1e-12));
  }
  SUBCASE("empty input throws") {
    CHECK_THROWS_AS(weighted_f1({}, {}), std::invalid_argument);
  }
}

TEST_CASE("metrics agree with a brute-force confusion oracle") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + (int)rng.below(40);
    std::vector<EmotionLabel> gold(n), pred(n);
    for (int i = 0; i < n; ++i) {
      gold[i] = kAllEmotions[rng.below(kNumEmotions)];
      pred[i] = kAllEmotions[rng.below(kNumEmotions)];
    }

    long double recall_sum = 0.0L;
    int classes = 0;
    long long correct = 0;
    long double wf1 = 0.0L;
    for (int c = 0; c < kNumEmotions; ++c) {
      long long tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        const bool g = (int)gold[i] == c;
        const bool p = (int)pred[i] == c;
        tp += g && p;
        fp += !g && p;
        fn += g && !p;
      }
      if (tp + fn > 0) {
        recall_sum += (long double)tp / (tp + fn);
        classes += 1;
        const long double prec = tp + fp > 0 ? (long double)tp / (tp + fp) : 0.0L;
        const long double rec = (long double)tp / (tp + fn);
        const long double f1 =
            prec + rec > 0 ? 2.0L * prec * rec / (prec + rec) : 0.0L;
        wf1 += f1 * (long double)(tp + fn);
      }
      correct += tp;
    }
    const double oracle_uar = (double)(recall_sum / classes);
    const double oracle_war = (double)correct / n;
    const double oracle_wf1 = (double)(wf1 / n);

    auto [uar, war] = uar_war(pred, gold);
    CHECK(uar == doctest::Approx(oracle_uar).epsilon(1e-12));
    CHECK(war == doctest::Approx(oracle_war).epsilon(1e-12));
    CHECK(weighted_f1(pred, gold) == doctest::Approx(oracle_wf1).epsilon(1e-12));
  }
}

TEST_CASE("yes/no metrics agree with a hand-count oracle on random fixtures") {
  Rng rng(405);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + (int)rng.below(30);
    std::vector<bench::BenchmarkItem> items;
    std::vector<Prediction> preds;
    long long yes_n = 0, yes_ok = 0, no_n = 0, no_ok = 0;
    for (int i = 0; i < n; ++i) {
      const bool yes = rng.below(2) == 0;
      const int pred = (int)rng.below(2);
      items.push_back(agreement_item("t" + std::to_string(i), yes));
      preds.push_back(answer("t" + std::to_string(i), pred));
      const bool correct = pred == (yes ? 0 : 1);
      (yes ? yes_n : no_n) += 1;
      if (correct) (yes ? yes_ok : no_ok) += 1;
    }
    YesNoMetrics m = yes_no_metrics(preds, items);
    CHECK(m.accuracy ==
          doctest::Approx((double)(yes_ok + no_ok) / n).epsilon(1e-12));
    if (yes_n > 0) CHECK(*m.precision == doctest::Approx((double)yes_ok / yes_n));
    if (no_n > 0) CHECK(*m.recall == doctest::Approx((double)no_ok / no_n));
  }
}

TEST_CASE("stress breakdown splits accuracy by subtask and modality") {
  std::vector<bench::BenchmarkItem> items;
  std::vector<Prediction> preds;
  // 2 spurious audio items, 1 answered correctly (No).
  items.push_back(yes_no_item("sp0", BenchTask::kStressAudio, false,
                              StressSubtask::kSpuriousAssociation));
  preds.push_back(answer("sp0", 1));
  items.push_back(yes_no_item("sp1", BenchTask::kStressAudio, false,
                              StressSubtask::kSpuriousAssociation));
  preds.push_back(answer("sp1", 0));
  // 2 hallucination audio items, both correct.
  items.push_back(yes_no_item("ha0", BenchTask::kStressAudio, false,
                              StressSubtask::kEmotionRelevantHallucination));
  preds.push_back(answer("ha0", 1));
  items.push_back(yes_no_item("ha1", BenchTask::kStressAudio, false,
                              StressSubtask::kEmotionRelevantHallucination));
  preds.push_back(answer("ha1", 1));

  StressBreakdown b = stress_breakdown(preds, items);
  CHECK(*b.accuracy(BenchTask::kStressAudio,
                    StressSubtask::kSpuriousAssociation) == 0.5);
  CHECK(*b.accuracy(BenchTask::kStressAudio,
                    StressSubtask::kEmotionRelevantHallucination) == 1.0);
  CHECK_FALSE(b.accuracy(BenchTask::kStressVisual,
                         StressSubtask::kSpuriousAssociation)
                  .has_value());
  CHECK(*b.averaged(StressSubtask::kSpuriousAssociation) == 0.5);
  CHECK_FALSE(
      b.accuracy(BenchTask::kStressAudio, StressSubtask::kNoHallucination)
          .has_value());
  CHECK_THROWS_AS(b.accuracy(BenchTask::kStressAudio, StressSubtask::kNone),
                  std::invalid_argument);
  CHECK_THROWS_AS(stress_breakdown(preds, {agreement_item("x", true)}),
                  std::invalid_argument);

  SUBCASE("subtask accuracies recombine into task accuracy") {
    Rng rng(11);
    std::vector<bench::BenchmarkItem> big;
    std::vector<Prediction> big_preds;
    for (int i = 0; i < 90; ++i) {
      const StressSubtask sub = std::array<StressSubtask, 3>{
          StressSubtask::kNoHallucination, StressSubtask::kSpuriousAssociation,
          StressSubtask::kEmotionRelevantHallucination}[rng.below(3)];
      big.push_back(yes_no_item("r" + std::to_string(i), BenchTask::kStressAudio,
                                stress_answer_is_yes(sub), sub));
      big_preds.push_back(answer("r" + std::to_string(i), (int)rng.below(2)));
    }
    StressBreakdown bb = stress_breakdown(big_preds, big);
    double weighted = 0.0;
    int total = 0;
    for (int s = 0; s < 3; ++s) {
      const auto& cell = bb.cells[0][s];
      weighted += cell.correct;
      total += cell.count;
    }
    YesNoMetrics task = yes_no_metrics(big_preds, big);
    CHECK(task.accuracy == doctest::Approx(weighted / total).epsilon(1e-12));
  }

  SUBCASE("all correct No answers give perfect subtask scores") {
    std::vector<Prediction> all_no;
    for (const auto& item : items) all_no.push_back(answer(item.id, 1));
    StressBreakdown perfect = stress_breakdown(all_no, items);
    CHECK(*perfect.averaged(StressSubtask::kSpuriousAssociation) == 1.0);
    CHECK(*perfect.averaged(StressSubtask::kEmotionRelevantHallucination) == 1.0);
  }
}

TEST_CASE("full evaluation rolls up per-task metrics") {
  std::vector<bench::BenchmarkItem> items;
  std::vector<Prediction> preds;
  for (int i = 0; i < 4; ++i) {
    bench::BenchmarkItem item;
    item.id = "r" + std::to_string(i);
    item.video_ref = "vid/" + item.id;
    item.task = BenchTask::kReasoningBasicAudio;
    item.question = "which fits?";
    item.choices = kEmotions4;
    item.answer_index = i % 4;
    item.emotion = emotion_from_string(item.choices[item.answer_index]);
    items.push_back(item);
    preds.push_back(answer(item.id, i < 3 ? item.answer_index : (i + 1) % 4));
  }
  items.push_back(agreement_item("g0", true));
  preds.push_back(answer("g0", 0));
  items.push_back(yes_no_item("s0", BenchTask::kStressVisual, false,
                              StressSubtask::kSpuriousAssociation));
  preds.push_back(answer("s0", 1));

  EvalReport report = evaluate(preds, items);
  CHECK(report.total == 6);
  CHECK(report.overall_accuracy == doctest::Approx(5.0 / 6.0));
  const auto& reasoning = report.tasks[(int)BenchTask::kReasoningBasicAudio];
  REQUIRE(reasoning.has_value());
  CHECK(reasoning->count == 4);
  CHECK(reasoning->accuracy == doctest::Approx(0.75));
  CHECK(reasoning->uar.has_value());
  CHECK(reasoning->war == doctest::Approx(0.75));
  const auto& agree = report.tasks[(int)BenchTask::kModalityAgreement];
  REQUIRE(agree.has_value());
  REQUIRE(agree->yes_no.has_value());
  CHECK(*agree->yes_no->precision == 1.0);
  CHECK(*report.stress.accuracy(BenchTask::kStressVisual,
                                StressSubtask::kSpuriousAssociation) == 1.0);
  Json j = report.to_json();
  CHECK(j.at("tasks").contains("reasoning_basic_audio"));
  CHECK(j.at("stress").contains("spurious_association"));
}

TEST_CASE("kernel density estimates integrate to one") {
  Rng rng(77);
  std::vector<double> a, b;
  for (int i = 0; i < 60; ++i) a.push_back(rng.normal() * 2.0 - 1.0);
  for (int i = 0; i < 45; ++i) b.push_back(rng.normal() * 0.5 + 3.0);
  const std::vector<double> grid = shared_grid(a, b);
  REQUIRE(grid.size() == 512);
  CHECK(grid.front() < grid.back());

  for (const auto& sample : {a, b}) {
    KdeCurve curve = kde(sample, grid);
    double integral = 0.0;
    for (size_t i = 1; i < grid.size(); ++i) {
      integral += 0.5 * (curve.density[i - 1] + curve.density[i]) *
                  (grid[i] - grid[i - 1]);
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  }

  SUBCASE("divergence is symmetric, zero only for identical curves") {
    KdeCurve pa = kde(a, grid);
    KdeCurve pb = kde(b, grid);
    CHECK(symmetric_kl(pa, pa) == 0.0);
    const double d_ab = symmetric_kl(pa, pb);
    CHECK(d_ab > 0.0);
    CHECK(symmetric_kl(pb, pa) == doctest::Approx(d_ab).epsilon(1e-12));
    KdeCurve other = kde(a, shared_grid(a, a, 16));
    CHECK_THROWS_AS(symmetric_kl(pa, other), std::invalid_argument);
  }

  SUBCASE("a constant sample still yields a usable bandwidth") {
    std::vector<double> flat(10, 2.5);
    CHECK(scott_bandwidth(flat) == 1e-6);
    KdeCurve curve = kde(flat, shared_grid(flat, flat));
    double integral = 0.0;
    for (size_t i = 1; i < curve.x.size(); ++i) {
      integral += 0.5 * (curve.density[i - 1] + curve.density[i]) *
                  (curve.x[i] - curve.x[i - 1]);
    }
    // The grid stops 3 bandwidths past the sample, so a point mass keeps
    // exactly the Gaussian mass within 3 sigma.
    CHECK(integral == doctest::Approx(0.9973002039).epsilon(1e-3));
  }
}

namespace {

prefdata::AvStore make_clip_pool(int n_clips, uint64_t seed) {
  prefdata::AvStore pool;
  Rng rng(seed);
  for (int i = 0; i < n_clips; ++i) {
    prefdata::AvClip clip;
    clip.emotion = kAllEmotions[rng.below(kNumEmotions)];
    clip.audio.resize(4);
    clip.video.resize(5);
    for (int& t : clip.audio) t = (int)rng.below(12);
    for (int& t : clip.video) t = (int)rng.below(12);
    pool.add("pool/" + std::to_string(i), std::move(clip));
  }
  return pool;
}

std::vector<ScoredItem> make_scored_items(int n, ModalityTag tag,
                                          const prefdata::AvStore& pool,
                                          uint64_t seed) {
  std::vector<ScoredItem> items;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    ScoredItem item;
    item.id = "item-" + std::to_string(i);
    item.prompt = {1, 2, (int)rng.below(16)};
    item.correct_tokens = {(int)rng.below(16), (int)rng.below(16)};
    item.av_ref = pool.refs()[rng.below(pool.size())];
    item.modality_tag = tag;
    items.push_back(std::move(item));
  }
  return items;
}

void scale_param(scorer::Model& model, const std::string& name, double factor) {
  for (double& v : model.find(name).w.data) v *= factor;
}

}  // namespace

TEST_CASE("adversarial swaps shift likelihoods only when the model listens") {
  scorer::ScorerConfig cfg;
  prefdata::AvStore pool = make_clip_pool(6, 12);

  SUBCASE("single-clip pool means identical inputs and zero divergence") {
    prefdata::AvStore one = make_clip_pool(1, 13);
    scorer::Model model = scorer::init_model(cfg, std::nullopt);
    auto items = make_scored_items(8, ModalityTag::kA, one, 3);
    ShiftReport r = adversarial_shift(model, items, one, ModalityTag::kV, 5);
    CHECK(r.divergence == 0.0);
    CHECK(r.mean_original == r.mean_adversarial);
  }

  SUBCASE("an audio-blind model ignores audio swaps exactly") {
    scorer::Model blind = scorer::init_model(cfg, std::nullopt);
    scale_param(blind, "audio_proj", 0.0);
    auto items = make_scored_items(8, ModalityTag::kV, pool, 4);
    ShiftReport r = adversarial_shift(blind, items, pool, ModalityTag::kA, 5);
    CHECK(r.divergence == 0.0);
    CHECK(r.mean_original == r.mean_adversarial);
  }

  SUBCASE("injected dependence grows the divergence") {
    // Items share one audio pattern while the pool holds distant patterns,
    // so every swap moves the audio input by the same amount and the only
    // free variable is how strongly the model reads it.
    prefdata::AvStore shift_pool;
    Rng rng(99);
    std::vector<ScoredItem> items;
    for (int i = 0; i < 8; ++i) {
      prefdata::AvClip clip;
      clip.emotion = EmotionLabel::kHappy;
      clip.audio = {0, 1, 0, 1};
      clip.video.resize(5);
      for (int& t : clip.video) t = (int)rng.below(12);
      shift_pool.add("near/" + std::to_string(i), std::move(clip));
      ScoredItem item;
      item.id = "dep-" + std::to_string(i);
      item.prompt = {1, 2, (int)rng.below(16)};
      item.correct_tokens = {(int)rng.below(16), (int)rng.below(16)};
      item.av_ref = "near/" + std::to_string(i);
      item.modality_tag = ModalityTag::kV;
      items.push_back(std::move(item));
    }
    for (int i = 0; i < 6; ++i) {
      prefdata::AvClip clip;
      clip.emotion = EmotionLabel::kSad;
      clip.audio = {10, 11, 10, 11};
      clip.video.resize(5);
      for (int& t : clip.video) t = (int)rng.below(12);
      shift_pool.add("far/" + std::to_string(i), std::move(clip));
    }
    scorer::Model weak = scorer::init_model(cfg, std::nullopt);
    scale_param(weak, "audio_proj", 0.1);
    scorer::Model strong = scorer::init_model(cfg, std::nullopt);
    scale_param(strong, "audio_proj", 0.5);
    ShiftReport rw = adversarial_shift(weak, items, shift_pool, ModalityTag::kA, 5);
    ShiftReport rs = adversarial_shift(strong, items, shift_pool, ModalityTag::kA, 5);
    CHECK(rw.divergence > 0.0);
    CHECK(rs.divergence > rw.divergence);
    Json j = rw.to_json();
    CHECK(j.at("grid").size() == 512);
    CHECK(j.at("divergence").get<double>() == rw.divergence);
  }

  SUBCASE("bad inputs are rejected") {
    scorer::Model model = scorer::init_model(cfg, std::nullopt);
    auto items = make_scored_items(2, ModalityTag::kA, pool, 4);
    CHECK_THROWS_AS(adversarial_shift(model, {}, pool, ModalityTag::kV, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        adversarial_shift(model, items, prefdata::AvStore(), ModalityTag::kV, 5),
        std::runtime_error);
    CHECK_THROWS_AS(adversarial_shift(model, items, pool, ModalityTag::kA, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(adversarial_shift(model, items, pool, ModalityTag::kAV, 5),
                    std::invalid_argument);
    auto av_items = make_scored_items(2, ModalityTag::kAV, pool, 4);
    CHECK_THROWS_AS(adversarial_shift(model, av_items, pool, ModalityTag::kV, 5),
                    std::invalid_argument);
  }
}

TEST_CASE("attention comparison reports grouped medians and deltas") {
  scorer::ScorerConfig cfg;
  prefdata::AvStore pool = make_clip_pool(5, 21);
  scorer::Model a = scorer::init_model(cfg, std::nullopt);
  scorer::Model b = scorer::init_model(cfg, std::nullopt);
  std::vector<ScoredItem> items = make_scored_items(5, ModalityTag::kA, pool, 6);
  auto video_items = make_scored_items(4, ModalityTag::kV, pool, 7);
  items.insert(items.end(), video_items.begin(), video_items.end());

  AttentionComparison same = attention_comparison(a, b, items, pool);
  REQUIRE(same.groups.size() == 2);
  CHECK(same.groups[0].tag == ModalityTag::kA);
  CHECK(same.groups[0].count == 5);
  CHECK(same.groups[1].count == 4);
  for (const auto& g : same.groups) {
    CHECK(g.delta.audio == 0.0);
    CHECK(g.delta.video == 0.0);
    CHECK(g.delta.text == 0.0);
  }

  SUBCASE("a single-item group equals direct recomputation") {
    std::vector<ScoredItem> one = {items[0]};
    AttentionComparison cmp = attention_comparison(a, b, one, pool);
    scorer::TokenStreams ts;
    const prefdata::AvClip& clip = pool.get(one[0].av_ref);
    ts.audio = clip.audio;
    ts.video = clip.video;
    ts.prompt = one[0].prompt;
    ts.response = one[0].correct_tokens;
    scorer::AttentionShare direct = scorer::attention_share(a, ts);
    REQUIRE(cmp.groups.size() == 1);
    CHECK(cmp.groups[0].median_before.audio == direct.audio);
    CHECK(cmp.groups[0].median_before.video == direct.video);
    CHECK(cmp.groups[0].median_before.text == direct.text);
    CHECK(direct.audio + direct.video + direct.text ==
          doctest::Approx(100.0).epsilon(1e-9));
  }

  SUBCASE("a perturbed after-model moves the deltas") {
    scorer::Model changed = scorer::init_model(cfg, std::nullopt);
    scale_param(changed, "L0.wq", 0.0);
    scale_param(changed, "L1.wq", 0.0);
    AttentionComparison cmp = attention_comparison(a, changed, items, pool);
    bool any_delta = false;
    for (const auto& g : cmp.groups) {
      any_delta = any_delta || g.delta.audio != 0.0 || g.delta.video != 0.0 ||
                  g.delta.text != 0.0;
    }
    CHECK(any_delta);
    Json j = cmp.to_json();
    CHECK(j.at("groups").size() == 2);
    CHECK(j.at("groups")[0].at("modality") == "A");
  }
}

TEST_CASE("contrastive decoding reduces to plain argmax when disabled") {
  scorer::ScorerConfig cfg;
  scorer::Model model = scorer::init_model(cfg, std::nullopt);
  scorer::TokenStreams base;
  base.audio = {1, 2, 3};
  base.video = {4, 5};
  base.prompt = {0, 7, 9};
  const std::vector<std::vector<int>> choices = {{3, 1}, {2, 2}, {5, 0}, {1, 1}};
  prefdata::StrategyConfig diffusion;
  diffusion.kind = NegativeSamplingKind::kDiffuse;

  ContrastiveResult plain = contrastive_decode(model, base, choices, 0.0,
                                               diffusion, 9);
  int direct = 0;
  double best = -1e300;
  for (size_t k = 0; k < choices.size(); ++k) {
    scorer::TokenStreams ts = base;
    ts.response = choices[k];
    const double lp = scorer::sequence_log_prob(model, ts);
    CHECK(lp == plain.original_logp[k]);
    if (lp > best) {
      best = lp;
      direct = (int)k;
    }
  }
  CHECK(plain.index == direct);

  SUBCASE("near-zero noise keeps the diffused scores equal to the originals") {
    diffusion.noise_step = 1;
    ContrastiveResult r = contrastive_decode(model, base, choices, 0.5,
                                             diffusion, 9);
    CHECK(r.diffused_logp == r.original_logp);
    CHECK(r.index == plain.index);
  }

  SUBCASE("argmax matches brute-force recomputation at full strength") {
    const double gamma = 0.7;
    ContrastiveResult r = contrastive_decode(model, base, choices, gamma,
                                             diffusion, 9);
    int expect = 0;
    double best_score = -1e300;
    for (size_t k = 0; k < choices.size(); ++k) {
      const double score = r.original_logp[k] - gamma * r.diffused_logp[k];
      if (score > best_score) {
        best_score = score;
        expect = (int)k;
      }
    }
    CHECK(r.index == expect);

    // Shifting every original log-likelihood by a constant cannot change
    // the winner.
    int shifted = 0;
    best_score = -1e300;
    for (size_t k = 0; k < choices.size(); ++k) {
      const double score = (r.original_logp[k] + 17.5) - gamma * r.diffused_logp[k];
      if (score > best_score) {
        best_score = score;
        shifted = (int)k;
      }
    }
    CHECK(shifted == r.index);
  }

  SUBCASE("bad inputs are rejected") {
    CHECK_THROWS_AS(contrastive_decode(model, base, {}, 0.0, diffusion, 9),
                    std::invalid_argument);
    scorer::TokenStreams with_response = base;
    with_response.response = {1};
    CHECK_THROWS_AS(
        contrastive_decode(model, with_response, choices, 0.0, diffusion, 9),
        std::invalid_argument);
  }
}
