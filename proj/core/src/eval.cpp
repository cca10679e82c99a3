#include "avemdpo/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace avemdpo::eval {

namespace {

std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  const size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

// Lowercase, every non-alphanumeric run collapsed to one space.
std::string normalize(const std::string& s) {
  std::string out;
  bool space = true;
  for (char c : s) {
    if (std::isalnum((unsigned char)c)) {
      out.push_back((char)std::tolower((unsigned char)c));
      space = false;
    } else if (!space) {
      out.push_back(' ');
      space = true;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool is_opening(char c) {
  return c == '(' || c == '[' || c == '"' || c == '\'' ||
         std::isspace((unsigned char)c);
}

bool is_letter_terminator(char c) {
  return c == ')' || c == ']' || c == '.' || c == ':' || c == ',' || c == '"' ||
         c == '\'';
}

}  // namespace

int extract_choice(const std::string& raw_output,
                   const std::vector<std::string>& choices) {
  if (choices.empty()) throw std::invalid_argument("extract_choice: no choices");

  size_t i = 0;
  while (i < raw_output.size() && is_opening(raw_output[i])) ++i;
  if (i < raw_output.size()) {
    const char c = (char)std::toupper((unsigned char)raw_output[i]);
    if (c >= 'A' && c <= 'D') {
      const int index = c - 'A';
      const bool at_end = i + 1 == raw_output.size();
      if ((at_end || is_letter_terminator(raw_output[i + 1])) &&
          index < (int)choices.size()) {
        return index;
      }
    }
  }

  const std::string trimmed = trim(raw_output);
  for (size_t k = 0; k < choices.size(); ++k) {
    if (trimmed == choices[k]) return (int)k;
  }

  const std::string hay = " " + normalize(raw_output) + " ";
  int found = kAbstain;
  int matches = 0;
  for (size_t k = 0; k < choices.size(); ++k) {
    const std::string needle = " " + normalize(choices[k]) + " ";
    if (needle != "  " && hay.find(needle) != std::string::npos) {
      found = (int)k;
      ++matches;
    }
  }
  return matches == 1 ? found : kAbstain;
}

Json Prediction::to_json() const {
  return Json{{"item_id", item_id},
              {"raw_output", raw_output},
              {"extracted_index", extracted_index}};
}

Prediction Prediction::from_json(const Json& j) {
  Prediction p;
  p.item_id = j.at("item_id").get<std::string>();
  p.raw_output = j.at("raw_output").get<std::string>();
  p.extracted_index = j.at("extracted_index").get<int>();
  if (p.item_id.empty()) throw std::invalid_argument("prediction: empty item_id");
  if (p.extracted_index < kAbstain) {
    throw std::invalid_argument("prediction '" + p.item_id +
                                "': bad extracted_index");
  }
  return p;
}

void save_predictions(const std::filesystem::path& path,
                      const std::vector<Prediction>& predictions) {
  std::vector<Json> rows;
  rows.reserve(predictions.size());
  for (const auto& p : predictions) rows.push_back(p.to_json());
  write_jsonl_atomic(path, rows);
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Prediction::from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return out;
}

namespace {

std::map<std::string, const Prediction*> index_predictions(
    const std::vector<Prediction>& predictions) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id[p.item_id] = &p;
  return by_id;
}

bool is_correct(const std::map<std::string, const Prediction*>& by_id,
                const bench::BenchmarkItem& item) {
  auto it = by_id.find(item.id);
  return it != by_id.end() && it->second->extracted_index == item.answer_index;
}

}  // namespace

Json YesNoMetrics::to_json() const {
  Json j{{"accuracy", accuracy}, {"n_yes", n_yes}, {"n_no", n_no}};
  if (precision) j["precision"] = *precision;
  if (recall) j["recall"] = *recall;
  if (f1) j["f1"] = *f1;
  return j;
}

YesNoMetrics yes_no_metrics(const std::vector<Prediction>& predictions,
                            const std::vector<bench::BenchmarkItem>& items) {
  auto by_id = index_predictions(predictions);
  YesNoMetrics m;
  int correct_total = 0, correct_yes = 0, correct_no = 0;
  for (const auto& item : items) {
    if (!is_yes_no_task(item.task)) {
      throw std::invalid_argument("yes_no_metrics: item '" + item.id +
                                  "' is not a Yes/No item");
    }
    item.validate();
    const bool answer_yes = item.choices[item.answer_index] == "Yes";
    const bool correct = is_correct(by_id, item);
    correct_total += correct;
    if (answer_yes) {
      m.n_yes += 1;
      correct_yes += correct;
    } else {
      m.n_no += 1;
      correct_no += correct;
    }
  }
  const int n = m.n_yes + m.n_no;
  m.accuracy = n > 0 ? (double)correct_total / n : 0.0;
  if (m.n_yes > 0) m.precision = (double)correct_yes / m.n_yes;
  if (m.n_no > 0) m.recall = (double)correct_no / m.n_no;
  if (m.precision && m.recall) {
    const double pr = *m.precision + *m.recall;
    m.f1 = pr > 0.0 ? 2.0 * *m.precision * *m.recall / pr : 0.0;
  }
  return m;
}

std::pair<double, double> uar_war(const std::vector<EmotionLabel>& predicted,
                                  const std::vector<EmotionLabel>& gold) {
  if (gold.empty()) throw std::invalid_argument("uar_war: empty input");
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("uar_war: size mismatch");
  }
  std::array<int, kNumEmotions> support{};
  std::array<int, kNumEmotions> hit{};
  int correct = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    support[(int)gold[i]] += 1;
    if (predicted[i] == gold[i]) {
      hit[(int)gold[i]] += 1;
      correct += 1;
    }
  }
  double recall_sum = 0.0;
  int classes = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    if (support[c] == 0) continue;
    recall_sum += (double)hit[c] / support[c];
    classes += 1;
  }
  return {recall_sum / classes, (double)correct / gold.size()};
}

double weighted_f1(const std::vector<EmotionLabel>& predicted,
                   const std::vector<EmotionLabel>& gold) {
  if (gold.empty()) throw std::invalid_argument("weighted_f1: empty input");
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("weighted_f1: size mismatch");
  }
  double total = 0.0;
  for (int c = 0; c < kNumEmotions; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
      const bool p = (int)predicted[i] == c;
      const bool g = (int)gold[i] == c;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    const int support = tp + fn;
    if (support == 0) continue;
    const double prec = tp + fp > 0 ? (double)tp / (tp + fp) : 0.0;
    const double rec = (double)tp / support;
    const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    total += f1 * support;
  }
  return total / (double)gold.size();
}

namespace {

int stress_modality_index(BenchTask task) {
  if (task == BenchTask::kStressAudio) return 0;
  if (task == BenchTask::kStressVisual) return 1;
  throw std::invalid_argument("not a stress task: " +
                              std::string(to_string(task)));
}

}  // namespace

std::optional<double> StressBreakdown::accuracy(BenchTask task,
                                                StressSubtask sub) const {
  if (sub == StressSubtask::kNone) {
    throw std::invalid_argument("no accuracy cell for subtask 'none'");
  }
  return cells[stress_modality_index(task)][(int)sub - 1].accuracy;
}

std::optional<double> StressBreakdown::averaged(StressSubtask sub) const {
  if (sub == StressSubtask::kNone) {
    throw std::invalid_argument("no accuracy cell for subtask 'none'");
  }
  double sum = 0.0;
  int n = 0;
  for (int m = 0; m < 2; ++m) {
    const Cell& cell = cells[m][(int)sub - 1];
    if (cell.accuracy) {
      sum += *cell.accuracy;
      n += 1;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

Json StressBreakdown::to_json() const {
  const std::array<StressSubtask, 3> subs = {
      StressSubtask::kNoHallucination, StressSubtask::kSpuriousAssociation,
      StressSubtask::kEmotionRelevantHallucination};
  Json j = Json::object();
  for (StressSubtask sub : subs) {
    Json row = Json::object();
    for (int m = 0; m < 2; ++m) {
      const Cell& cell = cells[m][(int)sub - 1];
      Json c{{"count", cell.count}, {"correct", cell.correct}};
      if (cell.accuracy) c["accuracy"] = *cell.accuracy;
      row[m == 0 ? "audio" : "visual"] = c;
    }
    if (auto avg = averaged(sub)) row["averaged"] = *avg;
    j[std::string(to_string(sub))] = row;
  }
  return j;
}

StressBreakdown stress_breakdown(const std::vector<Prediction>& predictions,
                                 const std::vector<bench::BenchmarkItem>& items) {
  auto by_id = index_predictions(predictions);
  StressBreakdown b;
  for (const auto& item : items) {
    if (!is_stress_task(item.task)) {
      throw std::invalid_argument("stress_breakdown: item '" + item.id +
                                  "' is not a stress item");
    }
    item.validate();
    auto& cell = b.cells[stress_modality_index(item.task)][(int)item.subtask - 1];
    cell.count += 1;
    cell.correct += is_correct(by_id, item);
  }
  for (auto& row : b.cells) {
    for (auto& cell : row) {
      if (cell.count > 0) cell.accuracy = (double)cell.correct / cell.count;
    }
  }
  return b;
}

Json TaskMetrics::to_json() const {
  Json j{{"count", count}, {"accuracy", accuracy}};
  if (yes_no) j["yes_no"] = yes_no->to_json();
  if (uar) j["uar"] = *uar;
  if (war) j["war"] = *war;
  if (wf1) j["weighted_f1"] = *wf1;
  return j;
}

Json EvalReport::to_json() const {
  Json tasks_json = Json::object();
  for (int t = 0; t < kNumBenchTasks; ++t) {
    if (tasks[t]) {
      tasks_json[std::string(to_string(kAllBenchTasks[t]))] = tasks[t]->to_json();
    }
  }
  return Json{{"total", total},
              {"overall_accuracy", overall_accuracy},
              {"tasks", tasks_json},
              {"stress", stress.to_json()}};
}

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<bench::BenchmarkItem>& items) {
  auto by_id = index_predictions(predictions);
  EvalReport report;
  std::array<std::vector<const bench::BenchmarkItem*>, kNumBenchTasks> grouped;
  int correct_total = 0;
  for (const auto& item : items) {
    item.validate();
    grouped[(int)item.task].push_back(&item);
    correct_total += is_correct(by_id, item);
  }
  report.total = (int)items.size();
  report.overall_accuracy =
      items.empty() ? 0.0 : (double)correct_total / items.size();

  std::vector<bench::BenchmarkItem> stress_items;
  for (int t = 0; t < kNumBenchTasks; ++t) {
    if (grouped[t].empty()) continue;
    const BenchTask task = kAllBenchTasks[t];
    TaskMetrics m;
    m.count = (int)grouped[t].size();
    int correct = 0;
    for (const auto* item : grouped[t]) correct += is_correct(by_id, *item);
    m.accuracy = (double)correct / m.count;

    std::vector<bench::BenchmarkItem> copy;
    for (const auto* item : grouped[t]) copy.push_back(*item);
    if (is_yes_no_task(task)) {
      m.yes_no = yes_no_metrics(predictions, copy);
      if (is_stress_task(task)) {
        for (auto& item : copy) stress_items.push_back(std::move(item));
      }
    } else {
      std::vector<EmotionLabel> gold, pred;
      for (const auto* item : grouped[t]) {
        gold.push_back(item->emotion);
        EmotionLabel guess =
            kAllEmotions[((int)item->emotion + 1) % kNumEmotions];
        auto it = by_id.find(item->id);
        if (it != by_id.end() && it->second->extracted_index != kAbstain) {
          try {
            guess = emotion_from_string(
                item->choices[it->second->extracted_index]);
          } catch (const std::invalid_argument&) {
            // Non-emotion choice text: keep the deterministic wrong label.
          }
        }
        pred.push_back(guess);
      }
      auto [uar, war] = uar_war(pred, gold);
      m.uar = uar;
      m.war = war;
      m.wf1 = weighted_f1(pred, gold);
    }
    report.tasks[t] = std::move(m);
  }
  report.stress = stress_breakdown(predictions, stress_items);
  return report;
}

double scott_bandwidth(const std::vector<double>& sample) {
  if (sample.empty()) throw std::invalid_argument("scott_bandwidth: empty sample");
  const double n = (double)sample.size();
  double mean = 0.0;
  for (double x : sample) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : sample) var += (x - mean) * (x - mean);
  var = sample.size() > 1 ? var / (n - 1.0) : 0.0;
  double bw = std::sqrt(var) * std::pow(n, -0.2);
  if (!(bw > 0.0) || !std::isfinite(bw)) bw = 1e-6;
  return bw;
}

std::vector<double> shared_grid(const std::vector<double>& a,
                                const std::vector<double>& b, int points) {
  if (a.empty() || b.empty()) throw std::invalid_argument("shared_grid: empty sample");
  if (points < 2) throw std::invalid_argument("shared_grid: need >= 2 points");
  const double bw = std::max(scott_bandwidth(a), scott_bandwidth(b));
  double lo = std::min(*std::min_element(a.begin(), a.end()),
                       *std::min_element(b.begin(), b.end())) -
              3.0 * bw;
  double hi = std::max(*std::max_element(a.begin(), a.end()),
                       *std::max_element(b.begin(), b.end())) +
              3.0 * bw;
  std::vector<double> grid(points);
  const double step = (hi - lo) / (points - 1);
  for (int i = 0; i < points; ++i) grid[i] = lo + step * i;
  return grid;
}

KdeCurve kde(const std::vector<double>& sample, const std::vector<double>& grid) {
  if (sample.empty()) throw std::invalid_argument("kde: empty sample");
  KdeCurve curve;
  curve.x = grid;
  curve.bandwidth = scott_bandwidth(sample);
  curve.density.resize(grid.size());
  const double norm =
      1.0 / ((double)sample.size() * curve.bandwidth * std::sqrt(2.0 * M_PI));
  for (size_t j = 0; j < grid.size(); ++j) {
    double acc = 0.0;
    for (double x : sample) {
      const double z = (grid[j] - x) / curve.bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    curve.density[j] = norm * acc;
  }
  return curve;
}

double symmetric_kl(const KdeCurve& p, const KdeCurve& q) {
  if (p.x != q.x) {
    throw std::invalid_argument("symmetric_kl: curves use different grids");
  }
  constexpr double kFloor = 1e-12;
  const size_t n = p.density.size();
  std::vector<double> pp(n), qq(n);
  double psum = 0.0, qsum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    pp[i] = std::max(p.density[i], kFloor);
    qq[i] = std::max(q.density[i], kFloor);
    psum += pp[i];
    qsum += qq[i];
  }
  double kl_pq = 0.0, kl_qp = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double pi = pp[i] / psum;
    const double qi = qq[i] / qsum;
    kl_pq += pi * std::log(pi / qi);
    kl_qp += qi * std::log(qi / pi);
  }
  return kl_pq + kl_qp;
}

namespace {

scorer::TokenStreams item_streams(const ScoredItem& item,
                                  const prefdata::AvClip& clip) {
  scorer::TokenStreams ts;
  ts.audio = clip.audio;
  ts.video = clip.video;
  ts.prompt = item.prompt;
  ts.response = item.correct_tokens;
  ts.modality_tag = item.modality_tag;
  return ts;
}

}  // namespace

Json ShiftReport::to_json() const {
  return Json{{"mean_original", mean_original},
              {"mean_adversarial", mean_adversarial},
              {"divergence", divergence},
              {"bandwidth_original", kde_original.bandwidth},
              {"bandwidth_adversarial", kde_adversarial.bandwidth},
              {"grid", kde_original.x},
              {"density_original", kde_original.density},
              {"density_adversarial", kde_adversarial.density}};
}

ShiftReport adversarial_shift(scorer::Model& model,
                              const std::vector<ScoredItem>& items,
                              const prefdata::AvStore& pool, ModalityTag swap,
                              uint64_t seed) {
  if (items.empty()) throw std::invalid_argument("adversarial_shift: no items");
  if (pool.size() == 0) throw std::runtime_error("adversarial_shift: empty pool");
  if (swap == ModalityTag::kAV) {
    throw std::invalid_argument("adversarial_shift: swap one modality, not both");
  }
  std::vector<double> original, adversarial;
  original.reserve(items.size());
  adversarial.reserve(items.size());
  for (const auto& item : items) {
    if (item.modality_tag == ModalityTag::kAV) {
      throw std::invalid_argument("adversarial_shift: item '" + item.id +
                                  "' is not single-modality");
    }
    const ModalityTag irrelevant =
        item.modality_tag == ModalityTag::kA ? ModalityTag::kV : ModalityTag::kA;
    if (swap != irrelevant) {
      throw std::invalid_argument("adversarial_shift: item '" + item.id +
                                  "' asks about the modality being swapped");
    }
    const prefdata::AvClip& clip = pool.get(item.av_ref);
    scorer::TokenStreams base = item_streams(item, clip);
    original.push_back(scorer::sequence_log_prob(model, base));

    Rng rng(derive_seed(seed, item.id));
    const prefdata::AvClip& adv =
        pool.get(pool.refs()[rng.below(pool.size())]);
    scorer::TokenStreams swapped = base;
    if (swap == ModalityTag::kV) {
      swapped.video = adv.video;
    } else {
      swapped.audio = adv.audio;
    }
    adversarial.push_back(scorer::sequence_log_prob(model, swapped));
  }

  ShiftReport report;
  for (double x : original) report.mean_original += x;
  for (double x : adversarial) report.mean_adversarial += x;
  report.mean_original /= (double)original.size();
  report.mean_adversarial /= (double)adversarial.size();
  const std::vector<double> grid = shared_grid(original, adversarial);
  report.kde_original = kde(original, grid);
  report.kde_adversarial = kde(adversarial, grid);
  report.divergence = symmetric_kl(report.kde_original, report.kde_adversarial);
  return report;
}

namespace {

double component_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

scorer::AttentionShare median_share(const std::vector<scorer::AttentionShare>& v) {
  std::vector<double> a, b, c;
  for (const auto& s : v) {
    a.push_back(s.audio);
    b.push_back(s.video);
    c.push_back(s.text);
  }
  scorer::AttentionShare out;
  out.audio = component_median(std::move(a));
  out.video = component_median(std::move(b));
  out.text = component_median(std::move(c));
  return out;
}

Json share_json(const scorer::AttentionShare& s) {
  return Json{{"audio", s.audio}, {"video", s.video}, {"text", s.text}};
}

}  // namespace

Json AttentionComparison::to_json() const {
  Json arr = Json::array();
  for (const auto& g : groups) {
    arr.push_back(Json{{"modality", std::string(to_string(g.tag))},
                       {"count", g.count},
                       {"before", share_json(g.median_before)},
                       {"after", share_json(g.median_after)},
                       {"delta", share_json(g.delta)}});
  }
  return Json{{"groups", arr}};
}

AttentionComparison attention_comparison(scorer::Model& before,
                                         scorer::Model& after,
                                         const std::vector<ScoredItem>& items,
                                         const prefdata::AvStore& pool) {
  AttentionComparison cmp;
  for (ModalityTag tag : {ModalityTag::kA, ModalityTag::kV, ModalityTag::kAV}) {
    std::vector<scorer::AttentionShare> shares_before, shares_after;
    for (const auto& item : items) {
      if (item.modality_tag != tag) continue;
      const scorer::TokenStreams ts = item_streams(item, pool.get(item.av_ref));
      shares_before.push_back(scorer::attention_share(before, ts));
      shares_after.push_back(scorer::attention_share(after, ts));
    }
    if (shares_before.empty()) continue;
    AttentionComparison::Group g;
    g.tag = tag;
    g.count = (int)shares_before.size();
    g.median_before = median_share(shares_before);
    g.median_after = median_share(shares_after);
    g.delta.audio = g.median_after.audio - g.median_before.audio;
    g.delta.video = g.median_after.video - g.median_before.video;
    g.delta.text = g.median_after.text - g.median_before.text;
    cmp.groups.push_back(std::move(g));
  }
  return cmp;
}

ContrastiveResult contrastive_decode(scorer::Model& model,
                                     const scorer::TokenStreams& base,
                                     const std::vector<std::vector<int>>& choices,
                                     double gamma_cd,
                                     const prefdata::StrategyConfig& diffusion,
                                     uint64_t seed) {
  if (choices.empty()) {
    throw std::invalid_argument("contrastive_decode: no choices");
  }
  if (!base.response.empty()) {
    throw std::invalid_argument(
        "contrastive_decode: base streams already hold a response");
  }
  prefdata::AvClip original;
  original.audio = base.audio;
  original.video = base.video;
  Rng rng(derive_seed(seed, "contrastive-decode"));
  const prefdata::AvClip diffused =
      prefdata::diffuse_clip(original, diffusion, rng);

  ContrastiveResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < choices.size(); ++k) {
    scorer::TokenStreams with_choice = base;
    with_choice.response = choices[k];
    const double orig = scorer::sequence_log_prob(model, with_choice);
    with_choice.audio = diffused.audio;
    with_choice.video = diffused.video;
    const double diff = scorer::sequence_log_prob(model, with_choice);
    result.original_logp.push_back(orig);
    result.diffused_logp.push_back(diff);
    const double score = orig - gamma_cd * diff;
    if (score > best) {
      best = score;
      result.index = (int)k;
    }
  }
  return result;
}

}  // namespace avemdpo::eval
