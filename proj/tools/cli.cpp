#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avemdpo/annotator.hpp"
#include "avemdpo/bench.hpp"
#include "avemdpo/eval.hpp"
#include "avemdpo/jsonl.hpp"
#include "avemdpo/labels.hpp"
#include "avemdpo/prefdata.hpp"
#include "avemdpo/rng.hpp"
#include "avemdpo/scorer.hpp"
#include "avemdpo/svgplot.hpp"
#include "avemdpo/train.hpp"

// Subcommand handlers run in two phases: everything that can be checked
// up front (flags, config file, input loading, cross-references) happens
// first and maps to exit code 1; computing and writing outputs happens
// second and maps to exit code 2. --dry-run stops between the phases, so
// it exercises exactly the validation surface.

namespace avemdpo::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  uint64_t seed = 0;
  std::string config_path;
  std::string fixtures_dir;
  bool dry_run = false;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, bool with_fixtures) {
  c.seed_opt = sub->add_option("--seed", c.seed,
                               "root random seed (overrides the config file)");
  sub->add_option("--config", c.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  sub->add_flag("--dry-run", c.dry_run,
                "validate flags and inputs, then exit without writing");
  if (with_fixtures) {
    sub->add_option("--fixtures", c.fixtures_dir,
                    "replay recorded annotator exchanges from this directory")
        ->check(CLI::ExistingDirectory);
  }
}

bool given(const CLI::Option* opt) { return opt != nullptr && opt->count() > 0; }

Json load_config_json(const std::string& path,
                      const std::vector<std::string>& allowed_keys) {
  if (path.empty()) return Json::object();
  Json j = Json::parse(read_text(path));
  if (!j.is_object()) {
    throw std::invalid_argument("config must be a JSON object: " + path);
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const auto& k : allowed_keys) known = known || k == key;
    if (!known) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return j;
}

uint64_t pick_seed(const Json& cfg, const Common& c) {
  uint64_t seed = 0;
  if (cfg.contains("seed")) seed = cfg.at("seed").get<uint64_t>();
  if (given(c.seed_opt)) seed = c.seed;
  return seed;
}

std::unique_ptr<annotator::AnnotatorClient> make_client(
    const std::string& fixtures_dir, uint64_t seed) {
  if (!fixtures_dir.empty()) {
    return std::make_unique<annotator::FixtureAnnotator>(fixtures_dir);
  }
  return std::make_unique<annotator::SyntheticAnnotator>(seed);
}

void require_templates_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::invalid_argument("templates directory not found: " +
                                dir.string());
  }
}

int fail_validation(const std::string& cmd, const std::exception& e) {
  std::cerr << cmd << ": " << e.what() << "\n";
  return 1;
}

int fail_runtime(const std::string& cmd, const std::exception& e) {
  std::cerr << cmd << ": " << e.what() << "\n";
  return 2;
}

void write_json_atomic(const fs::path& path, const Json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- bench-build

struct BenchBuildArgs {
  Common c;
  std::string manifest;
  std::string out;
  std::string templates = "templates";
  int guessers = 3;
  CLI::Option* templates_opt = nullptr;
  CLI::Option* guessers_opt = nullptr;
};

int run_bench_build(const BenchBuildArgs& a) {
  std::vector<bench::ManifestRow> rows;
  bench::BuildConfig bcfg;
  std::unique_ptr<annotator::AnnotatorClient> client;
  int n_guessers = 0;
  uint64_t seed = 0;
  try {
    const Json cfg = load_config_json(a.c.config_path,
                                      {"seed", "templates_dir", "guessers"});
    seed = pick_seed(cfg, a.c);
    std::string templates = a.templates;
    if (!given(a.templates_opt) && cfg.contains("templates_dir")) {
      templates = cfg.at("templates_dir").get<std::string>();
    }
    n_guessers = a.guessers;
    if (!given(a.guessers_opt) && cfg.contains("guessers")) {
      n_guessers = cfg.at("guessers").get<int>();
    }
    if (n_guessers < 1) throw std::invalid_argument("guessers must be >= 1");
    require_templates_dir(templates);
    rows = bench::load_manifest(a.manifest);
    if (rows.empty()) throw std::invalid_argument("manifest is empty");
    bcfg.seed = seed;
    bcfg.templates_dir = templates;
    client = make_client(a.c.fixtures_dir, derive_seed(seed, "annotator"));
  } catch (const std::exception& e) {
    return fail_validation("bench-build", e);
  }
  if (a.c.dry_run) {
    std::cout << "bench-build: " << rows.size() << " videos validated, dry run\n";
    return 0;
  }
  try {
    std::vector<bench::BenchmarkItem> items;
    std::vector<Json> quarantine;
    int discarded = 0;
    for (const auto& row : rows) {
      bench::VideoOutcome vo = bench::build_video_items(row, *client, bcfg);
      if (vo.discarded) ++discarded;
      items.insert(items.end(), vo.items.begin(), vo.items.end());
      quarantine.insert(quarantine.end(), vo.quarantined.begin(),
                        vo.quarantined.end());
    }
    std::vector<std::unique_ptr<annotator::TextGuesser>> owners;
    std::vector<annotator::TextGuesser*> guessers;
    for (int i = 0; i < n_guessers; ++i) {
      owners.push_back(std::make_unique<annotator::RandomGuesser>(
          "random-" + std::to_string(i),
          derive_seed(seed, "guesser." + std::to_string(i))));
      guessers.push_back(owners.back().get());
    }
    bench::FilterResult fr = bench::text_only_filter(items, guessers);
    const std::vector<bench::BenchmarkItem> kept =
        bench::balance_answers(fr.retained, derive_seed(seed, "balance"));
    const bench::StatsReport stats = bench::compute_statistics(kept, &rows);

    fs::create_directories(a.out);
    bench::save_items(fs::path(a.out) / "items.jsonl", kept);
    write_json_atomic(fs::path(a.out) / "stats.json", stats.to_json());
    write_jsonl_atomic(fs::path(a.out) / "quarantine.jsonl", quarantine);
    write_json_atomic(fs::path(a.out) / "filter.json",
                      Json{{"discarded_videos", discarded},
                           {"removed_ids", fr.removed_ids},
                           {"warnings", fr.warnings}});
    std::cout << "bench-build: " << kept.size() << " items from " << rows.size()
              << " videos (" << discarded << " discarded, "
              << fr.removed_ids.size() << " text-answerable, "
              << quarantine.size() << " quarantined)\n";
  } catch (const std::exception& e) {
    return fail_runtime("bench-build", e);
  }
  return 0;
}

// ----------------------------------------------------------------- pref-build

struct PrefBuildArgs {
  Common c;
  std::string sources;
  std::string pool;
  std::string out;
  std::string strategy = "different_emotion";
  int noise_step = 500;
  int retries = 2;
  std::string templates = "templates";
  CLI::Option* strategy_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* retries_opt = nullptr;
  CLI::Option* templates_opt = nullptr;
};

int run_pref_build(const PrefBuildArgs& a) {
  std::vector<prefdata::PreferenceSource> sources;
  prefdata::AvStore pool;
  prefdata::BuildConfig pcfg;
  std::unique_ptr<annotator::AnnotatorClient> client;
  try {
    const Json cfg = load_config_json(
        a.c.config_path,
        {"seed", "templates_dir", "strategy", "noise_step", "retry_limit"});
    const uint64_t seed = pick_seed(cfg, a.c);
    std::string strategy = a.strategy;
    if (!given(a.strategy_opt) && cfg.contains("strategy")) {
      strategy = cfg.at("strategy").get<std::string>();
    }
    int noise_step = a.noise_step;
    if (!given(a.noise_opt) && cfg.contains("noise_step")) {
      noise_step = cfg.at("noise_step").get<int>();
    }
    int retries = a.retries;
    if (!given(a.retries_opt) && cfg.contains("retry_limit")) {
      retries = cfg.at("retry_limit").get<int>();
    }
    std::string templates = a.templates;
    if (!given(a.templates_opt) && cfg.contains("templates_dir")) {
      templates = cfg.at("templates_dir").get<std::string>();
    }
    require_templates_dir(templates);
    if (retries < 1) throw std::invalid_argument("retry limit must be >= 1");

    pcfg.strategy.kind = negative_sampling_from_string(strategy);
    pcfg.strategy.noise_step = noise_step;
    pcfg.strategy.validate();
    pcfg.retry_limit = retries;
    pcfg.seed = seed;
    pcfg.templates_dir = templates;

    sources = prefdata::load_sources(a.sources);
    if (sources.empty()) throw std::invalid_argument("sources file is empty");
    pool = prefdata::AvStore::load(a.pool);
    for (const auto& src : sources) {
      if (!pool.contains(src.av_ref)) {
        throw std::invalid_argument("source '" + src.id +
                                    "' references unknown clip '" +
                                    src.av_ref + "'");
      }
    }
    client = make_client(a.c.fixtures_dir, derive_seed(seed, "annotator"));
  } catch (const std::exception& e) {
    return fail_validation("pref-build", e);
  }
  if (a.c.dry_run) {
    std::cout << "pref-build: " << sources.size()
              << " sources validated, dry run\n";
    return 0;
  }
  try {
    prefdata::BuildResult br =
        prefdata::build_preference_dataset(sources, *client, pool, pcfg);
    fs::create_directories(a.out);
    prefdata::save_records(fs::path(a.out) / "records.jsonl", br.records);
    br.derived.save(fs::path(a.out) / "derived.jsonl");
    write_jsonl_atomic(fs::path(a.out) / "quarantine.jsonl", br.quarantined);
    std::cout << "pref-build: " << br.records.size() << " records ("
              << br.quarantined.size() << " quarantined)\n";
  } catch (const std::exception& e) {
    return fail_runtime("pref-build", e);
  }
  return 0;
}

// ---------------------------------------------------------------------- train

struct TrainArgs {
  Common c;
  std::string records;
  std::string pool;
  std::string derived;
  std::string out;
  std::string profile = "toy";
  std::string resume;
  std::string ablation;
  int epochs = 1;
  int checkpoint_every = 0;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* ckpt_opt = nullptr;
};

int run_train(const TrainArgs& a) {
  train::TrainConfig tc;
  train::TrainDataset data;
  try {
    tc = train::TrainConfig::profile(a.profile);
    if (!a.c.config_path.empty()) {
      // The config file is a partial TrainConfig: present keys override the
      // profile, nested objects merge per key.
      const Json patch = load_config_json(
          a.c.config_path,
          {"learning_rate", "batch_size", "grad_accum_steps", "epochs", "seed",
           "momentum", "checkpoint_every", "ablation", "loss", "scorer",
           "adapter", "checkpoint_dir"});
      Json merged = tc.to_json();
      merged.update(patch, true);
      tc = train::TrainConfig::from_json(merged);
    }
    if (given(a.c.seed_opt)) tc.seed = a.c.seed;
    if (!a.ablation.empty()) tc.ablation = train::ablation_from_string(a.ablation);
    if (given(a.epochs_opt)) tc.epochs = a.epochs;
    if (given(a.ckpt_opt)) tc.checkpoint_every = a.checkpoint_every;
    tc.validate();

    data.records = prefdata::load_records(a.records);
    if (data.records.empty()) throw std::invalid_argument("records file is empty");
    data.pool = prefdata::AvStore::load(a.pool);
    if (!a.derived.empty()) data.derived = prefdata::AvStore::load(a.derived);
    for (const auto& rec : data.records) {
      data.clip(rec.chosen_av_ref);
      data.clip(rec.rejected_av_ref);
    }
    if (!a.resume.empty() && !fs::is_regular_file(a.resume)) {
      throw std::invalid_argument("resume checkpoint not found: " + a.resume);
    }
  } catch (const std::exception& e) {
    return fail_validation("train", e);
  }
  if (a.c.dry_run) {
    std::cout << "train: " << data.records.size()
              << " records validated, dry run\n";
    return 0;
  }
  try {
    fs::create_directories(a.out);
    tc.checkpoint_dir = a.out;
    const train::TrainOutcome outcome = train::train_loop(
        tc, data, a.resume.empty() ? fs::path{} : fs::path(a.resume));
    train::save_history(fs::path(a.out) / "history.jsonl", outcome.history);
    write_json_atomic(fs::path(a.out) / "guard.json",
                      Json{{"reference_drift", outcome.guard.reference_drift},
                           {"backbone_drift", outcome.guard.backbone_drift},
                           {"adapter_change", outcome.guard.adapter_change}});
    Json resolved = tc.to_json();
    resolved["checkpoint_dir"] = "";
    write_json_atomic(fs::path(a.out) / "config.json", resolved);
    std::cout << "train: " << outcome.history.size() << " optimizer steps";
    if (!outcome.history.empty()) {
      const train::StepLog& last = outcome.history.back();
      std::cout << ", final loss " << last.total << ", preference accuracy "
                << last.preference_accuracy;
    }
    std::cout << "\n";
  } catch (const std::exception& e) {
    return fail_runtime("train", e);
  }
  return 0;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
  Common c;
  std::string items;
  std::string outputs;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  std::vector<bench::BenchmarkItem> items;
  std::vector<eval::Prediction> predictions;
  try {
    load_config_json(a.c.config_path, {"seed"});
    items = bench::load_items(a.items);
    if (items.empty()) throw std::invalid_argument("items file is empty");
    std::map<std::string, const bench::BenchmarkItem*> by_id;
    for (const auto& item : items) by_id[item.id] = &item;

    const std::vector<Json> rows = read_jsonl(a.outputs);
    std::map<std::string, bool> seen;
    for (size_t i = 0; i < rows.size(); ++i) {
      const std::string id = rows[i].at("item_id").get<std::string>();
      const std::string raw = rows[i].at("raw_output").get<std::string>();
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw std::invalid_argument("outputs row " + std::to_string(i + 1) +
                                    ": unknown item_id '" + id + "'");
      }
      if (seen[id]) {
        throw std::invalid_argument("outputs row " + std::to_string(i + 1) +
                                    ": duplicate item_id '" + id + "'");
      }
      seen[id] = true;
      predictions.push_back(eval::Prediction{
          id, raw, eval::extract_choice(raw, it->second->choices)});
    }
  } catch (const std::exception& e) {
    return fail_validation("eval", e);
  }
  if (a.c.dry_run) {
    std::cout << "eval: " << predictions.size() << " outputs against "
              << items.size() << " items validated, dry run\n";
    return 0;
  }
  try {
    const eval::EvalReport report = eval::evaluate(predictions, items);
    fs::create_directories(a.out);
    eval::save_predictions(fs::path(a.out) / "predictions.jsonl", predictions);
    write_json_atomic(fs::path(a.out) / "report.json", report.to_json());
    char line[64];
    std::snprintf(line, sizeof(line), "%.4f", report.overall_accuracy);
    std::cout << "eval: " << report.total << " items, overall accuracy " << line
              << "\n";
  } catch (const std::exception& e) {
    return fail_runtime("eval", e);
  }
  return 0;
}

// -------------------------------------------------------------------- analyze

struct AnalyzeArgs {
  Common c;
  std::string model;
  std::string baseline;
  std::string items;
  std::string pool;
  std::string out;
};

train::TrainState load_trained_state(const std::string& path) {
  const scorer::Checkpoint ck = scorer::load_checkpoint(path);
  if (!ck.meta.contains("config")) {
    throw std::invalid_argument("checkpoint has no embedded train config: " +
                                path);
  }
  const train::TrainConfig tc = train::TrainConfig::from_json(ck.meta.at("config"));
  return train::load_train_checkpoint(path, tc);
}

int run_analyze(const AnalyzeArgs& a) {
  std::optional<train::TrainState> after;
  std::optional<train::TrainState> before;
  std::vector<eval::ScoredItem> items;
  prefdata::AvStore pool;
  uint64_t seed = 0;
  try {
    const Json cfg = load_config_json(a.c.config_path, {"seed"});
    seed = pick_seed(cfg, a.c);
    after = load_trained_state(a.model);
    if (!a.baseline.empty()) {
      before = load_trained_state(a.baseline);
      if (before->cfg.scorer.to_json() != after->cfg.scorer.to_json() ||
          before->cfg.adapter.to_json() != after->cfg.adapter.to_json()) {
        throw std::invalid_argument(
            "baseline checkpoint uses a different model architecture");
      }
    }
    pool = prefdata::AvStore::load(a.pool);
    const int vocab = after->cfg.scorer.text_vocab;
    for (const Json& row : read_jsonl(a.items)) {
      eval::ScoredItem item;
      item.id = row.at("id").get<std::string>();
      item.prompt = train::encode_text(row.at("prompt").get<std::string>(), vocab);
      item.correct_tokens =
          train::encode_text(row.at("answer").get<std::string>(), vocab);
      item.av_ref = row.at("av_ref").get<std::string>();
      item.modality_tag =
          modality_from_string(row.at("modality").get<std::string>());
      if (item.modality_tag == ModalityTag::kAV) {
        throw std::invalid_argument("item '" + item.id +
                                    "': modality must be A or V");
      }
      if (item.correct_tokens.empty()) {
        throw std::invalid_argument("item '" + item.id + "': empty answer");
      }
      if (!pool.contains(item.av_ref)) {
        throw std::invalid_argument("item '" + item.id +
                                    "' references unknown clip '" +
                                    item.av_ref + "'");
      }
      items.push_back(std::move(item));
    }
    if (items.empty()) throw std::invalid_argument("items file is empty");
  } catch (const std::exception& e) {
    return fail_validation("analyze", e);
  }
  if (a.c.dry_run) {
    std::cout << "analyze: " << items.size() << " items validated, dry run\n";
    return 0;
  }
  try {
    scorer::Model& after_model = after->models.policy;
    scorer::Model& before_model =
        before ? before->models.policy : after->models.reference;

    const eval::AttentionComparison att =
        eval::attention_comparison(before_model, after_model, items, pool);
    fs::create_directories(a.out);
    for (const auto& group : att.groups) {
      const std::string tag(to_string(group.tag));
      std::vector<svgplot::BarSeries> series{
          {"before",
           {group.median_before.audio, group.median_before.video,
            group.median_before.text}},
          {"after",
           {group.median_after.audio, group.median_after.video,
            group.median_after.text}}};
      write_text_atomic(
          fs::path(a.out) / ("attention_" + tag + ".svg"),
          svgplot::bar_chart_svg("attention share, " + tag + " prompts",
                                 {"audio", "video", "text"}, series,
                                 "share (%)"));
    }

    Json shifts = Json::object();
    for (const ModalityTag tag : {ModalityTag::kA, ModalityTag::kV}) {
      std::vector<eval::ScoredItem> subset;
      for (const auto& item : items) {
        if (item.modality_tag == tag) subset.push_back(item);
      }
      const std::string name(to_string(tag));
      if (subset.empty()) {
        shifts[name] = nullptr;
        continue;
      }
      const ModalityTag swap =
          tag == ModalityTag::kA ? ModalityTag::kV : ModalityTag::kA;
      const eval::ShiftReport sr = eval::adversarial_shift(
          after_model, subset, pool, swap, derive_seed(seed, "shift." + name));
      shifts[name] = sr.to_json();
      std::vector<svgplot::Curve> curves{
          {"original", sr.kde_original.x, sr.kde_original.density},
          {"adversarial", sr.kde_adversarial.x, sr.kde_adversarial.density}};
      write_text_atomic(
          fs::path(a.out) / ("shift_" + name + ".svg"),
          svgplot::line_chart_svg("correct-answer log-likelihood, " + name +
                                      " prompts",
                                  curves, "log-likelihood", "density"));
      char line[64];
      std::snprintf(line, sizeof(line), "%.6f", sr.divergence);
      std::cout << "analyze: " << name << " adversarial divergence " << line
                << "\n";
    }
    write_json_atomic(fs::path(a.out) / "analysis.json",
                      Json{{"attention", att.to_json()}, {"shift", shifts}});
  } catch (const std::exception& e) {
    return fail_runtime("analyze", e);
  }
  return 0;
}

// ---------------------------------------------------------------------- stats

struct StatsArgs {
  Common c;
  std::string items;
  std::string manifest;
  std::string out;
};

int run_stats(const StatsArgs& a) {
  std::vector<bench::BenchmarkItem> items;
  std::vector<bench::ManifestRow> rows;
  try {
    load_config_json(a.c.config_path, {"seed"});
    items = bench::load_items(a.items);
    if (!a.manifest.empty()) rows = bench::load_manifest(a.manifest);
  } catch (const std::exception& e) {
    return fail_validation("stats", e);
  }
  if (a.c.dry_run) {
    std::cout << "stats: " << items.size() << " items validated, dry run\n";
    return 0;
  }
  try {
    const bench::StatsReport report =
        bench::compute_statistics(items, a.manifest.empty() ? nullptr : &rows);
    char line[160];
    std::snprintf(line, sizeof(line), "%-26s %6s %8s %8s\n", "task", "qa",
                  "videos", "random");
    std::cout << line;
    for (int t = 0; t < kNumBenchTasks; ++t) {
      const bench::TaskReport& task = report.tasks[(size_t)t];
      std::snprintf(line, sizeof(line), "%-26s %6d %8d %8.3f\n",
                    std::string(to_string(kAllBenchTasks[(size_t)t])).c_str(),
                    task.qa_count, task.unique_videos, task.random_accuracy);
      std::cout << line;
    }
    std::snprintf(line, sizeof(line), "%-26s %6d %8d\n", "total",
                  report.total_qa, report.unique_videos);
    std::cout << line;
    std::cout << "emotions";
    for (int e = 0; e < kNumEmotions; ++e) {
      std::cout << " " << to_string(kAllEmotions[(size_t)e]) << "="
                << report.emotion_counts[(size_t)e];
    }
    std::cout << "\n";
    if (report.tvd_vs_source) {
      std::snprintf(line, sizeof(line), "tvd_vs_source %.4f\n",
                    *report.tvd_vs_source);
      std::cout << line;
    }
    if (!a.out.empty()) write_json_atomic(a.out, report.to_json());
  } catch (const std::exception& e) {
    return fail_runtime("stats", e);
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"audiovisual emotion preference-optimization pipeline"};
  app.name("avemdpo");
  app.require_subcommand(1);

  BenchBuildArgs ba;
  CLI::App* bench_cmd = app.add_subcommand(
      "bench-build", "build the MCQA benchmark from a video manifest");
  add_common(bench_cmd, ba.c, true);
  bench_cmd->add_option("--manifest", ba.manifest, "video manifest (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", ba.out, "output directory")->required();
  ba.templates_opt = bench_cmd->add_option("--templates", ba.templates,
                                           "prompt template directory");
  ba.guessers_opt = bench_cmd->add_option(
      "--guessers", ba.guessers, "random text-only guessers for the filter");

  PrefBuildArgs pa;
  CLI::App* pref_cmd = app.add_subcommand(
      "pref-build", "build preference records from prompts and a clip pool");
  add_common(pref_cmd, pa.c, true);
  pref_cmd->add_option("--sources", pa.sources, "preference sources (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  pref_cmd->add_option("--pool", pa.pool, "AV clip pool (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  pref_cmd->add_option("--out", pa.out, "output directory")->required();
  pa.strategy_opt = pref_cmd->add_option(
      "--strategy", pa.strategy,
      "negative sampling: random_tensor, random_video, diffuse, "
      "different_emotion");
  pa.noise_opt = pref_cmd->add_option("--noise-step", pa.noise_step,
                                      "diffusion forward-noise step");
  pa.retries_opt = pref_cmd->add_option("--retries", pa.retries,
                                        "annotator attempts per record");
  pa.templates_opt = pref_cmd->add_option("--templates", pa.templates,
                                          "prompt template directory");

  TrainArgs ta;
  CLI::App* train_cmd =
      app.add_subcommand("train", "run the preference-optimization loop");
  add_common(train_cmd, ta.c, false);
  train_cmd->add_option("--records", ta.records, "preference records (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--pool", ta.pool, "AV clip pool (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd
      ->add_option("--derived", ta.derived, "derived clip store (jsonl)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "output directory")->required();
  train_cmd->add_option("--profile", ta.profile,
                        "base hyperparameters: toy or paper-c3");
  train_cmd->add_option("--resume", ta.resume, "checkpoint to resume from");
  train_cmd->add_option("--ablation", ta.ablation,
                        "objective variant: full, no_pmp, no_erp, no_tpd");
  ta.epochs_opt = train_cmd->add_option("--epochs", ta.epochs, "epochs to run");
  ta.ckpt_opt = train_cmd->add_option("--checkpoint-every", ta.checkpoint_every,
                                      "checkpoint cadence in optimizer steps");

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "score raw model outputs against benchmark items");
  add_common(eval_cmd, ea.c, false);
  eval_cmd->add_option("--items", ea.items, "benchmark items (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd
      ->add_option("--outputs", ea.outputs,
                   "raw outputs (jsonl of {item_id, raw_output})")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ea.out, "output directory")->required();

  AnalyzeArgs na;
  CLI::App* analyze_cmd = app.add_subcommand(
      "analyze", "attention and adversarial-shift analyses of a checkpoint");
  add_common(analyze_cmd, na.c, false);
  analyze_cmd->add_option("--model", na.model, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd
      ->add_option("--baseline", na.baseline,
                   "comparison checkpoint (default: the model's frozen init)")
      ->check(CLI::ExistingFile);
  analyze_cmd
      ->add_option("--items", na.items,
                   "analysis items (jsonl of {id, prompt, answer, av_ref, "
                   "modality})")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--pool", na.pool, "AV clip pool (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", na.out, "output directory")->required();

  StatsArgs sa;
  CLI::App* stats_cmd =
      app.add_subcommand("stats", "print benchmark statistics");
  add_common(stats_cmd, sa.c, false);
  stats_cmd->add_option("--items", sa.items, "benchmark items (jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  stats_cmd
      ->add_option("--manifest", sa.manifest,
                   "source manifest for distribution comparison")
      ->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", sa.out, "also write the report as JSON here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (bench_cmd->parsed()) return run_bench_build(ba);
  if (pref_cmd->parsed()) return run_pref_build(pa);
  if (train_cmd->parsed()) return run_train(ta);
  if (eval_cmd->parsed()) return run_eval(ea);
  if (analyze_cmd->parsed()) return run_analyze(na);
  if (stats_cmd->parsed()) return run_stats(sa);
  std::cerr << "avemdpo: no subcommand\n";
  return 1;
}

}  // namespace avemdpo::cli
