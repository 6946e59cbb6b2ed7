#pragma once

// Experiment orchestration: train or load a model, generate over the
// (seed source x diversity x replicate) grid, then run stylometry and the
// secondary analyses over the outputs. Every artifact is listed in a
// manifest stamped with the config hash.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stylogen/analysis.hpp"
#include "stylogen/cluster.hpp"
#include "stylogen/corpus.hpp"
#include "stylogen/generator.hpp"
#include "stylogen/ngram.hpp"
#include "stylogen/nn/checkpoint.hpp"
#include "stylogen/nn/train.hpp"
#include "stylogen/stylometry.hpp"

namespace stylogen {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig {
  /// conv | gru | lstm | ngram | custom
  std::string family = "conv";
  std::size_t ngram_order = 2;
  double ngram_k = 0.5;
  /// Layer list for family "custom"; softmax units are filled in.
  nlohmann::json layers = nlohmann::json::array();
  /// Existing checkpoint (or ngram JSON) to load instead of training.
  std::string checkpoint;
  nn::TrainHyperparams train;

  nlohmann::json to_json() const {
    return {{"family", family},       {"ngram_order", ngram_order},
            {"ngram_k", ngram_k},     {"layers", layers},
            {"checkpoint", checkpoint}, {"train", train.to_json()}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig m;
    m.family = j.value("family", m.family);
    m.ngram_order = j.value("ngram_order", m.ngram_order);
    m.ngram_k = j.value("ngram_k", m.ngram_k);
    m.layers = j.value("layers", nlohmann::json::array());
    m.checkpoint = j.value("checkpoint", std::string());
    if (j.contains("train")) m.train = nn::TrainHyperparams::from_json(j.at("train"));
    return m;
  }

  nn::ModelSpec spec(std::size_t vocab_size, std::size_t window) const {
    if (family == "conv") return nn::default_conv_spec(vocab_size, window);
    if (family == "gru") return nn::default_recurrent_spec(vocab_size, window, nn::CellType::gru);
    if (family == "lstm") return nn::default_recurrent_spec(vocab_size, window, nn::CellType::lstm);
    if (family == "custom") {
      nn::ModelSpec s{vocab_size, window, {}};
      for (const auto& l : layers) {
        auto ls = nn::LayerSpec::from_json(l);
        if (ls.kind == nn::LayerKind::softmax_output) ls.units = vocab_size;
        s.layers.push_back(ls);
      }
      return s;
    }
    throw InvalidArgument("model family '" + family + "' has no network spec");
  }
};

struct StyloSettings {
  std::size_t mfw = 100;
  DistanceKind distance = DistanceKind::delta;
  Linkage linkage = Linkage::ward;
  std::size_t min_tokens = 200;

  nlohmann::json to_json() const {
    return {{"mfw", mfw},
            {"distance", std::string(to_string(distance))},
            {"linkage", std::string(to_string(linkage))},
            {"min_tokens", min_tokens}};
  }
  static StyloSettings from_json(const nlohmann::json& j) {
    StyloSettings s;
    s.mfw = j.value("mfw", s.mfw);
    s.distance = parse_distance_kind(j.value("distance", std::string("delta")));
    s.linkage = parse_linkage(j.value("linkage", std::string("ward")));
    s.min_tokens = j.value("min_tokens", s.min_tokens);
    return s;
  }
};

struct AnalysisSettings {
  double alpha = 0.5;
  std::size_t sentiment_window = 50;
  std::size_t sentiment_stride = 25;
  std::string lexicon;

  nlohmann::json to_json() const {
    return {{"alpha", alpha},
            {"sentiment_window", sentiment_window},
            {"sentiment_stride", sentiment_stride},
            {"lexicon", lexicon}};
  }
  static AnalysisSettings from_json(const nlohmann::json& j) {
    AnalysisSettings a;
    a.alpha = j.value("alpha", a.alpha);
    a.sentiment_window = j.value("sentiment_window", a.sentiment_window);
    a.sentiment_stride = j.value("sentiment_stride", a.sentiment_stride);
    a.lexicon = j.value("lexicon", std::string());
    return a;
  }
};

/// Character-model training whose checkpoints feed the learning curve.
struct LearningCurveConfig {
  bool enabled = false;
  std::size_t window = 60;
  std::size_t min_count = 1;
  std::size_t length = 600;
  double diversity = 0.5;
  ModelConfig model;

  nlohmann::json to_json() const {
    return {{"enabled", enabled},   {"window", window},
            {"min_count", min_count}, {"length", length},
            {"diversity", diversity}, {"model", model.to_json()}};
  }
  static LearningCurveConfig from_json(const nlohmann::json& j) {
    LearningCurveConfig c;
    c.enabled = j.value("enabled", c.enabled);
    c.window = j.value("window", c.window);
    c.min_count = j.value("min_count", c.min_count);
    c.length = j.value("length", c.length);
    c.diversity = j.value("diversity", c.diversity);
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    return c;
  }
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string corpus;
  std::string external_seeds;
  std::string composed;
  std::string output_dir = "runs/experiment";
  TokenMode token_mode = TokenMode::word;
  /// Context length; 0 selects the mode default.
  std::size_t window = 0;
  std::size_t min_count = 1;
  bool split_punct = false;
  std::size_t augment_copies = 0;
  ShuffleUnit shuffle_unit = ShuffleUnit::sentence;
  ModelConfig model;
  std::vector<double> diversity = {0.5, 1.0, 1.5, 2.0};
  std::vector<std::string> seed_sources = {"self", "external"};
  std::size_t replicates = 3;
  std::size_t length = 1000;
  StyloSettings stylometry;
  AnalysisSettings analysis;
  LearningCurveConfig learning_curve;
  std::uint64_t rng_seed = 0;
  std::size_t workers = 1;

  std::size_t effective_window() const {
    return window == 0 ? default_window(token_mode) : window;
  }

  nlohmann::json to_json() const {
    return {{"name", name},
            {"corpus", corpus},
            {"external_seeds", external_seeds},
            {"composed", composed},
            {"output_dir", output_dir},
            {"token_mode", std::string(to_string(token_mode))},
            {"window", window},
            {"min_count", min_count},
            {"split_punct", split_punct},
            {"augment_copies", augment_copies},
            {"shuffle_unit", shuffle_unit == ShuffleUnit::sentence ? "sentence" : "line"},
            {"model", model.to_json()},
            {"diversity", diversity},
            {"seed_sources", seed_sources},
            {"replicates", replicates},
            {"length", length},
            {"stylometry", stylometry.to_json()},
            {"analysis", analysis.to_json()},
            {"learning_curve", learning_curve.to_json()},
            {"rng_seed", rng_seed},
            {"workers", workers}};
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "name", "corpus", "external_seeds", "composed", "output_dir", "token_mode",
        "window", "min_count", "split_punct", "augment_copies", "shuffle_unit", "model",
        "diversity", "seed_sources", "replicates", "length", "stylometry", "analysis",
        "learning_curve", "rng_seed", "workers"};
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw InvalidArgument("unknown config field '" + k + "'");
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.corpus = j.value("corpus", c.corpus);
    c.external_seeds = j.value("external_seeds", c.external_seeds);
    c.composed = j.value("composed", c.composed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.token_mode = parse_token_mode(j.value("token_mode", std::string("word")));
    c.window = j.value("window", c.window);
    c.min_count = j.value("min_count", c.min_count);
    c.split_punct = j.value("split_punct", c.split_punct);
    c.augment_copies = j.value("augment_copies", c.augment_copies);
    c.shuffle_unit = parse_shuffle_unit(j.value("shuffle_unit", std::string("sentence")));
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    c.diversity = j.value("diversity", c.diversity);
    c.seed_sources = j.value("seed_sources", c.seed_sources);
    c.replicates = j.value("replicates", c.replicates);
    c.length = j.value("length", c.length);
    if (j.contains("stylometry")) c.stylometry = StyloSettings::from_json(j.at("stylometry"));
    if (j.contains("analysis")) c.analysis = AnalysisSettings::from_json(j.at("analysis"));
    if (j.contains("learning_curve"))
      c.learning_curve = LearningCurveConfig::from_json(j.at("learning_curve"));
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.workers = j.value("workers", c.workers);
    return c;
  }

  /// FNV-1a 64 of the canonical (sorted-key, defaults filled in) JSON form.
  /// output_dir and workers do not change results and are left out.
  std::string hash() const {
    auto j = to_json();
    j.erase("output_dir");
    j.erase("workers");
    return hex64(fnv1a64(j.dump()));
  }

  /// Checks field invariants; with `check_paths`, also that inputs exist.
  void validate(bool check_paths = true) const {
    if (diversity.empty()) throw InvalidArgument("diversity grid is empty");
    for (std::size_t i = 0; i < diversity.size(); ++i) {
      if (!(diversity[i] > 0.0) || !std::isfinite(diversity[i]))
        throw InvalidArgument("diversity values must be positive");
      if (i > 0 && !(diversity[i] > diversity[i - 1]))
        throw InvalidArgument("diversity grid must be strictly increasing");
    }
    if (replicates == 0) throw InvalidArgument("replicates must be >= 1");
    if (length == 0) throw InvalidArgument("length must be >= 1");
    if (workers == 0) throw InvalidArgument("workers must be >= 1");
    if (seed_sources.empty()) throw InvalidArgument("no seed sources");
    for (const auto& s : seed_sources)
      if (s != "self" && s != "external")
        throw InvalidArgument("unknown seed source '" + s + "'");
    const bool uses_external =
        std::find(seed_sources.begin(), seed_sources.end(), "external") != seed_sources.end();
    if (!check_paths) return;
    auto need = [](const std::string& p, const char* what) {
      if (p.empty()) throw InvalidArgument(std::string(what) + " path is not set");
      if (!fs::exists(p)) throw InvalidArgument(std::string(what) + " not found: " + p);
    };
    need(corpus, "corpus");
    if (uses_external) need(external_seeds, "external seed corpus");
    if (!composed.empty()) need(composed, "composed texts");
    if (!model.checkpoint.empty()) need(model.checkpoint, "checkpoint");
    if (!analysis.lexicon.empty()) need(analysis.lexicon, "lexicon");
  }
};

/// Relative paths in a config file are taken relative to the file.
inline ExperimentConfig load_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  auto c = ExperimentConfig::from_json(j);
  const auto base = path.parent_path();
  auto fix = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  fix(c.corpus);
  fix(c.external_seeds);
  fix(c.composed);
  fix(c.output_dir);
  fix(c.model.checkpoint);
  fix(c.analysis.lexicon);
  return c;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestFile {
  std::string path;  // relative to the output directory
  std::string kind;
  std::string hash;
  nlohmann::json labels = nlohmann::json::object();
};

struct CellResult {
  std::size_t index = 0;
  std::string source;
  double diversity = 0.0;
  std::size_t replicate = 0;
  std::uint64_t rng_seed = 0;
  std::string status = "pending";
  std::string error;
  std::string file;

  std::string label() const {
    return (source == "self" ? std::string("self") : std::string("ext")) + "_D" +
           detail::short_num(diversity) + "_r" + std::to_string(replicate + 1);
  }
  std::string condition() const {
    return (source == "self" ? std::string("self") : std::string("ext")) + "_D" +
           detail::short_num(diversity);
  }
};

struct Manifest {
  std::string config_hash;
  nlohmann::json config;
  std::string created_at;
  std::string model_id;
  std::vector<ManifestFile> files;
  std::vector<CellResult> cells;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const {
    if (!errors.empty()) return false;
    for (const auto& c : cells)
      if (c.status != "ok") return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json fj = nlohmann::json::array();
    for (const auto& f : files)
      fj.push_back({{"path", f.path}, {"kind", f.kind}, {"hash", f.hash}, {"labels", f.labels}});
    nlohmann::json cj = nlohmann::json::array();
    for (const auto& c : cells)
      cj.push_back({{"index", c.index},
                    {"source", c.source},
                    {"diversity", c.diversity},
                    {"replicate", c.replicate},
                    {"rng_seed", c.rng_seed},
                    {"status", c.status},
                    {"error", c.error},
                    {"file", c.file}});
    return {{"config_hash", config_hash}, {"config", config},   {"created_at", created_at},
            {"model_id", model_id},       {"files", fj},        {"cells", cj},
            {"errors", errors},           {"warnings", warnings}, {"ok", ok()}};
  }

  static Manifest from_json(const nlohmann::json& j) {
    Manifest m;
    m.config_hash = j.at("config_hash");
    m.config = j.at("config");
    m.created_at = j.value("created_at", std::string());
    m.model_id = j.value("model_id", std::string());
    for (const auto& f : j.at("files"))
      m.files.push_back({f.at("path"), f.at("kind"), f.at("hash"), f.value("labels", nlohmann::json::object())});
    for (const auto& c : j.at("cells")) {
      CellResult r;
      r.index = c.at("index");
      r.source = c.at("source");
      r.diversity = c.at("diversity");
      r.replicate = c.at("replicate");
      r.rng_seed = c.at("rng_seed");
      r.status = c.at("status");
      r.error = c.value("error", std::string());
      r.file = c.value("file", std::string());
      m.cells.push_back(std::move(r));
    }
    m.errors = j.value("errors", std::vector<std::string>{});
    m.warnings = j.value("warnings", std::vector<std::string>{});
    return m;
  }

  static constexpr const char* kFileName = "manifest.json";

  void save(const fs::path& dir) const {
    std::ofstream out(dir / kFileName, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write manifest in " + dir.string());
    out << to_json().dump(2) << "\n";
  }
  static Manifest load(const fs::path& dir) {
    return from_json(nlohmann::json::parse(read_text_file(dir / kFileName)));
  }

  /// Writes `content` under the output directory and records it. An
  /// existing entry with the same path is replaced.
  void write_file(const fs::path& dir, const std::string& rel, const std::string& content,
                  const std::string& kind, nlohmann::json labels = nlohmann::json::object()) {
    const auto full = dir / rel;
    fs::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + full.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    ManifestFile f{rel, kind, hex64(fnv1a64(content)), std::move(labels)};
    for (auto& e : files)
      if (e.path == rel) {
        e = std::move(f);
        return;
      }
    files.push_back(std::move(f));
  }
};

inline std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Model preparation

struct PreparedModel {
  Vocabulary vocab;
  std::vector<Document> corpus;
  std::shared_ptr<const NextTokenModel> model;
  std::vector<nn::Checkpoint> checkpoints;
  std::optional<NgramModel> ngram;
};

/// Loads the corpus, builds the vocabulary and windows (with optional
/// shuffle augmentation) and either loads or trains the model.
inline PreparedModel prepare_model(const std::string& corpus_path, TokenMode mode,
                                   std::size_t window, std::size_t min_count,
                                   bool split_punct, std::size_t augment_copies,
                                   ShuffleUnit unit, const ModelConfig& mc,
                                   std::uint64_t rng_seed,
                                   const nn::CheckpointCallback& on_checkpoint = {}) {
  PreparedModel pm;
  pm.corpus = load_documents(corpus_path, mode, split_punct);

  if (!mc.checkpoint.empty()) {
    if (mc.family == "ngram") {
      const auto j = nlohmann::json::parse(read_text_file(mc.checkpoint));
      auto v = NgramModel::vocabulary_from_json(j);
      if (!v) throw FormatError("ngram model file carries no vocabulary");
      pm.vocab = *v;
      pm.ngram = NgramModel::from_json(j);
      pm.model = std::make_shared<NgramModel>(*pm.ngram);
    } else {
      auto ck = nn::Checkpoint::load(mc.checkpoint);
      pm.vocab = ck.vocab;
      pm.model = std::make_shared<nn::NeuralModel>(ck);
      pm.checkpoints.push_back(std::move(ck));
    }
    if (pm.vocab.mode() != mode)
      throw InvalidArgument("loaded model token mode does not match the config");
    if (pm.model->window() != window)
      throw InvalidArgument("loaded model window does not match the config");
    return pm;
  }

  std::vector<Document> training = pm.corpus;
  if (augment_copies > 0) {
    for (std::size_t i = 0; i < pm.corpus.size(); ++i) {
      auto extra = shuffle_augment(pm.corpus[i], augment_copies, unit,
                                   derive_seed(rng_seed, 0xA000 + i), mode, split_punct);
      training.insert(training.end(), extra.begin(), extra.end());
    }
  }
  pm.vocab = build_vocabulary(training, mode, min_count);
  const auto windows = windowize(training, pm.vocab, window);
  if (mc.family == "ngram") {
    pm.ngram = NgramModel::fit(windows, mc.ngram_order, mc.ngram_k, pm.vocab.size());
    pm.model = std::make_shared<NgramModel>(*pm.ngram);
    return pm;
  }
  auto h = mc.train;
  const auto spec = mc.spec(pm.vocab.size(), window);
  pm.checkpoints = nn::train(spec, pm.vocab, windows, h, on_checkpoint);
  pm.model = std::make_shared<nn::NeuralModel>(pm.checkpoints.back());
  return pm;
}

inline std::string checkpoint_name(const nn::Checkpoint& ck) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoints/e%03zu_s%07zu.ckpt", ck.meta.epoch, ck.meta.step);
  return buf;
}

inline std::string training_log_csv(std::span<const nn::Checkpoint> cks) {
  std::string out = "epoch,step,windows_seen,train_loss,test_loss,test_accuracy\n";
  for (const auto& c : cks)
    out += std::to_string(c.meta.epoch) + "," + std::to_string(c.meta.step) + "," +
           std::to_string(c.meta.windows_seen) + "," + format_double(c.meta.train_loss) + "," +
           format_double(c.meta.test_loss) + "," + format_double(c.meta.test_accuracy) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Grid

struct GridResult {
  Manifest manifest;
  PreparedModel model;
  std::vector<GenerationRecord> records;  // by cell index; failed cells empty
};

/// Enumerates (source x diversity x replicate) in that nesting order; cell i
/// uses rng_seed + i.
inline std::vector<CellResult> grid_cells(const ExperimentConfig& c) {
  std::vector<CellResult> cells;
  for (const auto& src : c.seed_sources)
    for (double d : c.diversity)
      for (std::size_t r = 0; r < c.replicates; ++r) {
        CellResult cell;
        cell.index = cells.size();
        cell.source = src;
        cell.diversity = d;
        cell.replicate = r;
        cell.rng_seed = c.rng_seed + cell.index;
        cells.push_back(std::move(cell));
      }
  return cells;
}

/// Runs every grid cell, writing one text file per cell, a JSONL of all
/// generation records, the model artifacts and the manifest.
inline GridResult run_grid(const ExperimentConfig& config) {
  config.validate();
  GridResult res;
  auto& man = res.manifest;
  man.config = config.to_json();
  man.config_hash = config.hash();
  man.created_at = utc_timestamp();
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  WarningCollector warnings;

  const std::size_t n = config.effective_window();
  try {
    res.model = prepare_model(config.corpus, config.token_mode, n, config.min_count,
                              config.split_punct, config.augment_copies, config.shuffle_unit,
                              config.model, config.rng_seed);
  } catch (const std::exception& e) {
    man.errors.push_back(std::string("model preparation failed: ") + e.what());
    man.warnings = warnings.messages;
    man.save(out);
    return res;
  }
  man.model_id = res.model.model->model_id();
  const nlohmann::json model_labels = {{"config_hash", man.config_hash}};
  if (res.model.ngram) {
    man.write_file(out, "model/ngram.json", res.model.ngram->to_json(&res.model.vocab).dump(),
                   "model", model_labels);
  } else if (config.model.checkpoint.empty()) {
    for (const auto& ck : res.model.checkpoints)
      man.write_file(out, checkpoint_name(ck), ck.serialize(), "checkpoint",
                     {{"config_hash", man.config_hash},
                      {"epoch", ck.meta.epoch},
                      {"step", ck.meta.step}});
    man.write_file(out, "training_log.csv", training_log_csv(res.model.checkpoints),
                   "training_log", model_labels);
  }
  man.write_file(out, "model/vocabulary.tsv", res.model.vocab.serialize(), "vocabulary",
                 model_labels);

  std::vector<Document> external;
  const bool uses_external = std::find(config.seed_sources.begin(), config.seed_sources.end(),
                                       "external") != config.seed_sources.end();
  if (uses_external) external = load_documents(config.external_seeds, config.token_mode,
                                               config.split_punct);

  man.cells = grid_cells(config);
  res.records.assign(man.cells.size(), {});
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= man.cells.size()) return;
      auto& cell = man.cells[i];
      try {
        GenerationConfig g;
        g.diversity = cell.diversity;
        g.length = config.length;
        g.rng_seed = cell.rng_seed;
        std::span<const Document> pool = res.model.corpus;
        if (cell.source == "external") pool = external;
        // Seeds are drawn from the pool documents directly so both sources
        // share the same span-selection rule.
        g.seed = SelfSeed{};
        res.records[i] = generate(*res.model.model, res.model.vocab, g, pool);
        res.records[i].config.seed =
            cell.source == "self" ? SeedSource{SelfSeed{}}
                                  : SeedSource{ExternalSeed{"", config.external_seeds}};
        cell.status = "ok";
      } catch (const std::exception& e) {
        cell.status = "failed";
        cell.error = e.what();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::min(config.workers, man.cells.size()); ++t)
    threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::string jsonl;
  for (auto& cell : man.cells) {
    if (cell.status != "ok") continue;
    const auto& rec = res.records[cell.index];
    cell.file = "generations/" + cell.label() + ".txt";
    man.write_file(out, cell.file, rec.text + "\n", "generation",
                   {{"config_hash", man.config_hash},
                    {"source", cell.source},
                    {"diversity", cell.diversity},
                    {"replicate", cell.replicate},
                    {"condition", cell.condition()},
                    {"label", cell.label()},
                    {"oov_substitutions", rec.oov_substitutions}});
    auto j = rec.to_json();
    j["label"] = cell.label();
    j["config_hash"] = man.config_hash;
    jsonl += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  }
  man.write_file(out, "generations.jsonl", jsonl, "generation_records",
                 {{"config_hash", man.config_hash}});
  man.warnings = warnings.messages;
  man.save(out);
  return res;
}

// ---------------------------------------------------------------------------
// Cluster report

struct BaselineDistance {
  double diversity = 0.0;
  double centroid = 0.0;   // mean distance from the condition centroid to baseline texts
  double pairwise = 0.0;   // mean pairwise distance to baseline texts (self pairs excluded)
};

struct SeedingSeparation {
  double diversity = 0.0;
  double within = 0.0;
  double between = 0.0;
  bool separated() const { return between > within; }
};

struct ClusterReport {
  FeatureMatrix features;
  DistanceMatrix distances;
  Dendrogram dendrogram;
  DistanceMatrix cophenetic_distances;
  std::vector<std::string> excluded;

  double mean_within_condition = 0.0;
  double mean_between_condition = 0.0;
  std::vector<BaselineDistance> baseline;
  bool baseline_monotone = false;
  std::vector<SeedingSeparation> seeding;
  bool seeding_separated = false;

  bool composed_subtree = false;
  double composed_min_to_generated = 0.0;
  double generated_max_within = 0.0;
  bool composed_separated = false;

  nlohmann::json summary() const {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& x : baseline)
      b.push_back({{"diversity", x.diversity}, {"centroid", x.centroid}, {"pairwise", x.pairwise}});
    nlohmann::json s = nlohmann::json::array();
    for (const auto& x : seeding)
      s.push_back({{"diversity", x.diversity},
                   {"within", x.within},
                   {"between", x.between},
                   {"separated", x.separated()}});
    return {{"documents", distances.doc_ids},
            {"retained_features", distances.retained_features},
            {"excluded", excluded},
            {"mean_within_condition", mean_within_condition},
            {"mean_between_condition", mean_between_condition},
            {"distance_to_baseline", b},
            {"baseline_monotone", baseline_monotone},
            {"seeding", s},
            {"seeding_separated", seeding_separated},
            {"composed_subtree", composed_subtree},
            {"composed_min_to_generated", composed_min_to_generated},
            {"generated_max_within", generated_max_within},
            {"composed_separated", composed_separated}};
  }
};

struct LabelledText {
  TextSample sample;
  /// Condition label ("self_D0.5"); empty for composed texts.
  std::string condition;
  std::string source;
  double diversity = 0.0;
  bool composed = false;
};

/// Stylometry over generated plus composed texts with the summary
/// statistics used to read the cluster diagram.
inline ClusterReport cluster_report(std::vector<LabelledText> texts,
                                    const StyloSettings& settings) {
  ClusterReport rep;
  std::vector<LabelledText> kept;
  for (auto& t : texts) {
    if (t.sample.words.size() < settings.min_tokens) {
      warn("excluding '" + t.sample.id + "': " + std::to_string(t.sample.words.size()) +
           " words < minimum " + std::to_string(settings.min_tokens));
      rep.excluded.push_back(t.sample.id);
      continue;
    }
    kept.push_back(std::move(t));
  }
  std::vector<TextSample> samples;
  for (const auto& t : kept) samples.push_back(t.sample);
  rep.features = feature_matrix(samples, settings.mfw);
  const auto z = zscore(rep.features);
  auto dist = [&](std::span<const double> a, std::span<const double> b) {
    return settings.distance == DistanceKind::delta ? delta_distance(a, b)
                                                    : cosine_distance(a, b);
  };
  rep.distances = distance(rep.features, settings.distance);
  rep.dendrogram = agglomerate(rep.distances, settings.linkage);
  rep.cophenetic_distances = cophenetic(rep.dendrogram);
  const std::size_t N = kept.size();
  const auto& D = rep.distances;

  double within = 0.0, between = 0.0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) {
      if (kept[i].composed || kept[j].composed) continue;
      if (kept[i].condition == kept[j].condition) {
        within += D.at(i, j);
        ++nw;
      } else {
        between += D.at(i, j);
        ++nb;
      }
    }
  rep.mean_within_condition = nw ? within / static_cast<double>(nw) : 0.0;
  rep.mean_between_condition = nb ? between / static_cast<double>(nb) : 0.0;

  std::set<double> grid;
  for (const auto& t : kept)
    if (!t.composed) grid.insert(t.diversity);

  // Distance to the self-seeded baseline (lowest diversity).
  std::vector<std::size_t> base;
  if (!grid.empty())
    for (std::size_t i = 0; i < N; ++i)
      if (!kept[i].composed && kept[i].source == "self" && kept[i].diversity == *grid.begin())
        base.push_back(i);
  if (!base.empty()) {
    for (double d : grid) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < N; ++i)
        if (!kept[i].composed && kept[i].source == "self" && kept[i].diversity == d)
          members.push_back(i);
      if (members.empty()) continue;
      std::vector<double> centroid(z.words.size(), 0.0);
      for (auto m : members)
        for (std::size_t k = 0; k < centroid.size(); ++k) centroid[k] += z.z[m][k];
      for (auto& v : centroid) v /= static_cast<double>(members.size());
      BaselineDistance bd;
      bd.diversity = d;
      for (auto b : base) bd.centroid += dist(centroid, z.z[b]);
      bd.centroid /= static_cast<double>(base.size());
      std::size_t np = 0;
      for (auto m : members)
        for (auto b : base) {
          if (m == b) continue;
          bd.pairwise += D.at(m, b);
          ++np;
        }
      bd.pairwise = np ? bd.pairwise / static_cast<double>(np) : 0.0;
      rep.baseline.push_back(bd);
    }
    rep.baseline_monotone = rep.baseline.size() >= 2;
    for (std::size_t i = 1; i < rep.baseline.size(); ++i)
      if (!(rep.baseline[i].centroid > rep.baseline[i - 1].centroid))
        rep.baseline_monotone = false;
    if (!rep.baseline_monotone)
      warn("distance to the self-seeded baseline is not monotone in diversity");
  }

  // Seeding: external vs self at each diversity.
  rep.seeding_separated = true;
  for (double d : grid) {
    std::vector<std::size_t> self, ext;
    for (std::size_t i = 0; i < N; ++i) {
      if (kept[i].composed || kept[i].diversity != d) continue;
      (kept[i].source == "self" ? self : ext).push_back(i);
    }
    if (self.empty() || ext.empty()) continue;
    SeedingSeparation s;
    s.diversity = d;
    std::size_t nwp = 0, nbp = 0;
    for (const auto* group : {&self, &ext})
      for (std::size_t a = 0; a < group->size(); ++a)
        for (std::size_t b = a + 1; b < group->size(); ++b) {
          s.within += D.at((*group)[a], (*group)[b]);
          ++nwp;
        }
    for (auto a : self)
      for (auto b : ext) {
        s.between += D.at(a, b);
        ++nbp;
      }
    s.within = nwp ? s.within / static_cast<double>(nwp) : 0.0;
    s.between /= static_cast<double>(nbp);
    if (nwp == 0 || !s.separated()) rep.seeding_separated = false;
    rep.seeding.push_back(s);
  }
  if (rep.seeding.empty()) rep.seeding_separated = false;

  // Composed texts against the generated ones.
  std::set<std::size_t> composed;
  for (std::size_t i = 0; i < N; ++i)
    if (kept[i].composed) composed.insert(i);
  if (!composed.empty() && composed.size() < N) {
    const auto& dg = rep.dendrogram;
    for (std::size_t k = 0; k < dg.nodes.size(); ++k) {
      const auto leaves = dg.leaves_under(k);
      if (std::set<std::size_t>(leaves.begin(), leaves.end()) == composed) {
        rep.composed_subtree = true;
        break;
      }
    }
    const auto& C = rep.cophenetic_distances;
    rep.composed_min_to_generated = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        if (i == j) continue;
        const bool ci = composed.count(i), cj = composed.count(j);
        if (ci && !cj) rep.composed_min_to_generated = std::min(rep.composed_min_to_generated, C.at(i, j));
        if (!ci && !cj) rep.generated_max_within = std::max(rep.generated_max_within, C.at(i, j));
      }
    rep.composed_separated =
        rep.composed_subtree && rep.composed_min_to_generated > rep.generated_max_within;
  }
  return rep;
}

/// Generated texts listed in a manifest plus the composed documents.
inline std::vector<LabelledText> report_inputs(const Manifest& man, const fs::path& out,
                                               std::span<const Document> composed) {
  std::vector<LabelledText> texts;
  for (const auto& f : man.files) {
    if (f.kind != "generation") continue;
    LabelledText t;
    t.sample = TextSample::from_text(f.labels.at("label").get<std::string>(),
                                     read_text_file(out / f.path));
    t.condition = f.labels.at("condition");
    t.source = f.labels.at("source");
    t.diversity = f.labels.at("diversity");
    texts.push_back(std::move(t));
  }
  for (const auto& d : composed) {
    LabelledText t;
    t.sample = TextSample::from_text("composed_" + d.id, d.raw);
    t.composed = true;
    texts.push_back(std::move(t));
  }
  return texts;
}

/// Runs cluster_report on a finished grid and writes its artifacts.
inline ClusterReport write_cluster_report(Manifest& man, const fs::path& out,
                                          std::span<const Document> composed,
                                          const StyloSettings& settings) {
  WarningCollector warnings;
  auto rep = cluster_report(report_inputs(man, out, composed), settings);
  const nlohmann::json labels = {{"config_hash", man.config_hash}};
  man.write_file(out, "stylometry/features.csv", rep.features.to_csv(), "features", labels);
  man.write_file(out, "stylometry/distances.csv", rep.distances.to_csv(), "distances", labels);
  man.write_file(out, "stylometry/cophenetic.csv", rep.cophenetic_distances.to_csv(),
                 "cophenetic", labels);
  man.write_file(out, "stylometry/dendrogram.nwk", to_newick(rep.dendrogram) + "\n",
                 "dendrogram", labels);
  man.write_file(out, "stylometry/dendrogram.svg",
                 to_svg(rep.dendrogram, settings.distance == DistanceKind::delta
                                            ? "Burrows' Delta"
                                            : "Cosine Delta"),
                 "dendrogram", labels);
  man.write_file(out, "stylometry/dendrogram.txt", to_text(rep.dendrogram), "dendrogram",
                 labels);
  man.write_file(out, "stylometry/summary.json", rep.summary().dump(2) + "\n", "cluster_summary",
                 labels);
  for (const auto& w : warnings.messages) man.warnings.push_back(w);
  return rep;
}

// ---------------------------------------------------------------------------
// Learning curve

struct LearningCurveRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double wordness = 0.0;
  std::string top5;
  std::string argmax_top5;
  std::string sample;
  std::string argmax_sample;
};

/// The k most frequent characters (ties by byte value); spaces are written
/// as "space".
inline std::vector<std::string> top_chars(std::string_view text, std::size_t k) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : tokenize_chars(text)) ++counts[c];
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, v.size()); ++i)
    out.push_back(v[i].first == " " ? "space" : v[i].first);
  return out;
}

inline std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

/// Diversity used for the near-argmax generation column.
inline constexpr double kArgmaxDiversity = 1e-6;

/// Per checkpoint: losses, wordness of a fixed-seed generation at
/// `diversity`, and the top-5 characters of that output and of a near-argmax
/// generation from the same seed.
inline std::vector<LearningCurveRow> learning_curve(std::span<const nn::Checkpoint> checkpoints,
                                                    const WordSet& words,
                                                    const std::vector<std::string>& seed,
                                                    double diversity, std::size_t length,
                                                    std::uint64_t rng_seed) {
  if (checkpoints.size() < 2) throw InvalidArgument("learning curve needs >= 2 checkpoints");
  std::vector<LearningCurveRow> rows;
  for (const auto& ck : checkpoints) {
    if (ck.vocab.mode() != TokenMode::character)
      throw InvalidArgument("learning curve expects character-model checkpoints");
    nn::NeuralModel model(ck);
    GenerationConfig g;
    g.length = length;
    g.rng_seed = rng_seed;
    g.seed = ExplicitSeed{seed};
    g.diversity = diversity;
    const auto rec = generate(model, ck.vocab, g);
    g.diversity = kArgmaxDiversity;
    const auto arg = generate(model, ck.vocab, g);
    LearningCurveRow r;
    r.epoch = ck.meta.epoch;
    r.step = ck.meta.step;
    r.train_loss = ck.meta.train_loss;
    r.test_loss = ck.meta.test_loss;
    r.test_accuracy = ck.meta.test_accuracy;
    r.wordness = wordness(rec.text, words);
    r.top5 = join(top_chars(rec.text, 5), " ");
    r.argmax_top5 = join(top_chars(arg.text, 5), " ");
    r.sample = rec.text;
    r.argmax_sample = arg.text;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string learning_curve_csv(std::span<const LearningCurveRow> rows) {
  std::string out = "epoch,step,train_loss,test_loss,test_accuracy,wordness,top5,argmax_top5\n";
  for (const auto& r : rows)
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
           format_double(r.train_loss) + "," + format_double(r.test_loss) + "," +
           format_double(r.test_accuracy) + "," + format_double(r.wordness) + "," +
           csv_escape(r.top5) + "," + csv_escape(r.argmax_top5) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Full pipeline

/// run_grid, then the cluster report, preference and sentiment analyses and
/// the optional character learning curve. The manifest is rewritten after
/// each stage so partial results stay listed.
inline Manifest run_experiment(const ExperimentConfig& config) {
  auto grid = run_grid(config);
  auto& man = grid.manifest;
  const fs::path out = config.output_dir;
  if (!man.errors.empty()) return man;

  auto stage = [&](const char* name, auto&& fn) {
    WarningCollector warnings;
    try {
      fn();
    } catch (const std::exception& e) {
      man.errors.push_back(std::string(name) + ": " + e.what());
    }
    for (const auto& w : warnings.messages) man.warnings.push_back(w);
    man.save(out);
  };

  std::vector<Document> composed;
  if (!config.composed.empty())
    composed = load_documents(config.composed, TokenMode::word, false);

  stage("cluster report", [&] {
    if (composed.empty()) throw InvalidArgument("no composed texts configured");
    write_cluster_report(man, out, composed, config.stylometry);
  });

  stage("preference", [&] {
    std::vector<TextSample> self, ext, seeds;
    for (const auto& f : man.files) {
      if (f.kind != "generation") continue;
      auto s = TextSample::from_text(f.labels.at("label"), read_text_file(out / f.path));
      (f.labels.at("source") == "self" ? self : ext).push_back(std::move(s));
    }
    if (self.empty() || ext.empty()) return;
    for (const auto& d : load_documents(config.external_seeds, TokenMode::word, false))
      seeds.push_back(TextSample::from_text(d.id, d.raw));
    const auto rep = preference(ext, self, seeds, config.analysis.alpha);
    man.write_file(out, "analysis/preference_external_vs_self.csv", rep.to_csv(), "preference",
                   {{"config_hash", man.config_hash}, {"a", "external"}, {"b", "self"}});
  });

  stage("sentiment", [&] {
    if (config.analysis.lexicon.empty()) return;
    const auto lex = load_lexicon(config.analysis.lexicon);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : man.files) {
      if (f.kind != "generation") continue;
      const auto tr = sentiment_trace(read_text_file(out / f.path), lex,
                                      config.analysis.sentiment_window,
                                      config.analysis.sentiment_stride);
      j[f.labels.at("label").get<std::string>()] = tr.to_json();
    }
    man.write_file(out, "analysis/sentiment.json", j.dump(2) + "\n", "sentiment",
                   {{"config_hash", man.config_hash}});
  });

  if (config.learning_curve.enabled) {
    stage("learning curve", [&] {
      const auto& lc = config.learning_curve;
      auto pm = prepare_model(config.corpus, TokenMode::character, lc.window, lc.min_count,
                              false, 0, ShuffleUnit::sentence, lc.model,
                              derive_seed(config.rng_seed, 0xC4A2));
      if (pm.checkpoints.size() < 2)
        throw InvalidArgument("learning curve needs a trained character model");
      for (const auto& ck : pm.checkpoints)
        man.write_file(out, "char_model/" + checkpoint_name(ck), ck.serialize(), "checkpoint",
                       {{"config_hash", man.config_hash},
                        {"epoch", ck.meta.epoch},
                        {"step", ck.meta.step},
                        {"mode", "character"}});
      Rng rng(derive_seed(config.rng_seed, 0x5EED));
      const auto seed = select_seed(std::span<const Document>(pm.corpus), lc.window, rng);
      const auto word_docs = load_documents(config.corpus, TokenMode::word, false);
      const auto words = word_set(build_vocabulary(word_docs, TokenMode::word, 1));
      const auto rows = learning_curve(pm.checkpoints, words, seed, lc.diversity, lc.length,
                                       derive_seed(config.rng_seed, 0x5A3F));
      man.write_file(out, "analysis/learning_curve.csv", learning_curve_csv(rows),
                     "learning_curve", {{"config_hash", man.config_hash}});
      nlohmann::json samples = nlohmann::json::array();
      for (const auto& r : rows)
        samples.push_back({{"epoch", r.epoch},
                           {"step", r.step},
                           {"sample", r.sample},
                           {"argmax_sample", r.argmax_sample}});
      man.write_file(out, "analysis/learning_curve_samples.json",
                     samples.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n",
                     "learning_curve_samples", {{"config_hash", man.config_hash}});
    });
  }
  man.save(out);
  return man;
}

}  // namespace stylogen
