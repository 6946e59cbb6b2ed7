// stylogen command-line interface.
//
//   stylogen train      --corpus DIR --out DIR [--mode word|char] [--model conv|gru|lstm|ngram]
//   stylogen generate   --checkpoint F [--seed-file X | --corpus DIR] --diversity D --length N --rng S
//   stylogen stylo cluster [--mfw 100] [--distance delta] [--linkage ward] [--out tree.svg] PATH...
//   stylogen analyze prefs|sentiment|wordness ...
//   stylogen experiment --config FILE

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "stylogen/stylogen.hpp"

namespace sg = stylogen;
namespace fs = std::filesystem;

namespace {

void write_or_print(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sg::InvalidArgument("cannot write " + path);
  out << content;
}

std::vector<sg::TextSample> load_samples(const std::vector<std::string>& paths) {
  std::vector<sg::TextSample> out;
  for (const auto& p : paths)
    for (const auto& d : sg::load_documents(p))
      out.push_back(sg::TextSample::from_text(d.id, d.raw));
  return out;
}

struct LoadedModel {
  std::unique_ptr<sg::NextTokenModel> model;
  sg::Vocabulary vocab;
};

// Checkpoints start with the binary magic; anything else is read as an
// n-gram JSON model.
LoadedModel load_model(const std::string& path) {
  const auto bytes = sg::read_text_file(path);
  LoadedModel m;
  if (bytes.rfind("SGCK", 0) == 0) {
    auto ck = sg::nn::Checkpoint::parse(bytes);
    m.vocab = ck.vocab;
    m.model = std::make_unique<sg::nn::NeuralModel>(ck);
  } else {
    const auto j = nlohmann::json::parse(bytes);
    auto v = sg::NgramModel::vocabulary_from_json(j);
    if (!v) throw sg::FormatError(path + ": n-gram model carries no vocabulary");
    m.vocab = *v;
    m.model = std::make_unique<sg::NgramModel>(sg::NgramModel::from_json(j));
  }
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train next-token text models, generate seeded text and measure its style"};
  app.require_subcommand(1);

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  std::string t_corpus, t_out, t_mode = "word", t_family = "conv", t_unit = "sentence",
                           t_config;
  std::size_t t_window = 0, t_min_count = 1, t_augment = 0, t_order = 2;
  double t_k = 0.5;
  sg::nn::TrainHyperparams hp;
  train->add_option("--corpus", t_corpus, "Corpus file or directory of .txt files")->required();
  train->add_option("--out", t_out, "Output directory")->required();
  train->add_option("--mode", t_mode, "Token mode")->check(CLI::IsMember({"word", "char"}));
  train->add_option("--window", t_window, "Context length (default 30 words / 60 chars)");
  train->add_option("--min-count", t_min_count, "Minimum token count for the vocabulary");
  train->add_option("--model", t_family, "Model family")
      ->check(CLI::IsMember({"conv", "gru", "lstm", "ngram"}));
  train->add_option("--order", t_order, "n-gram order");
  train->add_option("--k", t_k, "n-gram add-k smoothing");
  train->add_option("--augment", t_augment, "Shuffled copies per document");
  train->add_option("--shuffle-unit", t_unit, "Shuffle unit")
      ->check(CLI::IsMember({"sentence", "line"}));
  train->add_option("--epochs", hp.epochs);
  train->add_option("--batch", hp.batch_size);
  train->add_option("--lr", hp.lr);
  train->add_option("--test-fraction", hp.test_fraction);
  train->add_option("--checkpoint-every", hp.checkpoint_every);
  train->add_option("--checkpoint-steps", hp.checkpoint_steps);
  train->add_option("--max-windows", hp.max_windows_per_epoch, "Cap on windows per epoch");
  train->add_option("--rng", hp.rng_seed);
  train->add_option("--config", t_config, "JSON file of training hyperparameters");

  // generate ---------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Generate text from a trained model");
  std::string g_ckpt, g_seed_file, g_corpus, g_out;
  double g_div = 1.0;
  std::size_t g_len = 1000;
  std::uint64_t g_rng = 0;
  gen->add_option("--checkpoint", g_ckpt, "Checkpoint or n-gram JSON")->required();
  gen->add_option("--diversity", g_div, "Sampling diversity D > 0");
  gen->add_option("--length", g_len, "Tokens to emit");
  gen->add_option("--seed-file", g_seed_file, "External seed text");
  gen->add_option("--corpus", g_corpus, "Training corpus for self seeding");
  gen->add_option("--rng", g_rng, "Random seed");
  gen->add_option("--out", g_out, "Append the generation record to this JSONL file");

  // stylo ------------------------------------------------------------------
  auto* stylo = app.add_subcommand("stylo", "Stylometry");
  stylo->require_subcommand(1);
  auto* cluster = stylo->add_subcommand("cluster", "Delta distances and a dendrogram");
  std::vector<std::string> c_paths;
  std::size_t c_mfw = 100;
  std::string c_distance = "delta", c_linkage = "ward", c_out, c_csv, c_features;
  cluster->add_option("--mfw", c_mfw, "Most frequent words");
  cluster->add_option("--distance", c_distance)->check(CLI::IsMember({"delta", "cosine"}));
  cluster->add_option("--linkage", c_linkage)
      ->check(CLI::IsMember({"ward", "complete", "average", "single"}));
  cluster->add_option("--out", c_out, "Dendrogram file (.svg, .nwk or .txt); stdout text if unset");
  cluster->add_option("--csv", c_csv, "Write the distance matrix here");
  cluster->add_option("--features", c_features, "Write the feature matrix here");
  cluster->add_option("paths", c_paths, "Text files or directories")->required();

  // analyze ----------------------------------------------------------------
  auto* analyze = app.add_subcommand("analyze", "Preference, sentiment and wordness analyses");
  analyze->require_subcommand(1);
  auto* prefs = analyze->add_subcommand("prefs", "Word preference of set A over set B");
  std::vector<std::string> p_a, p_b, p_seeds;
  double p_alpha = 0.5;
  std::string p_out;
  std::size_t p_top = 0;
  prefs->add_option("--a", p_a, "Set A files or directories")->required();
  prefs->add_option("--b", p_b, "Set B files or directories")->required();
  prefs->add_option("--seeds", p_seeds, "Seed texts used for the in_seed flag");
  prefs->add_option("--alpha", p_alpha, "Smoothing");
  prefs->add_option("--top", p_top, "Print only the top N preferred and avoided words");
  prefs->add_option("--out", p_out, "CSV output (stdout if unset)");

  auto* senti = analyze->add_subcommand("sentiment", "Windowed lexicon sentiment and flux");
  std::string s_lex;
  std::size_t s_w = 50, s_s = 25;
  std::vector<std::string> s_paths;
  senti->add_option("--lexicon", s_lex, "word<TAB>value file")->required();
  senti->add_option("--window", s_w);
  senti->add_option("--stride", s_s);
  senti->add_option("paths", s_paths)->required();

  auto* wordn = analyze->add_subcommand("wordness", "Fraction of chunks that are known words");
  std::string w_corpus, w_vocab;
  std::vector<std::string> w_paths;
  wordn->add_option("--corpus", w_corpus, "Word corpus defining the vocabulary");
  wordn->add_option("--vocab", w_vocab, "Vocabulary TSV (token<TAB>count)");
  wordn->add_option("paths", w_paths)->required();

  // experiment -------------------------------------------------------------
  auto* exp = app.add_subcommand("experiment", "Run the full generation and assessment grid");
  std::string e_config, e_out;
  std::optional<std::uint64_t> e_rng;
  std::optional<std::size_t> e_workers, e_reps, e_len;
  exp->add_option("--config", e_config, "Experiment JSON")->required();
  exp->add_option("--out", e_out, "Override output_dir");
  exp->add_option("--rng", e_rng, "Override rng_seed");
  exp->add_option("--workers", e_workers, "Override workers");
  exp->add_option("--replicates", e_reps, "Override replicates");
  exp->add_option("--length", e_len, "Override length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      if (!t_config.empty())
        hp = sg::nn::TrainHyperparams::from_json(
            nlohmann::json::parse(sg::read_text_file(t_config)));
      const auto mode = sg::parse_token_mode(t_mode);
      const std::size_t n = t_window ? t_window : sg::default_window(mode);
      sg::ModelConfig mc;
      mc.family = t_family;
      mc.ngram_order = t_order;
      mc.ngram_k = t_k;
      mc.train = hp;
      fs::create_directories(t_out);
      auto pm = sg::prepare_model(
          t_corpus, mode, n, t_min_count, false, t_augment, sg::parse_shuffle_unit(t_unit), mc,
          hp.rng_seed, [&](const sg::nn::Checkpoint& ck) {
            const auto path = fs::path(t_out) / fs::path(sg::checkpoint_name(ck)).filename();
            ck.save(path);
            std::fprintf(stderr, "epoch %zu step %zu train %.4f test %.4f acc %.4f -> %s\n",
                         ck.meta.epoch, ck.meta.step, ck.meta.train_loss, ck.meta.test_loss,
                         ck.meta.test_accuracy, path.string().c_str());
          });
      pm.vocab.save(fs::path(t_out) / "vocabulary.tsv");
      if (pm.ngram) {
        write_or_print((fs::path(t_out) / "ngram.json").string(),
                       pm.ngram->to_json(&pm.vocab).dump() + "\n");
      } else {
        write_or_print((fs::path(t_out) / "training_log.csv").string(),
                       sg::training_log_csv(pm.checkpoints));
        pm.checkpoints.back().save(fs::path(t_out) / "final.ckpt");
      }
      return 0;
    }

    if (*gen) {
      auto m = load_model(g_ckpt);
      sg::GenerationConfig cfg;
      cfg.diversity = g_div;
      cfg.length = g_len;
      cfg.rng_seed = g_rng;
      std::vector<sg::Document> corpus;
      if (!g_seed_file.empty()) {
        cfg.seed = sg::ExternalSeed{sg::read_text_file(g_seed_file), g_seed_file};
      } else if (!g_corpus.empty()) {
        corpus = sg::load_documents(g_corpus, m.vocab.mode());
      } else {
        throw sg::InvalidArgument("give --seed-file or --corpus");
      }
      const auto rec = sg::generate(*m.model, m.vocab, cfg, corpus);
      if (rec.oov_substitutions > 0)
        std::fprintf(stderr, "seed: %zu out-of-vocabulary token(s) substituted\n",
                     rec.oov_substitutions);
      if (!g_out.empty()) {
        std::ofstream out(g_out, std::ios::binary | std::ios::app);
        if (!out) throw sg::InvalidArgument("cannot write " + g_out);
        out << rec.to_jsonl();
      }
      std::cout << rec.text << "\n";
      return 0;
    }

    if (*cluster) {
      const auto samples = load_samples(c_paths);
      const auto f = sg::feature_matrix(samples, c_mfw);
      const auto dm = sg::distance(f, sg::parse_distance_kind(c_distance));
      const auto dg = sg::agglomerate(dm, sg::parse_linkage(c_linkage));
      if (!c_csv.empty()) write_or_print(c_csv, dm.to_csv());
      if (!c_features.empty()) write_or_print(c_features, f.to_csv());
      std::string format = "text";
      const auto ext = fs::path(c_out).extension().string();
      if (ext == ".svg") format = "svg";
      if (ext == ".nwk" || ext == ".newick") format = "newick";
      auto bytes = sg::export_dendrogram(dg, format);
      if (format == "newick") bytes += "\n";
      write_or_print(c_out, bytes);
      return 0;
    }

    if (*prefs) {
      const auto a = load_samples(p_a);
      const auto b = load_samples(p_b);
      const auto s = load_samples(p_seeds);
      auto rep = sg::preference(a, b, s, p_alpha);
      if (p_top > 0) {
        auto top = rep.preferred(p_top);
        auto bottom = rep.avoided(p_top);
        rep.entries = top;
        rep.entries.insert(rep.entries.end(), bottom.rbegin(), bottom.rend());
      }
      write_or_print(p_out, rep.to_csv());
      return 0;
    }

    if (*senti) {
      const auto lex = sg::load_lexicon(s_lex);
      nlohmann::json out = nlohmann::json::object();
      for (const auto& p : s_paths)
        for (const auto& d : sg::load_documents(p))
          out[d.id] = sg::sentiment_trace(d.raw, lex, s_w, s_s).to_json();
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*wordn) {
      sg::WordSet words;
      if (!w_vocab.empty()) {
        words = sg::word_set(sg::Vocabulary::load(w_vocab, sg::TokenMode::word));
      } else if (!w_corpus.empty()) {
        const auto docs = sg::load_documents(w_corpus);
        words = sg::word_set(sg::build_vocabulary(docs, sg::TokenMode::word, 1));
      } else {
        throw sg::InvalidArgument("give --corpus or --vocab");
      }
      for (const auto& p : w_paths)
        for (const auto& d : sg::load_documents(p))
          std::printf("%s\t%.6f\n", d.id.c_str(), sg::wordness(d.raw, words));
      return 0;
    }

    if (*exp) {
      auto cfg = sg::load_config(e_config);
      if (!e_out.empty()) cfg.output_dir = e_out;
      if (e_rng) cfg.rng_seed = *e_rng;
      if (e_workers) cfg.workers = *e_workers;
      if (e_reps) cfg.replicates = *e_reps;
      if (e_len) cfg.length = *e_len;
      const auto man = sg::run_experiment(cfg);
      for (const auto& w : man.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      for (const auto& e : man.errors) std::fprintf(stderr, "error: %s\n", e.c_str());
      std::size_t failed = 0;
      for (const auto& c : man.cells)
        if (c.status != "ok") {
          ++failed;
          std::fprintf(stderr, "cell %s failed: %s\n", c.label().c_str(), c.error.c_str());
        }
      std::printf("%s: %zu cells, %zu failed, config %s\n",
                  (fs::path(cfg.output_dir) / sg::Manifest::kFileName).string().c_str(),
                  man.cells.size(), failed, man.config_hash.c_str());
      return man.ok() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stylogen: %s\n", e.what());
    return 1;
  }
  return 0;
}
