#include "support/catch.hpp"

#include <filesystem>

#include "stylogen/experiment.hpp"

using namespace stylogen;
namespace fs = std::filesystem;

namespace {

std::string random_text(Rng& rng, const std::vector<std::string>& pool, std::size_t words) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    out += pool[rng.below(rng.below(pool.size()) + 1)];
    out += (i % 12 == 11) ? ".\n" : " ";
  }
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("stylogen_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

/// Small corpus, external seeds and composed texts drawn from different
/// word pools.
ExperimentConfig small_config(const fs::path& root) {
  Rng rng(42);
  const std::vector<std::string> a{"the", "of", "and", "to", "heaven", "hell", "fire", "god",
                                   "angel", "fall", "light", "dark", "throne", "power", "war"};
  const std::vector<std::string> b{"my", "thy", "love", "sweet", "fair", "time", "beauty",
                                   "eyes", "heart", "thee", "summer", "rose", "and", "the"};
  for (int i = 0; i < 3; ++i)
    write(root / "corpus" / ("book" + std::to_string(i) + ".txt"), random_text(rng, a, 800));
  for (int i = 0; i < 2; ++i)
    write(root / "seeds" / ("sonnet" + std::to_string(i) + ".txt"), random_text(rng, b, 300));
  for (int i = 0; i < 2; ++i)
    write(root / "composed" / ("poem" + std::to_string(i) + ".txt"), random_text(rng, b, 400));
  write(root / "lexicon.tsv", "love\t1\nwar\t-1\nhell\t-0.8\nsweet\t0.6\n");
  ExperimentConfig c;
  c.name = "unit";
  c.corpus = (root / "corpus").string();
  c.external_seeds = (root / "seeds").string();
  c.composed = (root / "composed").string();
  c.output_dir = (root / "out").string();
  c.model.family = "ngram";
  c.model.ngram_order = 2;
  c.length = 250;
  c.stylometry.mfw = 20;
  c.stylometry.min_tokens = 100;
  c.analysis.lexicon = (root / "lexicon.tsv").string();
  c.rng_seed = 7;
  return c;
}

std::string file_text(const fs::path& p) { return read_text_file(p); }

}  // namespace

TEST_CASE("grid cells enumerate source, diversity and replicate") {
  ExperimentConfig c;
  const auto cells = grid_cells(c);
  REQUIRE(cells.size() == 24);
  CHECK(cells[0].label() == "self_D0.5_r1");
  CHECK(cells[1].label() == "self_D0.5_r2");
  CHECK(cells[3].label() == "self_D1_r1");
  CHECK(cells[12].label() == "ext_D0.5_r1");
  CHECK(cells[23].label() == "ext_D2_r3");
  CHECK(cells[23].condition() == "ext_D2");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(cells[i].index == i);
    CHECK(cells[i].rng_seed == c.rng_seed + i);
  }
}

TEST_CASE("config JSON round-trips and hashes canonically") {
  ExperimentConfig c;
  c.diversity = {0.25, 1.0};
  c.model.family = "gru";
  c.model.train.epochs = 3;
  c.stylometry.linkage = Linkage::average;
  const auto back = ExperimentConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  auto d = c;
  d.rng_seed = 1;
  CHECK(d.hash() != c.hash());
  auto e = c;
  e.output_dir = "elsewhere";
  e.workers = 4;
  CHECK(e.hash() == c.hash());
  // key order in the input does not matter
  const auto j = nlohmann::json::parse(R"({"replicates": 2, "name": "x"})");
  const auto k = nlohmann::json::parse(R"({"name": "x", "replicates": 2})");
  CHECK(ExperimentConfig::from_json(j).hash() == ExperimentConfig::from_json(k).hash());
  CHECK_THROWS_WITH(ExperimentConfig::from_json({{"diversty", {1.0}}}),
                    Catch::Matchers::ContainsSubstring("diversty"));
}

TEST_CASE("config validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate(false));
  c.diversity = {1.0, 0.5};
  CHECK_THROWS_AS(c.validate(false), InvalidArgument);
  c.diversity = {0.0, 0.5};
  CHECK_THROWS_AS(c.validate(false), InvalidArgument);
  c.diversity = {0.5};
  c.seed_sources = {"self", "other"};
  CHECK_THROWS_AS(c.validate(false), InvalidArgument);
  c.seed_sources = {"self"};
  c.corpus = "/nonexistent/stylogen";
  CHECK_THROWS_WITH(c.validate(true), Catch::Matchers::ContainsSubstring("corpus not found"));
}

TEST_CASE("config files resolve relative paths against their directory") {
  TempDir tmp("cfg");
  write(tmp.path / "exp.json",
        R"({"corpus": "texts", "output_dir": "runs/a", "analysis": {"lexicon": "/abs/lex.tsv"}})");
  const auto c = load_config(tmp.path / "exp.json");
  CHECK(fs::path(c.corpus) == (tmp.path / "texts").lexically_normal());
  CHECK(fs::path(c.output_dir) == (tmp.path / "runs/a").lexically_normal());
  CHECK(c.analysis.lexicon == "/abs/lex.tsv");
  write(tmp.path / "bad.json", "{not json");
  CHECK_THROWS_AS(load_config(tmp.path / "bad.json"), FormatError);
}

TEST_CASE("an ngram experiment produces every artifact") {
  TempDir tmp("exp");
  const auto c = small_config(tmp.path);
  const auto man = run_experiment(c);
  INFO((man.errors.empty() ? std::string() : man.errors.front()));
  CHECK(man.ok());
  REQUIRE(man.cells.size() == 24);
  const fs::path out = c.output_dir;

  // manifest on disk matches the returned one and lists every file with its hash
  const auto loaded = Manifest::load(out);
  CHECK(loaded.to_json() == man.to_json());
  CHECK(man.config_hash == c.hash());
  std::size_t generations = 0;
  for (const auto& f : man.files) {
    REQUIRE(fs::exists(out / f.path));
    CHECK(hex64(fnv1a64(file_text(out / f.path))) == f.hash);
    CHECK(f.labels.at("config_hash") == man.config_hash);
    if (f.kind == "generation") ++generations;
  }
  CHECK(generations == 24);
  for (const char* p : {"model/ngram.json", "model/vocabulary.tsv", "generations.jsonl",
                        "stylometry/distances.csv", "stylometry/dendrogram.svg",
                        "stylometry/dendrogram.nwk", "stylometry/summary.json",
                        "analysis/preference_external_vs_self.csv", "analysis/sentiment.json"})
    CHECK(fs::exists(out / p));

  // one JSONL record per cell with its configuration
  std::istringstream jsonl(file_text(out / "generations.jsonl"));
  std::string line;
  std::size_t records = 0;
  while (std::getline(jsonl, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto& cell = man.cells[records];
    CHECK(j.at("label") == cell.label());
    CHECK(j.at("config").at("rng_seed") == cell.rng_seed);
    CHECK(j.at("config").at("diversity") == cell.diversity);
    CHECK(j.at("config").at("seed_source") == cell.source);
    CHECK(j.at("token_ids").size() == 250);
    CHECK(j.at("model") == man.model_id);
    ++records;
  }
  CHECK(records == 24);

  // the cluster summary names every generated and composed text
  const auto summary = nlohmann::json::parse(file_text(out / "stylometry/summary.json"));
  CHECK(summary.at("documents").size() == 26);
  CHECK(summary.at("distance_to_baseline").size() == 4);
  CHECK(summary.at("seeding").size() == 4);

  // a model file from the run reloads and reproduces the grid
  auto again = c;
  again.output_dir = (tmp.path / "out2").string();
  again.model.checkpoint = (out / "model/ngram.json").string();
  const auto grid = run_grid(again);
  CHECK(grid.manifest.ok());
  CHECK(grid.manifest.model_id == man.model_id);
  for (const auto& cell : man.cells)
    CHECK(file_text(out / cell.file) == file_text(fs::path(again.output_dir) / cell.file));
}

TEST_CASE("grid runs are deterministic and independent of worker count") {
  TempDir tmp("det");
  auto c = small_config(tmp.path);
  c.replicates = 2;
  c.diversity = {0.5, 2.0};
  const auto a = run_grid(c);
  c.output_dir = (tmp.path / "out_b").string();
  c.workers = 3;
  const auto b = run_grid(c);
  REQUIRE(a.records.size() == 8);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].emitted_ids == b.records[i].emitted_ids);
    CHECK(a.records[i].seed_tokens == b.records[i].seed_tokens);
  }
  c.rng_seed = 8;
  c.output_dir = (tmp.path / "out_c").string();
  const auto d = run_grid(c);
  CHECK(d.records[0].emitted_ids != a.records[0].emitted_ids);
  // external cells draw their seeds from the external texts
  CHECK(a.records[4].config.to_json().at("seed_source") == "external");
}

TEST_CASE("model preparation failures are recorded in the manifest") {
  TempDir tmp("fail");
  auto c = small_config(tmp.path);
  c.window = 5000;  // longer than every document
  const auto man = run_experiment(c);
  CHECK_FALSE(man.ok());
  REQUIRE(man.errors.size() == 1);
  CHECK(man.errors[0].find("model preparation failed") != std::string::npos);
  CHECK(fs::exists(fs::path(c.output_dir) / "manifest.json"));
}

TEST_CASE("cluster report excludes short texts and reads off the structure") {
  Rng rng(3);
  const std::vector<std::string> a{"a", "b", "c", "d", "e", "f", "g", "h"};
  // same words, different frequency profile
  const std::vector<std::string> b(a.rbegin(), a.rend());
  std::vector<LabelledText> texts;
  auto add = [&](const std::string& id, const std::string& cond, const std::string& src, double D,
                 bool composed, const std::vector<std::string>& pool, std::size_t n) {
    LabelledText t;
    t.sample = TextSample::from_text(id, random_text(rng, pool, n));
    t.condition = cond;
    t.source = src;
    t.diversity = D;
    t.composed = composed;
    texts.push_back(std::move(t));
  };
  for (int r = 0; r < 3; ++r) {
    add("self_r" + std::to_string(r), "self_D1", "self", 1.0, false, a, 400);
    add("ext_r" + std::to_string(r), "ext_D1", "external", 1.0, false, b, 400);
  }
  add("poem", "", "", 0.0, true, {"x", "y", "z", "w"}, 400);
  add("poem2", "", "", 0.0, true, {"x", "y", "z", "v"}, 400);
  add("tiny", "self_D1", "self", 1.0, false, a, 10);

  StyloSettings s;
  s.mfw = 30;
  s.min_tokens = 50;
  WarningCollector wc;
  const auto rep = cluster_report(texts, s);
  CHECK(rep.excluded == std::vector<std::string>{"tiny"});
  CHECK(wc.messages.size() >= 1);
  CHECK(rep.distances.size() == 8);
  REQUIRE(rep.seeding.size() == 1);
  CHECK(rep.seeding[0].between > rep.seeding[0].within);
  CHECK(rep.seeding_separated);
  CHECK(rep.mean_between_condition > rep.mean_within_condition);
  CHECK(rep.composed_subtree);
  INFO(to_text(rep.dendrogram));
  CHECK(rep.composed_separated);
  CHECK(rep.summary().at("excluded").size() == 1);
}

TEST_CASE("character learning curve rows follow the checkpoints") {
  std::string text;
  for (int i = 0; i < 40; ++i) text += "the cat sat on the mat. ";
  std::vector<Document> docs{make_document("c", text, TokenMode::character)};
  const auto vocab = build_vocabulary(docs, TokenMode::character, 1);
  const auto windows = windowize(docs, vocab, 8);
  nn::TrainHyperparams h;
  h.epochs = 3;
  h.lr = 1e-2;
  const auto cks = nn::train(nn::default_conv_spec(vocab.size(), 8), vocab, windows, h);
  const auto words = word_set(build_vocabulary(std::vector<Document>{make_document("w", text)},
                                               TokenMode::word, 1));
  Rng rng(1);
  const auto seed = select_seed(std::span<const Document>(docs), 8, rng);
  const auto rows = learning_curve(cks, words, seed, 0.5, 120, 9);
  REQUIRE(rows.size() == cks.size());
  CHECK(rows.front().epoch == 0);
  CHECK(rows.back().epoch == 3);
  CHECK(rows.back().test_loss < rows.front().test_loss);
  CHECK(rows.back().wordness > rows.front().wordness);
  CHECK(learning_curve_csv(rows).rfind("epoch,step,", 0) == 0);
  CHECK(top_chars("aab  ", 2) == std::vector<std::string>{"space", "a"});
  CHECK(top_chars("aaab  ", 2) == std::vector<std::string>{"a", "space"});
}
