#include "support/catch.hpp"

#include <numeric>

#include "stylogen/ngram.hpp"

using namespace stylogen;
using Catch::Approx;

namespace {

struct Fixture {
  std::vector<Document> docs;
  Vocabulary vocab;
  WindowSet windows;
};

Fixture make(const std::string& text, std::size_t n) {
  Fixture f;
  f.docs.push_back(make_document("d", text));
  f.vocab = build_vocabulary(f.docs, TokenMode::word, 1);
  f.windows = windowize(f.docs, f.vocab, n);
  return f;
}

double sum(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

}  // namespace

TEST_CASE("fit tabulates successor counts exactly") {
  auto f = make("a b a b a b", 1);
  const auto m = NgramModel::fit(f.windows, 1, 0.5, f.vocab.size());
  const TokenId a = f.vocab.id("a"), b = f.vocab.id("b");
  CHECK(m.count({a}, b) == 3);
  CHECK(m.count({b}, a) == 2);
  CHECK(m.count({a}, a) == 0);
}

TEST_CASE("order 0 counts targets only") {
  auto f = make("a b a b c", 2);
  const auto m = NgramModel::fit(f.windows, 0, 1.0, f.vocab.size());
  CHECK(m.count({}, f.vocab.id("a")) == 1);
  CHECK(m.count({}, f.vocab.id("b")) == 1);
  CHECK(m.count({}, f.vocab.id("c")) == 1);
}

TEST_CASE("refitting is idempotent") {
  auto f = make("x y z x y z x", 2);
  CHECK(NgramModel::fit(f.windows, 2, 0.5, f.vocab.size()) ==
        NgramModel::fit(f.windows, 2, 0.5, f.vocab.size()));
}

TEST_CASE("add-k probabilities follow the formula") {
  // V = 2, ids only.
  auto ws = WindowSet::from_sequences({{0, 1, 0, 1}}, 1);
  const auto m = NgramModel::fit(ws, 1, 1.0, 2);
  // context {0} is followed by 1 twice
  const std::vector<TokenId> c0{0};
  const auto p = m.next_distribution(c0);
  CHECK(p[1] == Approx(3.0 / 4.0).epsilon(1e-12));
  CHECK(p[0] == Approx(1.0 / 4.0).epsilon(1e-12));

  auto ws3 = WindowSet::from_sequences({{0, 1, 0, 1, 0, 1}}, 1);
  const auto m3 = NgramModel::fit(ws3, 1, 1.0, 2);
  const auto q = m3.next_distribution(c0);
  CHECK(q[1] == Approx(4.0 / 5.0).epsilon(1e-12));
  CHECK(q[0] == Approx(1.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("unseen contexts give the uniform distribution") {
  auto f = make("a b c a b c", 2);
  for (double k : {0.01, 0.5, 3.0}) {
    const auto m = NgramModel::fit(f.windows, 2, k, f.vocab.size());
    const std::vector<TokenId> ctx{f.vocab.id("c"), f.vocab.id("c")};
    for (double v : m.next_distribution(ctx)) CHECK(v == Approx(1.0 / 4.0));
  }
}

TEST_CASE("small k puts almost all mass on the observed successor") {
  auto f = make("a b a b", 1);
  const auto m = NgramModel::fit(f.windows, 1, 1e-9, f.vocab.size());
  const std::vector<TokenId> ctx{f.vocab.id("a")};
  CHECK(m.next_distribution(ctx)[static_cast<std::size_t>(f.vocab.id("b"))] > 1.0 - 1e-8);
}

TEST_CASE("distributions are normalized and positive on random data") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<TokenId> seq(200);
    const std::size_t V = 2 + rng.below(8);
    for (auto& t : seq) t = static_cast<TokenId>(rng.below(V));
    auto ws = WindowSet::from_sequences({seq}, 3);
    const auto m = NgramModel::fit(ws, 1 + rng.below(3), 0.1 + rng.uniform01(), V);
    for (int q = 0; q < 20; ++q) {
      std::vector<TokenId> ctx(3);
      for (auto& t : ctx) t = static_cast<TokenId>(rng.below(V));
      const auto p = m.next_distribution(ctx);
      CHECK(std::abs(sum(p) - 1.0) < 1e-9);
      for (double v : p) CHECK(v > 0.0);
    }
  }
}

TEST_CASE("argmax reproduces a period-2 corpus") {
  std::string text;
  for (int i = 0; i < 50; ++i) text += "a b ";
  auto f = make(text, 4);
  const auto m = NgramModel::fit(f.windows, 2, 0.5, f.vocab.size());
  for (const auto& w : f.windows) {
    const auto p = m.next_distribution(w.context);
    const auto am = std::max_element(p.begin(), p.end()) - p.begin();
    CHECK(am == w.target);
  }
}

TEST_CASE("ngram JSON round-trips with an embedded vocabulary") {
  auto f = make("the cat sat on the mat and the cat ran", 3);
  const auto m = NgramModel::fit(f.windows, 2, 0.5, f.vocab.size());
  const auto j = m.to_json(&f.vocab);
  CHECK(j.at("format") == "stylogen-ngram");
  const auto back = NgramModel::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back == m);
  CHECK(back.model_id() == m.model_id());
  const auto v = NgramModel::vocabulary_from_json(j);
  REQUIRE(v.has_value());
  CHECK(*v == f.vocab);
  CHECK_THROWS_AS(NgramModel::from_json({{"format", "other"}}), FormatError);
}

TEST_CASE("ngram fit rejects bad arguments") {
  auto f = make("a b c d", 2);
  CHECK_THROWS_AS(NgramModel::fit(f.windows, 3, 0.5, f.vocab.size()), InvalidArgument);
  CHECK_THROWS_AS(NgramModel::fit(f.windows, 1, 0.0, f.vocab.size()), InvalidArgument);
}
