#include "support/catch.hpp"

#include <algorithm>
#include <set>

#include "stylogen/common.hpp"

using namespace stylogen;

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
}

TEST_CASE("Rng wraps the standard mt19937_64 stream") {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the
  // C++ standard.
  Rng rng(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.next_u64();
  CHECK(x == 9981545732273789042ULL);
}

TEST_CASE("Rng draws are deterministic and in range") {
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform01();
    CHECK(u == b.uniform01());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = a.below(13);
    CHECK(k == b.below(13));
    CHECK(k < 13);
  }
  CHECK_THROWS_AS(a.below(0), InvalidArgument);
}

TEST_CASE("Rng::below is close to uniform") {
  Rng rng(11);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(6)];
  // chi-square with 5 degrees of freedom; p = 0.001 critical value 20.515
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 6.0) * (c - n / 6.0) / (n / 6.0);
  CHECK(chi2 < 20.515);
}

TEST_CASE("shuffle produces a permutation") {
  Rng rng(3);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  rng.shuffle(w.begin(), w.end());
  CHECK(w != v);
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 100; ++s) seen.insert(derive_seed(42, s));
  CHECK(seen.size() == 100);
  CHECK(derive_seed(42, 5) == derive_seed(42, 5));
  CHECK(derive_seed(42, 5) != derive_seed(43, 5));
}

TEST_CASE("strip_edge_punct keeps interior punctuation") {
  CHECK(strip_edge_punct("screen!") == "screen");
  CHECK(strip_edge_punct("'tis") == "tis");
  CHECK(strip_edge_punct("don't") == "don't");
  CHECK(strip_edge_punct("--") == "");
  CHECK(strip_edge_punct("(heav'n),") == "heav'n");
}

TEST_CASE("warnings can be collected") {
  WarningCollector c;
  warn("one");
  warn("two");
  REQUIRE(c.messages.size() == 2);
  CHECK(c.messages[1] == "two");
}
