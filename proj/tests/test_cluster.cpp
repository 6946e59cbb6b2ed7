#include "support/catch.hpp"

#include <algorithm>
#include <numeric>

#include "stylogen/cluster.hpp"
#include "support/oracles.hpp"

using namespace stylogen;
using Catch::Approx;

namespace {

DistanceMatrix abc() {
  DistanceMatrix m({"A", "B", "C"});
  auto set = [&](std::size_t i, std::size_t j, double v) { m.at(i, j) = m.at(j, i) = v; };
  set(0, 1, 0.5);
  set(0, 2, 1.8660254037844386);
  set(1, 2, 1.3660254037844386);
  return m;
}

DistanceMatrix random_delta(Rng& rng, std::size_t docs) {
  FeatureMatrix f;
  for (std::size_t i = 0; i < docs; ++i) f.doc_ids.push_back("d" + std::to_string(i));
  const std::size_t words = 3 + rng.below(20);
  for (std::size_t w = 0; w < words; ++w) f.mfw.push_back("w" + std::to_string(w));
  for (std::size_t i = 0; i < docs; ++i) {
    std::vector<double> row;
    for (std::size_t w = 0; w < words; ++w) row.push_back(rng.uniform01() * 0.05);
    f.values.push_back(std::move(row));
  }
  return burrows_delta(f);
}

oracle::Matrix to_rows(const DistanceMatrix& m) {
  oracle::Matrix r(m.size(), std::vector<double>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) r[i][j] = m.at(i, j);
  return r;
}

std::set<std::size_t> leaf_set(const Dendrogram& dg, std::size_t node) {
  const auto v = dg.leaves_under(node);
  return {v.begin(), v.end()};
}

constexpr Linkage kAll[] = {Linkage::single, Linkage::complete, Linkage::average, Linkage::ward};

}  // namespace

TEST_CASE("complete linkage on the three-document example") {
  const auto dg = agglomerate(abc(), Linkage::complete);
  dg.validate();
  REQUIRE(dg.nodes.size() == 5);
  CHECK(leaf_set(dg, 3) == std::set<std::size_t>{0, 1});
  CHECK(dg.nodes[3].height == Approx(0.5).margin(1e-5));
  CHECK(dg.nodes[4].height == Approx(1.86603).margin(1e-5));
  CHECK(dg.nodes[4].size == 3);

  const auto c = cophenetic(dg);
  CHECK(c.at("A", "B") == Approx(0.5).margin(1e-5));
  CHECK(c.at("A", "C") == Approx(1.86603).margin(1e-5));
  CHECK(c.at("B", "C") == Approx(1.86603).margin(1e-5));
}

TEST_CASE("single and average linkage on the three-document example") {
  const auto s = agglomerate(abc(), Linkage::single);
  CHECK(s.nodes[4].height == Approx(1.36603).margin(1e-5));
  const auto a = agglomerate(abc(), Linkage::average);
  CHECK(a.nodes[4].height == Approx((1.86603 + 1.36603) / 2).margin(1e-5));
  // ward: (2*1.86603 + 2*1.36603 - 0.5) / 3
  const auto w = agglomerate(abc(), Linkage::ward);
  CHECK(w.nodes[4].height == Approx((2 * 1.8660254 + 2 * 1.3660254 - 0.5) / 3).margin(1e-6));
}

TEST_CASE("clustering matches the brute-force reference") {
  Rng rng(31337);
  for (int t = 0; t < 50; ++t) {
    const auto dm = random_delta(rng, 5);
    const auto rows = to_rows(dm);
    for (auto linkage : kAll) {
      INFO("instance " << t << " linkage " << to_string(linkage));
      const auto dg = agglomerate(dm, linkage);
      const auto ref = oracle::agglomerate(rows, std::string(to_string(linkage)));
      REQUIRE(ref.size() == 4);
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(leaf_set(dg, 5 + k) == ref[k].members);
        CHECK(dg.nodes[5 + k].height == Approx(ref[k].height).margin(1e-9));
      }
      const auto c = cophenetic(dg);
      const auto rc = oracle::cophenetic(ref, 5);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(c.at(i, j) == Approx(rc[i][j]).margin(1e-9));
    }
  }
}

TEST_CASE("merge heights are monotone for reducible linkages") {
  Rng rng(3);
  for (int t = 0; t < 30; ++t) {
    const auto dm = random_delta(rng, 3 + rng.below(8));
    for (auto linkage : kAll) {
      const auto h = agglomerate(dm, linkage).merge_heights();
      CHECK(std::is_sorted(h.begin(), h.end()));
    }
  }
}

TEST_CASE("cophenetic distances are an ultrametric") {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const auto dm = random_delta(rng, 4 + rng.below(6));
    const auto c = cophenetic(agglomerate(dm, Linkage::ward));
    c.validate();
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = 0; j < c.size(); ++j)
        for (std::size_t k = 0; k < c.size(); ++k)
          CHECK(c.at(i, j) <= std::max(c.at(i, k), c.at(k, j)) + 1e-12);
  }
}

TEST_CASE("clustering does not depend on document order") {
  Rng rng(99);
  for (int t = 0; t < 20; ++t) {
    const auto dm = random_delta(rng, 6);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    DistanceMatrix pm;
    for (auto p : perm) pm.doc_ids.push_back(dm.doc_ids[p]);
    pm.d.assign(36, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) pm.at(i, j) = dm.at(perm[i], perm[j]);
    for (auto linkage : kAll) {
      const auto a = cophenetic(agglomerate(dm, linkage));
      const auto b = cophenetic(agglomerate(pm, linkage));
      for (const auto& x : dm.doc_ids)
        for (const auto& y : dm.doc_ids) CHECK(a.at(x, y) == Approx(b.at(x, y)).margin(1e-12));
    }
  }
}

TEST_CASE("exact ties merge the lowest-indexed pair first") {
  DistanceMatrix m({"a", "b", "c", "d"});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) m.at(i, j) = i == j ? 0.0 : 1.0;
  const auto dg = agglomerate(m, Linkage::average);
  CHECK(leaf_set(dg, 4) == std::set<std::size_t>{0, 1});
  CHECK(dg.nodes[4].left == 0);
  CHECK(to_newick(dg) == to_newick(agglomerate(m, Linkage::average)));
}

TEST_CASE("clustering rejects invalid matrices") {
  DistanceMatrix one({"a"});
  CHECK_THROWS_AS(agglomerate(one, Linkage::ward), InvalidArgument);
  auto bad = abc();
  bad.at(0, 1) = 0.7;
  CHECK_THROWS_AS(agglomerate(bad, Linkage::ward), InvalidArgument);
  CHECK_THROWS_AS(parse_linkage("centroid"), InvalidArgument);
  CHECK(parse_linkage("ward") == Linkage::ward);
}

TEST_CASE("two leaves give the forced Newick topology") {
  DistanceMatrix m({"A", "B"});
  m.at(0, 1) = m.at(1, 0) = 0.5;
  CHECK(to_newick(agglomerate(m, Linkage::ward)) == "(A:0.5,B:0.5);");
}

TEST_CASE("Newick output parses back to the same tree") {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    auto dm = random_delta(rng, 3 + rng.below(7));
    dm.doc_ids[0] = "self D0.5 (r1)";
    const auto dg = agglomerate(dm, Linkage::ward);
    const auto nwk = to_newick(dg);
    const auto back = parse_newick(nwk);
    back.validate();
    CHECK(back.leaf_count() == dg.leaf_count());
    const auto a = cophenetic(dg);
    const auto b = cophenetic(back);
    for (const auto& x : dm.doc_ids)
      for (const auto& y : dm.doc_ids) CHECK(a.at(x, y) == Approx(b.at(x, y)).margin(1e-9));
  }
  CHECK_THROWS_AS(parse_newick("(A:1,B:1"), FormatError);
  CHECK_THROWS_AS(parse_newick("(A:1,B:1,C:1);"), FormatError);
}

TEST_CASE("SVG and text exports show every leaf") {
  const auto dg = agglomerate(abc(), Linkage::complete);
  const auto svg = export_dendrogram(dg, "svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  for (const char* l : {">A<", ">B<", ">C<"}) CHECK(svg.find(l) != std::string::npos);
  CHECK(svg.find("Delta distance") != std::string::npos);

  const auto txt = export_dendrogram(dg, "text");
  CHECK(txt ==
        "[1.86603]\n"
        "+-- [0.5]\n"
        "|   +-- A\n"
        "|   `-- B\n"
        "`-- C\n");
  CHECK(export_dendrogram(dg, "nwk") == to_newick(dg));
  CHECK_THROWS_AS(export_dendrogram(dg, "png"), InvalidArgument);

  DistanceMatrix amp({"a&b", "<c>"});
  amp.at(0, 1) = amp.at(1, 0) = 1.0;
  const auto esc = to_svg(agglomerate(amp, Linkage::single));
  CHECK(esc.find("a&amp;b") != std::string::npos);
  CHECK(esc.find("&lt;c&gt;") != std::string::npos);
}
