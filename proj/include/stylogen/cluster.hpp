#pragma once

// Agglomerative clustering (Lance-Williams), cophenetic distances and
// dendrogram export to Newick, SVG and plain text.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "stylogen/stylometry.hpp"

namespace stylogen {

enum class Linkage { ward, complete, average, single };

inline std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::ward: return "ward";
    case Linkage::complete: return "complete";
    case Linkage::average: return "average";
    case Linkage::single: return "single";
  }
  return "?";
}

inline Linkage parse_linkage(std::string_view s) {
  if (s == "ward") return Linkage::ward;
  if (s == "complete") return Linkage::complete;
  if (s == "average") return Linkage::average;
  if (s == "single") return Linkage::single;
  throw InvalidArgument("unknown linkage '" + std::string(s) + "'");
}

/// Binary merge tree. Nodes 0..N-1 are the leaves in doc_ids order; every
/// later node is a merge whose children have smaller indices. The last node
/// is the root.
struct Dendrogram {
  struct Node {
    int left = -1;
    int right = -1;
    double height = 0.0;
    std::size_t size = 1;
    bool is_leaf() const { return left < 0; }
  };

  std::vector<std::string> labels;
  std::vector<Node> nodes;

  std::size_t leaf_count() const { return labels.size(); }
  std::size_t root() const { return nodes.size() - 1; }

  /// Leaf indices under `node`, left to right.
  std::vector<std::size_t> leaves_under(std::size_t node) const {
    std::vector<std::size_t> out;
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
      const auto n = stack.back();
      stack.pop_back();
      if (nodes[n].is_leaf()) {
        out.push_back(n);
      } else {
        stack.push_back(static_cast<std::size_t>(nodes[n].right));
        stack.push_back(static_cast<std::size_t>(nodes[n].left));
      }
    }
    return out;
  }

  /// Merge heights of the internal nodes in creation order.
  std::vector<double> merge_heights() const {
    std::vector<double> h;
    for (std::size_t i = leaf_count(); i < nodes.size(); ++i) h.push_back(nodes[i].height);
    return h;
  }

  void validate() const {
    const std::size_t n = leaf_count();
    if (n == 0 || nodes.size() != 2 * n - 1)
      throw InvalidArgument("dendrogram has the wrong node count");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& nd = nodes[i];
      if (i < n) {
        if (!nd.is_leaf()) throw InvalidArgument("dendrogram leaf has children");
        continue;
      }
      if (nd.left < 0 || nd.right < 0 || static_cast<std::size_t>(nd.left) >= i ||
          static_cast<std::size_t>(nd.right) >= i)
        throw InvalidArgument("dendrogram node references a later node");
    }
  }
};

/// Standard agglomerative clustering. At each step the closest pair of
/// active clusters merges; exact ties go to the pair whose smallest leaf
/// indices compare lowest. Ward uses the Lance-Williams update on the input
/// distances as given (no squaring).
inline Dendrogram agglomerate(const DistanceMatrix& dm, Linkage linkage) {
  const std::size_t n = dm.size();
  if (n < 2) throw InvalidArgument("clustering needs at least 2 documents");
  dm.validate(1e-12);

  Dendrogram dg;
  dg.labels = dm.doc_ids;
  dg.nodes.resize(n);

  // Cluster slot i holds node `node_of[i]`; `min_leaf` drives tie-breaking.
  std::vector<double> d = dm.d;
  std::vector<std::size_t> node_of(n), min_leaf(n), size(n, 1);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) node_of[i] = min_leaf[i] = i;
  auto D = [&](std::size_t i, std::size_t j) -> double& { return d[i * n + j]; };

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t bi = n, bj = n;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_key{n, n};
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double v = D(i, j);
        const std::pair<std::size_t, std::size_t> key{std::min(min_leaf[i], min_leaf[j]),
                                                      std::max(min_leaf[i], min_leaf[j])};
        if (v < best || (v == best && key < best_key)) {
          best = v;
          best_key = key;
          bi = i;
          bj = j;
        }
      }
    }
    if (min_leaf[bj] < min_leaf[bi]) std::swap(bi, bj);

    Dendrogram::Node node;
    node.left = static_cast<int>(node_of[bi]);
    node.right = static_cast<int>(node_of[bj]);
    node.height = best;
    node.size = size[bi] + size[bj];
    dg.nodes.push_back(node);

    const double ni = static_cast<double>(size[bi]);
    const double nj = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double dik = D(bi, k), djk = D(bj, k), dij = best;
      const double nk = static_cast<double>(size[k]);
      double v = 0.0;
      switch (linkage) {
        case Linkage::single: v = std::min(dik, djk); break;
        case Linkage::complete: v = std::max(dik, djk); break;
        case Linkage::average: v = (ni * dik + nj * djk) / (ni + nj); break;
        case Linkage::ward:
          v = ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk);
          break;
      }
      D(bi, k) = D(k, bi) = v;
    }
    active[bj] = false;
    node_of[bi] = dg.nodes.size() - 1;
    size[bi] += size[bj];
    min_leaf[bi] = std::min(min_leaf[bi], min_leaf[bj]);
  }
  return dg;
}

/// d(i,j) = height of the lowest common ancestor of leaves i and j.
inline DistanceMatrix cophenetic(const Dendrogram& dg) {
  dg.validate();
  DistanceMatrix m(dg.labels);
  for (std::size_t k = dg.leaf_count(); k < dg.nodes.size(); ++k) {
    const auto& nd = dg.nodes[k];
    const auto L = dg.leaves_under(static_cast<std::size_t>(nd.left));
    const auto R = dg.leaves_under(static_cast<std::size_t>(nd.right));
    for (auto a : L)
      for (auto b : R) m.at(a, b) = m.at(b, a) = nd.height;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline std::string newick_label(const std::string& s) {
  if (s.find_first_of("()[]:;,' \t\n") == std::string::npos && !s.empty()) return s;
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += '\'';
    out += c;
  }
  return out + "'";
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Short label for axis ticks and text output.
inline std::string short_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// Parenthesized tree; each branch length is parent height minus child
/// height.
inline std::string to_newick(const Dendrogram& dg) {
  dg.validate();
  std::string out;
  auto rec = [&](auto&& self, std::size_t node, double parent_height) -> void {
    const auto& nd = dg.nodes[node];
    if (nd.is_leaf()) {
      out += detail::newick_label(dg.labels[node]);
    } else {
      out += '(';
      self(self, static_cast<std::size_t>(nd.left), nd.height);
      out += ',';
      self(self, static_cast<std::size_t>(nd.right), nd.height);
      out += ')';
    }
    if (parent_height >= 0.0) out += ":" + format_double(parent_height - nd.height);
  };
  if (dg.leaf_count() == 1) {
    out = detail::newick_label(dg.labels[0]);
  } else {
    rec(rec, dg.root(), -1.0);
  }
  return out + ";";
}

/// Parses a binary Newick tree with branch lengths. Node heights are the
/// largest distance from the node down to a leaf.
inline Dendrogram parse_newick(std::string_view s) {
  struct Raw {
    std::string label;
    int left = -1, right = -1;
    double length = 0.0;
  };
  std::vector<Raw> raw;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  };
  auto fail = [&](const std::string& msg) -> void {
    throw FormatError("newick: " + msg + " at offset " + std::to_string(pos));
  };
  auto parse_label = [&]() -> std::string {
    skip_ws();
    std::string label;
    if (pos < s.size() && s[pos] == '\'') {
      ++pos;
      while (true) {
        if (pos >= s.size()) fail("unterminated quoted label");
        if (s[pos] == '\'') {
          if (pos + 1 < s.size() && s[pos + 1] == '\'') {
            label += '\'';
            pos += 2;
            continue;
          }
          ++pos;
          break;
        }
        label += s[pos++];
      }
      return label;
    }
    while (pos < s.size() && std::string_view("()[]:;,").find(s[pos]) == std::string_view::npos &&
           !std::isspace(static_cast<unsigned char>(s[pos])))
      label += s[pos++];
    return label;
  };
  auto parse_length = [&](Raw& r) {
    skip_ws();
    if (pos < s.size() && s[pos] == ':') {
      ++pos;
      skip_ws();
      std::size_t end = pos;
      while (end < s.size() && std::string_view("(),;").find(s[end]) == std::string_view::npos &&
             !std::isspace(static_cast<unsigned char>(s[end])))
        ++end;
      r.length = detail::parse_double(std::string(s.substr(pos, end - pos)));
      pos = end;
    }
  };
  auto rec = [&](auto&& self) -> int {
    skip_ws();
    Raw r;
    if (pos < s.size() && s[pos] == '(') {
      ++pos;
      const int a = self(self);
      skip_ws();
      if (pos >= s.size() || s[pos] != ',') fail("expected ','");
      ++pos;
      const int b = self(self);
      skip_ws();
      if (pos < s.size() && s[pos] == ',') fail("only binary trees are supported");
      if (pos >= s.size() || s[pos] != ')') fail("expected ')'");
      ++pos;
      r.left = a;
      r.right = b;
      parse_label();
    } else {
      r.label = parse_label();
      if (r.label.empty()) fail("empty leaf label");
    }
    parse_length(r);
    raw.push_back(std::move(r));
    return static_cast<int>(raw.size() - 1);
  };
  const int root = rec(rec);
  skip_ws();
  if (pos >= s.size() || s[pos] != ';') fail("expected ';'");

  // Renumber: leaves first in order of appearance, internal nodes in
  // post-order (children before parents).
  Dendrogram dg;
  std::vector<int> map(raw.size(), -1);
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i].left < 0) {
      map[i] = static_cast<int>(dg.labels.size());
      dg.labels.push_back(raw[i].label);
    }
  dg.nodes.resize(dg.labels.size());
  std::vector<double> height(raw.size(), 0.0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].left < 0) continue;
    const auto l = static_cast<std::size_t>(raw[i].left);
    const auto r = static_cast<std::size_t>(raw[i].right);
    height[i] = std::max(height[l] + raw[l].length, height[r] + raw[r].length);
    Dendrogram::Node nd;
    nd.left = map[l];
    nd.right = map[r];
    nd.height = height[i];
    nd.size = dg.nodes[static_cast<std::size_t>(nd.left)].size +
              dg.nodes[static_cast<std::size_t>(nd.right)].size;
    map[i] = static_cast<int>(dg.nodes.size());
    dg.nodes.push_back(nd);
  }
  (void)root;
  return dg;
}

/// Horizontal dendrogram: leaves on the left at height 0, merges to the
/// right, with a labelled height axis underneath.
inline std::string to_svg(const Dendrogram& dg, std::string_view axis_label = "Delta distance") {
  dg.validate();
  const auto order = dg.leaves_under(dg.root());
  std::size_t max_label = 0;
  for (const auto& l : dg.labels) max_label = std::max(max_label, l.size());
  const double row = 18.0, top = 20.0, plot_w = 480.0;
  const double label_w = 7.0 * static_cast<double>(max_label) + 20.0;
  const double x0 = label_w;
  const double hmax = std::max(dg.nodes[dg.root()].height, 1e-12);
  const double plot_h = row * static_cast<double>(order.size());
  const double width = x0 + plot_w + 40.0;
  const double height = top + plot_h + 60.0;
  auto X = [&](double h) { return x0 + plot_w * h / hmax; };

  std::vector<double> y(dg.nodes.size(), 0.0);
  for (std::size_t k = 0; k < order.size(); ++k)
    y[order[k]] = top + row * (static_cast<double>(k) + 0.5);
  for (std::size_t i = dg.leaf_count(); i < dg.nodes.size(); ++i)
    y[i] = 0.5 * (y[static_cast<std::size_t>(dg.nodes[i].left)] +
                  y[static_cast<std::size_t>(dg.nodes[i].right)]);

  using detail::fixed;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(width, 0) +
                    "\" height=\"" + fixed(height, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  for (std::size_t i = dg.leaf_count(); i < dg.nodes.size(); ++i) {
    const auto& nd = dg.nodes[i];
    const auto l = static_cast<std::size_t>(nd.left);
    const auto r = static_cast<std::size_t>(nd.right);
    const double xi = X(nd.height);
    out += "<path d=\"M" + fixed(X(dg.nodes[l].height), 2) + "," + fixed(y[l], 2) + " H" +
           fixed(xi, 2) + " V" + fixed(y[r], 2) + " H" + fixed(X(dg.nodes[r].height), 2) +
           "\"/>\n";
  }
  const double axis_y = top + plot_h + 10.0;
  out += "<line x1=\"" + fixed(x0, 2) + "\" y1=\"" + fixed(axis_y, 2) + "\" x2=\"" +
         fixed(x0 + plot_w, 2) + "\" y2=\"" + fixed(axis_y, 2) + "\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double h = hmax * t / 5.0;
    out += "<line x1=\"" + fixed(X(h), 2) + "\" y1=\"" + fixed(axis_y, 2) + "\" x2=\"" +
           fixed(X(h), 2) + "\" y2=\"" + fixed(axis_y + 4.0, 2) + "\"/>\n";
  }
  out += "</g>\n<g fill=\"black\">\n";
  for (int t = 0; t <= 5; ++t) {
    const double h = hmax * t / 5.0;
    out += "<text x=\"" + fixed(X(h), 2) + "\" y=\"" + fixed(axis_y + 16.0, 2) +
           "\" text-anchor=\"middle\">" + detail::short_num(h) + "</text>\n";
  }
  out += "<text x=\"" + fixed(x0 + plot_w / 2.0, 2) + "\" y=\"" + fixed(axis_y + 34.0, 2) +
         "\" text-anchor=\"middle\">" + detail::xml_escape(axis_label) + "</text>\n";
  for (auto leaf : order)
    out += "<text x=\"" + fixed(x0 - 6.0, 2) + "\" y=\"" + fixed(y[leaf] + 4.0, 2) +
           "\" text-anchor=\"end\">" + detail::xml_escape(dg.labels[leaf]) + "</text>\n";
  out += "</g>\n</svg>\n";
  return out;
}

/// Indented ASCII tree; internal nodes show their merge height.
inline std::string to_text(const Dendrogram& dg) {
  dg.validate();
  std::string out;
  auto rec = [&](auto&& self, std::size_t node, const std::string& prefix,
                 const std::string& child_prefix) -> void {
    const auto& nd = dg.nodes[node];
    if (nd.is_leaf()) {
      out += prefix + dg.labels[node] + "\n";
      return;
    }
    out += prefix + "[" + detail::short_num(nd.height) + "]\n";
    self(self, static_cast<std::size_t>(nd.left), child_prefix + "+-- ", child_prefix + "|   ");
    self(self, static_cast<std::size_t>(nd.right), child_prefix + "`-- ", child_prefix + "    ");
  };
  rec(rec, dg.root(), "", "");
  return out;
}

inline std::string export_dendrogram(const Dendrogram& dg, std::string_view format) {
  if (format == "newick" || format == "nwk") return to_newick(dg);
  if (format == "svg") return to_svg(dg);
  if (format == "text" || format == "txt") return to_text(dg);
  throw InvalidArgument("unknown dendrogram format '" + std::string(format) + "'");
}

}  // namespace stylogen
