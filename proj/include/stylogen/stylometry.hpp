#pragma once

// Most-frequent-word features and Delta-family distances.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylogen/common.hpp"
#include "stylogen/corpus.hpp"

namespace stylogen {

/// Lowercased, whitespace-split words with edge punctuation removed. Empty
/// chunks and the OOV marker emitted by word models are dropped.
inline std::vector<std::string> stylometric_words(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& tok : tokenize_words(normalize(text))) {
    if (tok == Vocabulary::kOov) continue;
    auto w = strip_edge_punct(tok);
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

struct TextSample {
  std::string id;
  std::vector<std::string> words;

  static TextSample from_text(std::string id, std::string_view text) {
    return {std::move(id), stylometric_words(text)};
  }
};

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
    } else {
      cell += c;
      any = true;
    }
  }
  if (quoted) throw FormatError("unterminated quote in CSV");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("not a number: '" + s + "'");
  return v;
}

}  // namespace detail

struct FeatureMatrix {
  std::vector<std::string> doc_ids;
  std::vector<std::string> mfw;
  /// values[doc][word]: relative frequency of mfw[word] in the document.
  std::vector<std::vector<double>> values;

  std::size_t docs() const { return doc_ids.size(); }
  std::size_t features() const { return mfw.size(); }

  std::string to_csv() const {
    std::string out = "id";
    for (const auto& w : mfw) out += "," + csv_escape(w);
    out += "\n";
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
      out += csv_escape(doc_ids[i]);
      for (double v : values[i]) out += "," + format_double(v);
      out += "\n";
    }
    return out;
  }

  static FeatureMatrix from_csv(std::string_view text) {
    const auto rows = detail::parse_csv(text);
    if (rows.empty()) throw FormatError("empty feature CSV");
    FeatureMatrix f;
    f.mfw.assign(rows[0].begin() + 1, rows[0].end());
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != f.mfw.size() + 1)
        throw FormatError("feature CSV row " + std::to_string(r) + " has wrong width");
      f.doc_ids.push_back(rows[r][0]);
      std::vector<double> row;
      for (std::size_t c = 1; c < rows[r].size(); ++c)
        row.push_back(detail::parse_double(rows[r][c]));
      f.values.push_back(std::move(row));
    }
    return f;
  }
};

/// Top-M words by summed raw count over all documents (ties broken
/// lexicographically) and their per-document relative frequencies.
inline FeatureMatrix feature_matrix(std::span<const TextSample> docs,
                                    std::size_t M) {
  if (docs.size() < 2) throw InvalidArgument("feature_matrix needs at least 2 documents");
  if (M < 2) throw InvalidArgument("feature_matrix needs M >= 2");
  std::map<std::string, std::uint64_t> total;
  for (const auto& d : docs) {
    if (d.words.empty()) throw InvalidArgument("document '" + d.id + "' is empty");
    for (const auto& w : d.words) ++total[w];
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(total.begin(), total.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (M > ranked.size()) {
    warn("requested " + std::to_string(M) + " most frequent words but only " +
         std::to_string(ranked.size()) + " distinct words exist; using " +
         std::to_string(ranked.size()));
    M = ranked.size();
  }
  FeatureMatrix f;
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < M; ++i) {
    f.mfw.push_back(ranked[i].first);
    column.emplace(ranked[i].first, i);
  }
  for (const auto& d : docs) {
    f.doc_ids.push_back(d.id);
    std::vector<double> row(M, 0.0);
    for (const auto& w : d.words) {
      auto it = column.find(w);
      if (it != column.end()) row[it->second] += 1.0;
    }
    for (auto& v : row) v /= static_cast<double>(d.words.size());
    f.values.push_back(std::move(row));
  }
  return f;
}

struct DistanceMatrix {
  std::vector<std::string> doc_ids;
  /// Row-major N x N.
  std::vector<double> d;
  /// Number of features that contributed (M' for Delta distances).
  std::size_t retained_features = 0;

  DistanceMatrix() = default;
  explicit DistanceMatrix(std::vector<std::string> ids)
      : doc_ids(std::move(ids)), d(doc_ids.size() * doc_ids.size(), 0.0) {}

  std::size_t size() const { return doc_ids.size(); }
  double& at(std::size_t i, std::size_t j) { return d[i * size() + j]; }
  double at(std::size_t i, std::size_t j) const { return d[i * size() + j]; }

  std::size_t index_of(std::string_view id) const {
    for (std::size_t i = 0; i < doc_ids.size(); ++i)
      if (doc_ids[i] == id) return i;
    throw InvalidArgument("unknown document id '" + std::string(id) + "'");
  }
  double at(std::string_view a, std::string_view b) const {
    return at(index_of(a), index_of(b));
  }

  /// Throws unless the matrix is square, finite, non-negative, symmetric
  /// (to `tol`) and has a zero diagonal.
  void validate(double tol = 1e-12) const {
    const std::size_t n = size();
    if (d.size() != n * n) throw InvalidArgument("distance matrix is not square");
    for (std::size_t i = 0; i < n; ++i) {
      if (at(i, i) != 0.0) throw InvalidArgument("distance matrix diagonal is not zero");
      for (std::size_t j = 0; j < n; ++j) {
        const double v = at(i, j);
        if (!std::isfinite(v) || v < 0.0)
          throw InvalidArgument("distance matrix has a negative or non-finite entry");
        if (std::abs(v - at(j, i)) > tol)
          throw InvalidArgument("distance matrix is not symmetric");
      }
    }
  }

  std::string to_csv() const {
    std::string out;
    for (const auto& id : doc_ids) out += "," + csv_escape(id);
    out += "\n";
    for (std::size_t i = 0; i < size(); ++i) {
      out += csv_escape(doc_ids[i]);
      for (std::size_t j = 0; j < size(); ++j) out += "," + format_double(at(i, j));
      out += "\n";
    }
    return out;
  }

  static DistanceMatrix from_csv(std::string_view text) {
    const auto rows = detail::parse_csv(text);
    if (rows.empty()) throw FormatError("empty distance CSV");
    DistanceMatrix m(std::vector<std::string>(rows[0].begin() + 1, rows[0].end()));
    if (rows.size() != m.size() + 1) throw FormatError("distance CSV is not square");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto& r = rows[i + 1];
      if (r.size() != m.size() + 1 || r[0] != m.doc_ids[i])
        throw FormatError("distance CSV row " + std::to_string(i + 1) + " is malformed");
      for (std::size_t j = 0; j < m.size(); ++j)
        m.at(i, j) = detail::parse_double(r[j + 1]);
    }
    return m;
  }
};

struct ZScores {
  std::vector<std::string> doc_ids;
  std::vector<std::string> words;
  std::vector<double> mean;
  std::vector<double> sd;
  /// z[doc][word] over the retained words.
  std::vector<std::vector<double>> z;
  std::vector<std::string> dropped;
};

/// Per-word z-scores across the documents using the sample standard
/// deviation. Words with zero variance are dropped with a warning.
inline ZScores zscore(const FeatureMatrix& f) {
  const std::size_t N = f.docs();
  if (N < 2) throw InvalidArgument("z-scores need at least 2 documents");
  ZScores z;
  z.doc_ids = f.doc_ids;
  z.z.assign(N, {});
  for (std::size_t w = 0; w < f.features(); ++w) {
    double mu = 0.0;
    for (std::size_t i = 0; i < N; ++i) mu += f.values[i][w];
    mu /= static_cast<double>(N);
    double ss = 0.0;
    for (std::size_t i = 0; i < N; ++i) ss += (f.values[i][w] - mu) * (f.values[i][w] - mu);
    const double sd = std::sqrt(ss / static_cast<double>(N - 1));
    if (!(sd > 0.0)) {
      z.dropped.push_back(f.mfw[w]);
      continue;
    }
    z.words.push_back(f.mfw[w]);
    z.mean.push_back(mu);
    z.sd.push_back(sd);
    for (std::size_t i = 0; i < N; ++i) z.z[i].push_back((f.values[i][w] - mu) / sd);
  }
  if (z.words.empty()) throw InvalidArgument("all features have zero variance");
  if (!z.dropped.empty())
    warn("dropped " + std::to_string(z.dropped.size()) +
         " zero-variance feature(s); " + std::to_string(z.words.size()) + " retained");
  return z;
}

/// Mean absolute z-score difference.
inline double delta_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw InvalidArgument("delta_distance: vectors differ in length or are empty");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw InvalidArgument("cosine_distance: vectors differ in length or are empty");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw InvalidArgument("cosine distance of a zero z-vector");
  const double c = std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
  return 1.0 - c;
}

namespace detail {
template <class F>
DistanceMatrix pairwise(const ZScores& z, F&& dist) {
  DistanceMatrix m(z.doc_ids);
  m.retained_features = z.words.size();
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j)
      m.at(i, j) = m.at(j, i) = dist(z.z[i], z.z[j]);
  return m;
}
}  // namespace detail

/// Classic Burrows' Delta over the retained features.
inline DistanceMatrix burrows_delta(const FeatureMatrix& f) {
  return detail::pairwise(zscore(f), [](const auto& a, const auto& b) {
    return delta_distance(a, b);
  });
}

/// 1 - cos of the z-score vectors.
inline DistanceMatrix cosine_delta(const FeatureMatrix& f) {
  return detail::pairwise(zscore(f), [](const auto& a, const auto& b) {
    return cosine_distance(a, b);
  });
}

enum class DistanceKind { delta, cosine };

inline DistanceKind parse_distance_kind(std::string_view s) {
  if (s == "delta" || s == "burrows") return DistanceKind::delta;
  if (s == "cosine") return DistanceKind::cosine;
  throw InvalidArgument("unknown distance '" + std::string(s) + "'");
}

inline std::string_view to_string(DistanceKind k) {
  return k == DistanceKind::delta ? "delta" : "cosine";
}

inline DistanceMatrix distance(const FeatureMatrix& f, DistanceKind k) {
  return k == DistanceKind::delta ? burrows_delta(f) : cosine_delta(f);
}

}  // namespace stylogen
