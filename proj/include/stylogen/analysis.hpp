#pragma once

// Word preference/avoidance between two text sets, lexicon-based sentiment
// traces, and the wordness of character-model output.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stylogen/corpus.hpp"
#include "stylogen/stylometry.hpp"

namespace stylogen {

struct PreferenceEntry {
  std::string word;
  std::uint64_t count_a = 0;
  std::uint64_t count_b = 0;
  double score = 0.0;
  bool in_seed = false;
};

struct PreferenceReport {
  double alpha = 0.5;
  std::uint64_t total_a = 0;
  std::uint64_t total_b = 0;
  std::size_t union_size = 0;
  /// Sorted by descending score, ties by word.
  std::vector<PreferenceEntry> entries;

  std::vector<PreferenceEntry> preferred(std::size_t k) const {
    return {entries.begin(),
            entries.begin() + static_cast<std::ptrdiff_t>(std::min(k, entries.size()))};
  }
  std::vector<PreferenceEntry> avoided(std::size_t k) const {
    std::vector<PreferenceEntry> out(entries.rbegin(),
                                     entries.rbegin() + static_cast<std::ptrdiff_t>(
                                                            std::min(k, entries.size())));
    return out;
  }
  const PreferenceEntry* find(std::string_view w) const {
    for (const auto& e : entries)
      if (e.word == w) return &e;
    return nullptr;
  }

  std::string to_csv() const {
    std::string out = "word,count_a,count_b,score,in_seed\n";
    for (const auto& e : entries)
      out += csv_escape(e.word) + "," + std::to_string(e.count_a) + "," +
             std::to_string(e.count_b) + "," + format_double(e.score) + "," +
             (e.in_seed ? "true" : "false") + "\n";
    return out;
  }
};

/// score(w) = log2 of the ratio of alpha-smoothed relative frequencies of w
/// in set A and set B, over the union vocabulary of both sets. Each word is
/// flagged if it occurs anywhere in `seed_texts`.
inline PreferenceReport preference(std::span<const TextSample> set_a,
                                   std::span<const TextSample> set_b,
                                   std::span<const TextSample> seed_texts,
                                   double alpha = 0.5) {
  if (set_a.empty() || set_b.empty()) throw InvalidArgument("preference: empty text set");
  if (!(alpha > 0.0)) throw InvalidArgument("preference: alpha must be > 0");
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> counts;
  PreferenceReport r;
  r.alpha = alpha;
  for (const auto& d : set_a)
    for (const auto& w : d.words) {
      ++counts[w].first;
      ++r.total_a;
    }
  for (const auto& d : set_b)
    for (const auto& w : d.words) {
      ++counts[w].second;
      ++r.total_b;
    }
  if (r.total_a == 0 || r.total_b == 0) throw InvalidArgument("preference: empty text set");
  std::unordered_set<std::string> seed_words;
  for (const auto& d : seed_texts) seed_words.insert(d.words.begin(), d.words.end());

  r.union_size = counts.size();
  const double U = static_cast<double>(r.union_size);
  const double den_a = static_cast<double>(r.total_a) + alpha * U;
  const double den_b = static_cast<double>(r.total_b) + alpha * U;
  for (const auto& [w, c] : counts) {
    PreferenceEntry e;
    e.word = w;
    e.count_a = c.first;
    e.count_b = c.second;
    e.score = std::log2(((static_cast<double>(c.first) + alpha) / den_a) /
                        ((static_cast<double>(c.second) + alpha) / den_b));
    e.in_seed = seed_words.count(w) > 0;
    r.entries.push_back(std::move(e));
  }
  std::stable_sort(r.entries.begin(), r.entries.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  return r;
}

using Lexicon = std::unordered_map<std::string, double>;

/// `word<TAB>value` lines; blank lines and lines starting with '#' are
/// skipped. Words are lowercased.
inline Lexicon parse_lexicon(std::string_view text) {
  Lexicon lex;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw FormatError("lexicon line " + std::to_string(line_no) + ": missing tab");
    const auto word = normalize(line.substr(0, tab));
    const double v = detail::parse_double(std::string(line.substr(tab + 1)));
    if (!std::isfinite(v))
      throw FormatError("lexicon line " + std::to_string(line_no) + ": non-finite value");
    lex[word] = v;
  }
  return lex;
}

inline Lexicon load_lexicon(const std::filesystem::path& path) {
  return parse_lexicon(read_text_file(path));
}

struct SentimentTrace {
  std::size_t window = 50;
  std::size_t stride = 25;
  std::vector<double> scores;
  double flux = 0.0;

  nlohmann::json to_json() const {
    return {{"window", window}, {"stride", stride}, {"scores", scores}, {"flux", flux}};
  }
};

/// Mean lexicon value per window of `w` words taken every `s` words (words
/// missing from the lexicon count as 0); flux is the mean absolute change
/// between consecutive window scores.
inline SentimentTrace sentiment_trace(std::span<const std::string> words,
                                      const Lexicon& lexicon, std::size_t w = 50,
                                      std::size_t s = 25) {
  if (w == 0 || s == 0 || s > w)
    throw InvalidArgument("sentiment_trace requires w >= 1 and 1 <= s <= w");
  if (words.size() < w)
    throw InvalidArgument("text has " + std::to_string(words.size()) +
                          " words, shorter than the sentiment window " + std::to_string(w));
  std::vector<double> value(words.size(), 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = lexicon.find(words[i]);
    if (it != lexicon.end()) value[i] = it->second;
  }
  SentimentTrace t;
  t.window = w;
  t.stride = s;
  for (std::size_t start = 0; start + w <= words.size(); start += s) {
    double sum = 0.0;
    for (std::size_t i = start; i < start + w; ++i) sum += value[i];
    t.scores.push_back(sum / static_cast<double>(w));
  }
  if (t.scores.size() > 1) {
    double f = 0.0;
    for (std::size_t i = 1; i < t.scores.size(); ++i) f += std::abs(t.scores[i] - t.scores[i - 1]);
    t.flux = f / static_cast<double>(t.scores.size() - 1);
  }
  return t;
}

inline SentimentTrace sentiment_trace(std::string_view text, const Lexicon& lexicon,
                                      std::size_t w = 50, std::size_t s = 25) {
  const auto words = stylometric_words(text);
  return sentiment_trace(std::span<const std::string>(words), lexicon, w, s);
}

using WordSet = std::unordered_set<std::string>;

/// Edge-punctuation-stripped tokens of a word vocabulary, excluding the OOV
/// marker.
inline WordSet word_set(const Vocabulary& vocab) {
  WordSet out;
  for (std::size_t i = 1; i < vocab.size(); ++i) {
    auto w = strip_edge_punct(vocab.token(static_cast<TokenId>(i)));
    if (!w.empty()) out.insert(std::move(w));
  }
  return out;
}

/// Fraction of whitespace-delimited chunks that are known words after
/// lowercasing and edge-punctuation stripping. A text without chunks scores 0.
inline double wordness(std::string_view text, const WordSet& words) {
  const auto chunks = tokenize_words(normalize(text));
  if (chunks.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& c : chunks)
    if (words.count(strip_edge_punct(c))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(chunks.size());
}

inline double wordness(std::string_view text, const Vocabulary& vocab) {
  return wordness(text, word_set(vocab));
}

}  // namespace stylogen
