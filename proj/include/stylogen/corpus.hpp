#pragma once

// Corpus ingestion: normalization, word/char tokenization, vocabularies,
// shuffle augmentation and (context, next-token) training windows.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stylogen/common.hpp"

namespace stylogen {

enum class TokenMode { word, character };

inline std::string_view to_string(TokenMode m) {
  return m == TokenMode::word ? "word" : "char";
}

inline TokenMode parse_token_mode(std::string_view s) {
  if (s == "word") return TokenMode::word;
  if (s == "char" || s == "character") return TokenMode::character;
  throw InvalidArgument("unknown token mode '" + std::string(s) + "'");
}

/// Default context length: 30 words, or 60 characters.
inline std::size_t default_window(TokenMode m) {
  return m == TokenMode::word ? 30 : 60;
}

// ---------------------------------------------------------------------------
// Text normalization

namespace detail {

inline bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

/// Byte length of the UTF-8 sequence introduced by lead byte `c` (1 for
/// stray continuation bytes so malformed input still advances).
inline std::size_t utf8_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) return 2;
  if ((c & 0xF0) == 0xE0) return 3;
  if ((c & 0xF8) == 0xF0) return 4;
  return 1;
}

}  // namespace detail

/// Lowercases ASCII letters, drops control characters, collapses whitespace
/// runs to one space and trims both ends.
inline std::string normalize(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < raw.size();) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (detail::is_space_byte(c)) {
      pending_space = !out.empty();
      ++i;
      continue;
    }
    if (c < 0x20 || c == 0x7F) {
      ++i;
      continue;
    }
    // C1 controls U+0080..U+009F are encoded as C2 80..C2 9F.
    if (c == 0xC2 && i + 1 < raw.size()) {
      const auto d = static_cast<unsigned char>(raw[i + 1]);
      if (d >= 0x80 && d <= 0x9F) {
        i += 2;
        continue;
      }
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    const std::size_t len = std::min(detail::utf8_length(c), raw.size() - i);
    if (len == 1) {
      out.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c));
    } else {
      out.append(raw.substr(i, len));
    }
    i += len;
  }
  return out;
}

/// Splits normalized text on spaces. Punctuation stays attached to its word
/// unless `split_punct` is set, in which case leading and trailing
/// punctuation characters become tokens of their own.
inline std::vector<std::string> tokenize_words(std::string_view text,
                                               bool split_punct = false) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) {
      std::string_view word = text.substr(i, j - i);
      if (!split_punct) {
        tokens.emplace_back(word);
      } else {
        std::size_t b = 0;
        std::size_t e = word.size();
        while (b < e && is_ascii_punct(static_cast<unsigned char>(word[b]))) {
          tokens.emplace_back(1, word[b]);
          ++b;
        }
        std::size_t tail = e;
        while (tail > b &&
               is_ascii_punct(static_cast<unsigned char>(word[tail - 1])))
          --tail;
        if (tail > b) tokens.emplace_back(word.substr(b, tail - b));
        for (std::size_t k = tail; k < e; ++k) tokens.emplace_back(1, word[k]);
      }
    }
    i = j;
  }
  return tokens;
}

/// One token per Unicode scalar value, spaces and punctuation included.
inline std::vector<std::string> tokenize_chars(std::string_view text) {
  std::vector<std::string> tokens;
  tokens.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t len = std::min(
        detail::utf8_length(static_cast<unsigned char>(text[i])),
        text.size() - i);
    tokens.emplace_back(text.substr(i, len));
    i += len;
  }
  return tokens;
}

inline std::vector<std::string> tokenize(std::string_view normalized,
                                         TokenMode mode,
                                         bool split_punct = false) {
  return mode == TokenMode::word ? tokenize_words(normalized, split_punct)
                                 : tokenize_chars(normalized);
}

/// Inverse of tokenization: words are joined with single spaces, characters
/// are concatenated.
inline std::string detokenize(std::span<const std::string> tokens,
                              TokenMode mode) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (mode == TokenMode::word && i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Documents

struct Document {
  std::string id;
  std::string raw;
  std::vector<std::string> tokens;
};

inline Document make_document(std::string id, std::string raw,
                              TokenMode mode = TokenMode::word,
                              bool split_punct = false) {
  Document d{std::move(id), std::move(raw), {}};
  d.tokens = tokenize(normalize(d.raw), mode, split_punct);
  return d;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Reads every `.txt` file in `dir` (non-recursive) as one document whose id
/// is the file stem. Documents are returned sorted by id.
inline std::vector<Document> load_corpus(const std::filesystem::path& dir,
                                         TokenMode mode = TokenMode::word,
                                         bool split_punct = false) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw InvalidArgument("corpus directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  docs.reserve(files.size());
  for (const auto& f : files) {
    docs.push_back(
        make_document(f.stem().string(), read_text_file(f), mode, split_punct));
    if (docs.back().tokens.empty()) warn("document '" + docs.back().id + "' is empty");
  }
  if (docs.empty())
    throw InvalidArgument("no .txt documents in " + dir.string());
  return docs;
}

/// Loads a single file, or every document of a directory.
inline std::vector<Document> load_documents(const std::filesystem::path& path,
                                            TokenMode mode = TokenMode::word,
                                            bool split_punct = false) {
  if (std::filesystem::is_directory(path))
    return load_corpus(path, mode, split_punct);
  return {make_document(path.stem().string(), read_text_file(path), mode,
                        split_punct)};
}

// ---------------------------------------------------------------------------
// Vocabulary

/// Dense token <-> id map. Id 0 is always the OOV sentinel; the remaining
/// entries are sorted by descending count, then bytewise by token.
class Vocabulary {
 public:
  static constexpr std::string_view kOov = "<unk>";
  static constexpr TokenId kOovId = 0;

  struct Entry {
    std::string token;
    std::uint64_t count = 0;
    bool operator==(const Entry&) const = default;
  };

  Vocabulary() : Vocabulary(TokenMode::word) {}
  explicit Vocabulary(TokenMode mode) : mode_(mode) {
    entries_.push_back({std::string(kOov), 0});
  }

  /// Builds from explicit entries; entries[0] must be the sentinel.
  Vocabulary(TokenMode mode, std::vector<Entry> entries)
      : mode_(mode), entries_(std::move(entries)) {
    if (entries_.empty() || entries_.front().token != kOov)
      throw FormatError("vocabulary must start with the " + std::string(kOov) +
                        " sentinel");
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      if (entries_[i].count < 1)
        throw FormatError("vocabulary entry '" + entries_[i].token +
                          "' has zero count");
      if (!index_.emplace(entries_[i].token, static_cast<TokenId>(i)).second ||
          entries_[i].token == kOov)
        throw FormatError("duplicate vocabulary token '" + entries_[i].token +
                          "'");
    }
  }

  TokenMode mode() const { return mode_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  bool contains(std::string_view token) const {
    return index_.find(std::string(token)) != index_.end();
  }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kOovId : it->second;
  }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entries_.size())
      throw InvalidArgument("token id " + std::to_string(id) + " out of range");
    return entries_[static_cast<std::size_t>(id)].token;
  }

  std::uint64_t count(TokenId id) const {
    return entries_.at(static_cast<std::size_t>(id)).count;
  }

  /// Maps tokens to ids; unknown tokens become kOovId and are tallied in
  /// `oov_count` when given.
  std::vector<TokenId> encode(std::span<const std::string> tokens,
                              std::size_t* oov_count = nullptr) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    std::size_t oov = 0;
    for (const auto& t : tokens) {
      ids.push_back(id(t));
      if (ids.back() == kOovId) ++oov;
    }
    if (oov_count) *oov_count = oov;
    return ids;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (auto i : ids) tokens.push_back(token(i));
    return tokens;
  }

  /// `token<TAB>count` per line; line index = id.
  std::string serialize() const {
    std::string out;
    for (const auto& e : entries_) {
      out += e.token;
      out.push_back('\t');
      out += std::to_string(e.count);
      out.push_back('\n');
    }
    return out;
  }

  static Vocabulary parse(std::string_view text, TokenMode mode) {
    std::vector<Entry> entries;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      std::size_t nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      const std::size_t tab = line.rfind('\t');
      if (tab == std::string_view::npos)
        throw FormatError("vocabulary line " + std::to_string(line_no) +
                          " has no tab");
      Entry e{std::string(line.substr(0, tab)), 0};
      try {
        e.count = std::stoull(std::string(line.substr(tab + 1)));
      } catch (const std::exception&) {
        throw FormatError("vocabulary line " + std::to_string(line_no) +
                          " has a bad count");
      }
      entries.push_back(std::move(e));
    }
    return Vocabulary(mode, std::move(entries));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << serialize();
  }

  static Vocabulary load(const std::filesystem::path& path,
                         TokenMode mode = TokenMode::word) {
    return parse(read_text_file(path), mode);
  }

  bool operator==(const Vocabulary& o) const {
    return mode_ == o.mode_ && entries_ == o.entries_;
  }

 private:
  TokenMode mode_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Counts tokens over all documents, keeping those with count >= min_count.
/// Dropped tokens are tallied on the sentinel entry.
inline Vocabulary build_vocabulary(std::span<const Document> docs,
                                   TokenMode mode, std::uint64_t min_count = 1) {
  if (docs.empty()) throw InvalidArgument("build_vocabulary: no documents");
  std::unordered_map<std::string, std::uint64_t> counts;
  std::size_t total = 0;
  for (const auto& d : docs) {
    for (const auto& t : d.tokens) ++counts[t];
    total += d.tokens.size();
  }
  if (total == 0) throw InvalidArgument("empty corpus");
  std::vector<Vocabulary::Entry> kept;
  std::uint64_t dropped = 0;
  for (auto& [tok, c] : counts) {
    if (c >= std::max<std::uint64_t>(min_count, 1) && tok != Vocabulary::kOov)
      kept.push_back({tok, c});
    else
      dropped += c;
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.count != b.count ? a.count > b.count : a.token < b.token;
  });
  kept.insert(kept.begin(), {std::string(Vocabulary::kOov), dropped});
  return Vocabulary(mode, std::move(kept));
}

// ---------------------------------------------------------------------------
// Shuffle augmentation

enum class ShuffleUnit { sentence, line };

inline ShuffleUnit parse_shuffle_unit(std::string_view s) {
  if (s == "sentence") return ShuffleUnit::sentence;
  if (s == "line") return ShuffleUnit::line;
  throw InvalidArgument("unknown shuffle unit '" + std::string(s) + "'");
}

/// Splits a document into shuffle units, each as normalized text.
/// A sentence is a maximal run of words ending in a word whose final
/// character (ignoring closing quotes/brackets) is . ! or ?
inline std::vector<std::string> shuffle_units(std::string_view raw,
                                              ShuffleUnit unit) {
  std::vector<std::string> units;
  if (unit == ShuffleUnit::line) {
    std::size_t pos = 0;
    while (pos <= raw.size()) {
      std::size_t nl = raw.find('\n', pos);
      if (nl == std::string_view::npos) nl = raw.size();
      auto line = normalize(raw.substr(pos, nl - pos));
      if (!line.empty()) units.push_back(std::move(line));
      pos = nl + 1;
    }
    return units;
  }
  const auto words = tokenize_words(normalize(raw));
  std::string current;
  for (const auto& w : words) {
    if (!current.empty()) current.push_back(' ');
    current += w;
    std::size_t e = w.size();
    while (e > 0 && (w[e - 1] == '\'' || w[e - 1] == '"' || w[e - 1] == ')' ||
                     w[e - 1] == ']'))
      --e;
    if (e > 0 && (w[e - 1] == '.' || w[e - 1] == '!' || w[e - 1] == '?')) {
      units.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) units.push_back(std::move(current));
  return units;
}

/// Returns `copies` documents, each a random permutation of the original's
/// units. Deterministic given rng_seed.
inline std::vector<Document> shuffle_augment(const Document& doc,
                                             std::size_t copies,
                                             ShuffleUnit unit,
                                             std::uint64_t rng_seed,
                                             TokenMode mode = TokenMode::word,
                                             bool split_punct = false) {
  std::vector<Document> out;
  if (copies == 0) return out;
  auto units = shuffle_units(doc.raw, unit);
  if (units.size() <= 1)
    warn("document '" + doc.id +
         "' has a single shuffle unit; augmented copies are identical");
  Rng rng(rng_seed);
  out.reserve(copies);
  for (std::size_t c = 0; c < copies; ++c) {
    auto perm = units;
    rng.shuffle(perm.begin(), perm.end());
    std::string text;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      if (i) text.push_back(' ');
      text += perm[i];
    }
    Document d;
    d.id = doc.id + "#shuf" + std::to_string(c);
    d.tokens = tokenize(text, mode, split_punct);
    d.raw = std::move(text);
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training windows

/// A (context, next-token) pair viewing storage owned by a WindowSet.
struct TrainingWindow {
  std::span<const TokenId> context;
  TokenId target = 0;
};

/// Owns encoded sequences and the stride-1 windows cut from them.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(const WindowSet&) = delete;
  WindowSet& operator=(const WindowSet&) = delete;
  WindowSet(WindowSet&&) noexcept = default;
  WindowSet& operator=(WindowSet&&) noexcept = default;

  /// Every run of n+1 consecutive ids yields one window. Sequences of length
  /// <= n are skipped with a warning.
  static WindowSet from_sequences(std::vector<std::vector<TokenId>> sequences,
                                  std::size_t n,
                                  std::span<const std::string> names = {}) {
    if (n == 0) throw InvalidArgument("window length must be positive");
    WindowSet ws;
    ws.n_ = n;
    ws.sequences_ = std::move(sequences);
    for (std::size_t s = 0; s < ws.sequences_.size(); ++s) {
      const auto& seq = ws.sequences_[s];
      if (seq.size() <= n) {
        const std::string name =
            s < names.size() ? names[s] : "#" + std::to_string(s);
        warn("document '" + name + "' has " + std::to_string(seq.size()) +
             " tokens, fewer than window+1 = " + std::to_string(n + 1) +
             "; skipped");
        continue;
      }
      for (std::size_t off = 0; off + n < seq.size(); ++off) {
        ws.windows_.push_back(
            {std::span<const TokenId>(seq.data() + off, n), seq[off + n]});
      }
    }
    if (ws.windows_.empty()) throw InvalidArgument("no training windows");
    return ws;
  }

  std::size_t window_length() const { return n_; }
  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }
  const TrainingWindow& operator[](std::size_t i) const { return windows_[i]; }
  const std::vector<TrainingWindow>& windows() const { return windows_; }
  auto begin() const { return windows_.begin(); }
  auto end() const { return windows_.end(); }
  const std::vector<std::vector<TokenId>>& sequences() const {
    return sequences_;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<TokenId>> sequences_;
  std::vector<TrainingWindow> windows_;
};

/// Encodes each document with `vocab` and cuts windows of context length n.
inline WindowSet windowize(std::span<const Document> docs,
                           const Vocabulary& vocab, std::size_t n) {
  std::vector<std::vector<TokenId>> seqs;
  std::vector<std::string> names;
  seqs.reserve(docs.size());
  for (const auto& d : docs) {
    seqs.push_back(vocab.encode(d.tokens));
    names.push_back(d.id);
  }
  return WindowSet::from_sequences(std::move(seqs), n, names);
}

}  // namespace stylogen
