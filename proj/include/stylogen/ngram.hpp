#pragma once

// Count-based next-token model with add-k smoothing. It is the baseline
// generator and the reference the neural models are checked against.

#include <map>
#include <optional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "stylogen/corpus.hpp"
#include "stylogen/model.hpp"

namespace stylogen {

class NgramModel final : public NextTokenModel {
 public:
  using Context = std::vector<TokenId>;
  using Successors = std::map<TokenId, std::uint64_t>;

  static constexpr int kFormatVersion = 1;

  NgramModel() = default;

  /// Tabulates (last `order` context tokens -> target) over all windows.
  static NgramModel fit(const WindowSet& windows, std::size_t order, double k,
                        std::size_t vocab_size) {
    if (windows.empty()) throw InvalidArgument("ngram fit: no windows");
    if (!(k > 0.0)) throw InvalidArgument("ngram fit: k must be > 0");
    if (order > windows.window_length())
      throw InvalidArgument("ngram fit: order exceeds window length");
    if (vocab_size == 0) throw InvalidArgument("ngram fit: empty vocabulary");
    NgramModel m;
    m.order_ = order;
    m.k_ = k;
    m.vocab_size_ = vocab_size;
    m.window_ = windows.window_length();
    for (const auto& w : windows) {
      if (w.target < 0 || static_cast<std::size_t>(w.target) >= vocab_size)
        throw InvalidArgument("ngram fit: target id out of range");
      Context key(w.context.end() - static_cast<std::ptrdiff_t>(order),
                  w.context.end());
      ++m.counts_[key][w.target];
    }
    for (const auto& [ctx, succ] : m.counts_) {
      std::uint64_t total = 0;
      for (const auto& [id, c] : succ) total += c;
      m.totals_[ctx] = total;
    }
    return m;
  }

  std::size_t order() const { return order_; }
  double k() const { return k_; }
  std::size_t window() const override { return window_; }
  std::size_t vocab_size() const override { return vocab_size_; }
  std::string model_id() const override {
    return "ngram-o" + std::to_string(order_) + "-" + hex64(fnv1a64(to_json().dump()));
  }

  const std::map<Context, Successors>& counts() const { return counts_; }

  std::uint64_t count(const Context& ctx, TokenId next) const {
    auto it = counts_.find(ctx);
    if (it == counts_.end()) return 0;
    auto jt = it->second.find(next);
    return jt == it->second.end() ? 0 : jt->second;
  }

  /// P(w) = (count(ctx -> w) + k) / (total(ctx) + kV).
  std::vector<double> next_distribution(
      std::span<const TokenId> context) const override {
    if (context.size() < order_)
      throw InvalidArgument("ngram: context shorter than model order");
    const double V = static_cast<double>(vocab_size_);
    Context key(context.end() - static_cast<std::ptrdiff_t>(order_),
                context.end());
    auto it = counts_.find(key);
    if (it == counts_.end()) return std::vector<double>(vocab_size_, 1.0 / V);
    const double total = static_cast<double>(totals_.at(key));
    const double denom = total + k_ * V;
    std::vector<double> p(vocab_size_, k_ / denom);
    for (const auto& [id, c] : it->second)
      p[static_cast<std::size_t>(id)] = (static_cast<double>(c) + k_) / denom;
    return p;
  }

  // Persistence: versioned JSON; context tuples are hyphen-joined ids
  // ("" for order 0). The vocabulary may be embedded so a model file is
  // usable on its own.

  nlohmann::json to_json(const Vocabulary* vocab = nullptr) const {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [ctx, succ] : counts_) {
      nlohmann::json inner = nlohmann::json::object();
      for (const auto& [id, c] : succ) inner[std::to_string(id)] = c;
      counts[join_key(ctx)] = std::move(inner);
    }
    nlohmann::json j = {{"format", "stylogen-ngram"},
                        {"version", kFormatVersion},
                        {"order", order_},
                        {"k", k_},
                        {"vocab_size", vocab_size_},
                        {"window", window_},
                        {"counts", std::move(counts)}};
    if (vocab) {
      j["token_mode"] = to_string(vocab->mode());
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& e : vocab->entries())
        entries.push_back(nlohmann::json::array({e.token, e.count}));
      j["vocabulary"] = std::move(entries);
    }
    return j;
  }

  static NgramModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "stylogen-ngram")
      throw FormatError("not an ngram model file");
    if (j.at("version").get<int>() != kFormatVersion)
      throw FormatError("unsupported ngram model version");
    NgramModel m;
    m.order_ = j.at("order").get<std::size_t>();
    m.k_ = j.at("k").get<double>();
    m.vocab_size_ = j.at("vocab_size").get<std::size_t>();
    m.window_ = j.value("window", m.order_);
    for (const auto& [key, inner] : j.at("counts").items()) {
      Context ctx = split_key(key);
      if (ctx.size() != m.order_)
        throw FormatError("ngram context '" + key + "' has wrong order");
      std::uint64_t total = 0;
      for (const auto& [id, c] : inner.items()) {
        const auto n = c.get<std::uint64_t>();
        m.counts_[ctx][static_cast<TokenId>(std::stol(id))] = n;
        total += n;
      }
      m.totals_[ctx] = total;
    }
    return m;
  }

  /// Vocabulary embedded by to_json, if present.
  static std::optional<Vocabulary> vocabulary_from_json(
      const nlohmann::json& j) {
    if (!j.contains("vocabulary")) return std::nullopt;
    std::vector<Vocabulary::Entry> entries;
    for (const auto& e : j.at("vocabulary"))
      entries.push_back({e.at(0).get<std::string>(), e.at(1).get<std::uint64_t>()});
    return Vocabulary(parse_token_mode(j.value("token_mode", "word")),
                      std::move(entries));
  }

  bool operator==(const NgramModel& o) const {
    return order_ == o.order_ && k_ == o.k_ && vocab_size_ == o.vocab_size_ &&
           window_ == o.window_ && counts_ == o.counts_;
  }

 private:
  static std::string join_key(const Context& ctx) {
    std::string s;
    for (std::size_t i = 0; i < ctx.size(); ++i) {
      if (i) s.push_back('-');
      s += std::to_string(ctx[i]);
    }
    return s;
  }

  static Context split_key(const std::string& key) {
    Context ctx;
    if (key.empty()) return ctx;
    std::size_t pos = 0;
    while (true) {
      const std::size_t dash = key.find('-', pos);
      ctx.push_back(static_cast<TokenId>(std::stol(key.substr(pos, dash - pos))));
      if (dash == std::string::npos) break;
      pos = dash + 1;
    }
    return ctx;
  }

  std::size_t order_ = 0;
  double k_ = 0.5;
  std::size_t vocab_size_ = 0;
  std::size_t window_ = 0;
  std::map<Context, Successors> counts_;
  std::map<Context, std::uint64_t> totals_;
};

}  // namespace stylogen
