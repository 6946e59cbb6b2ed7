#pragma once

// Seeded sliding-window text generation with a diversity (temperature)
// parameter. After each step the oldest context token is dropped and the
// newly sampled token appended, so the window length stays fixed.

#include <cmath>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stylogen/corpus.hpp"
#include "stylogen/model.hpp"

namespace stylogen {

/// q_i = p_i^(1/D) / sum_j p_j^(1/D), evaluated in log space. Zero entries
/// stay zero.
inline std::vector<double> apply_diversity(std::span<const double> p,
                                           double diversity) {
  if (!(diversity > 0.0) || !std::isfinite(diversity))
    throw InvalidArgument("diversity must be a positive finite number");
  std::vector<double> q(p.size(), 0.0);
  double mx = -INFINITY;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || !std::isfinite(p[i]))
      throw InvalidArgument("apply_diversity: invalid probability");
    total += p[i];
    if (p[i] > 0.0) {
      q[i] = std::log(p[i]) / diversity;
      mx = std::max(mx, q[i]);
    }
  }
  if (mx == -INFINITY) throw InvalidArgument("apply_diversity: all-zero distribution");
  if (std::abs(total - 1.0) > 1e-6)
    throw InvalidArgument("apply_diversity: probabilities sum to " +
                          std::to_string(total));
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = p[i] > 0.0 ? std::exp(q[i] - mx) : 0.0;
    sum += q[i];
  }
  for (auto& v : q) v /= sum;
  return q;
}

/// Inverse-CDF draw from a normalized distribution.
inline TokenId sample(std::span<const double> q, Rng& rng) {
  if (q.empty()) throw InvalidArgument("sample: empty distribution");
  const double u = rng.uniform01();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    cum += q[i];
    last_positive = i;
    if (u < cum) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_positive);
}

/// Uniformly random contiguous span of n tokens.
inline std::vector<std::string> select_seed(std::span<const std::string> tokens,
                                            std::size_t n, Rng& rng) {
  if (n == 0) throw InvalidArgument("seed length must be positive");
  if (tokens.size() < n)
    throw InvalidArgument("insufficient tokens for a seed: have " +
                          std::to_string(tokens.size()) + ", need " +
                          std::to_string(n));
  const auto start = rng.below(tokens.size() - n + 1);
  return {tokens.begin() + static_cast<std::ptrdiff_t>(start),
          tokens.begin() + static_cast<std::ptrdiff_t>(start + n)};
}

/// Uniform over every n-token span of every document.
inline std::vector<std::string> select_seed(std::span<const Document> docs,
                                            std::size_t n, Rng& rng) {
  std::uint64_t total = 0;
  for (const auto& d : docs)
    if (d.tokens.size() >= n) total += d.tokens.size() - n + 1;
  if (total == 0 || n == 0)
    throw InvalidArgument("insufficient tokens for a seed of length " +
                          std::to_string(n));
  auto pick = rng.below(total);
  for (const auto& d : docs) {
    if (d.tokens.size() < n) continue;
    const std::uint64_t spans = d.tokens.size() - n + 1;
    if (pick < spans) {
      const auto b = d.tokens.begin() + static_cast<std::ptrdiff_t>(pick);
      return {b, b + static_cast<std::ptrdiff_t>(n)};
    }
    pick -= spans;
  }
  throw InvalidArgument("select_seed: unreachable");
}

struct SelfSeed {};
struct ExternalSeed {
  std::string text;
  std::string label;
};
struct ExplicitSeed {
  std::vector<std::string> tokens;
};
using SeedSource = std::variant<SelfSeed, ExternalSeed, ExplicitSeed>;

struct GenerationConfig {
  double diversity = 1.0;
  std::size_t length = 1000;
  SeedSource seed = SelfSeed{};
  std::uint64_t rng_seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"diversity", diversity},
                        {"length", length},
                        {"rng_seed", rng_seed}};
    if (std::holds_alternative<SelfSeed>(seed)) {
      j["seed_source"] = "self";
    } else if (const auto* e = std::get_if<ExternalSeed>(&seed)) {
      j["seed_source"] = "external";
      j["seed_label"] = e->label;
    } else {
      j["seed_source"] = "explicit";
    }
    return j;
  }
};

struct GenerationRecord {
  GenerationConfig config;
  std::string model_id;
  std::vector<std::string> seed_tokens;
  std::vector<TokenId> seed_ids;
  std::size_t oov_substitutions = 0;
  std::vector<TokenId> emitted_ids;
  std::vector<std::string> emitted_tokens;
  std::string text;

  nlohmann::json to_json() const {
    return {{"config", config.to_json()},
            {"model", model_id},
            {"seed_tokens", seed_tokens},
            {"seed_ids", seed_ids},
            {"oov_substitutions", oov_substitutions},
            {"token_ids", emitted_ids},
            {"text", text}};
  }

  /// One line of a JSONL file.
  std::string to_jsonl() const {
    return to_json().dump(-1, ' ', false,
                          nlohmann::json::error_handler_t::replace) +
           "\n";
  }
};

/// Resolves the configured seed to exactly model.window() tokens. Self seeds
/// are drawn from `corpus`; external seeds from the supplied text.
inline std::vector<std::string> resolve_seed(const SeedSource& source,
                                             std::span<const Document> corpus,
                                             TokenMode mode, std::size_t n,
                                             Rng& rng) {
  if (std::holds_alternative<SelfSeed>(source)) {
    if (corpus.empty())
      throw InvalidArgument("self seeding needs the training corpus");
    return select_seed(corpus, n, rng);
  }
  if (const auto* e = std::get_if<ExternalSeed>(&source)) {
    const auto tokens = tokenize(normalize(e->text), mode);
    if (tokens.size() < n) throw InvalidArgument("seed too short");
    return select_seed(tokens, n, rng);
  }
  const auto& tokens = std::get<ExplicitSeed>(source).tokens;
  if (tokens.size() < n) throw InvalidArgument("seed too short");
  if (tokens.size() != n)
    throw InvalidArgument("explicit seed length " + std::to_string(tokens.size()) +
                          " != model window " + std::to_string(n));
  return tokens;
}

/// Runs the sliding-window loop for config.length steps. Unknown seed tokens
/// are replaced by the OOV id and counted.
inline GenerationRecord generate(const NextTokenModel& model,
                                 const Vocabulary& vocab,
                                 const GenerationConfig& config,
                                 std::span<const Document> corpus = {}) {
  if (model.vocab_size() != vocab.size())
    throw InvalidArgument("model vocabulary size " +
                          std::to_string(model.vocab_size()) +
                          " != vocabulary size " + std::to_string(vocab.size()));
  if (config.length == 0) throw InvalidArgument("generation length must be >= 1");
  if (!(config.diversity > 0.0)) throw InvalidArgument("diversity must be > 0");
  const std::size_t n = model.window();
  Rng rng(config.rng_seed);
  GenerationRecord rec;
  rec.config = config;
  rec.model_id = model.model_id();
  rec.seed_tokens = resolve_seed(config.seed, corpus, vocab.mode(), n, rng);
  rec.seed_ids = vocab.encode(rec.seed_tokens, &rec.oov_substitutions);

  std::vector<TokenId> window = rec.seed_ids;
  rec.emitted_ids.reserve(config.length);
  for (std::size_t step = 0; step < config.length; ++step) {
    const auto p = model.next_distribution(window);
    const auto q = apply_diversity(p, config.diversity);
    const TokenId t = sample(q, rng);
    rec.emitted_ids.push_back(t);
    window.erase(window.begin());
    window.push_back(t);
  }
  rec.emitted_tokens = vocab.decode(rec.emitted_ids);
  rec.text = detokenize(rec.emitted_tokens, vocab.mode());
  return rec;
}

}  // namespace stylogen
