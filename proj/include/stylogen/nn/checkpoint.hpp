#pragma once

// Checkpoint file layout (all integers little-endian):
//   "SGCK" | u32 version | u32 json_length | json bytes | u64 weight_count |
//   weight_count x f32
// The JSON blob holds the model spec, the vocabulary and training metadata.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "stylogen/corpus.hpp"
#include "stylogen/model.hpp"
#include "stylogen/nn/network.hpp"
#include "stylogen/nn/spec.hpp"

namespace stylogen::nn {

struct TrainingMetadata {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::uint64_t windows_seen = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},           {"step", step},
            {"windows_seen", windows_seen}, {"train_loss", train_loss},
            {"test_loss", test_loss},   {"test_accuracy", test_accuracy}};
  }
  static TrainingMetadata from_json(const nlohmann::json& j) {
    TrainingMetadata m;
    m.epoch = j.at("epoch");
    m.step = j.at("step");
    m.windows_seen = j.at("windows_seen");
    m.train_loss = j.at("train_loss");
    m.test_loss = j.at("test_loss");
    m.test_accuracy = j.at("test_accuracy");
    return m;
  }
  bool operator==(const TrainingMetadata&) const = default;
};

inline nlohmann::json vocabulary_to_json(const Vocabulary& v) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : v.entries())
    entries.push_back(nlohmann::json::array({e.token, e.count}));
  return {{"mode", std::string(to_string(v.mode()))}, {"entries", entries}};
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  std::vector<Vocabulary::Entry> entries;
  for (const auto& e : j.at("entries"))
    entries.push_back({e.at(0).get<std::string>(), e.at(1).get<std::uint64_t>()});
  return Vocabulary(parse_token_mode(j.at("mode").get<std::string>()),
                    std::move(entries));
}

struct Checkpoint {
  static constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};
  static constexpr std::uint32_t kVersion = 1;

  ModelSpec spec;
  Vocabulary vocab;
  std::vector<float> weights;
  TrainingMetadata meta;

  /// Content hash; stable across save/load.
  std::string id() const { return hex64(fnv1a64(serialize())); }

  std::string serialize() const {
    if (weights.size() != spec.parameter_count())
      throw InvalidArgument("checkpoint weight count does not match spec");
    const nlohmann::json j = {{"spec", spec.to_json()},
                              {"vocabulary", vocabulary_to_json(vocab)},
                              {"metadata", meta.to_json()}};
    const std::string blob =
        j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out += blob;
    put_u64(out, weights.size());
    out.reserve(out.size() + weights.size() * 4);
    for (float w : weights) put_u32(out, std::bit_cast<std::uint32_t>(w));
    return out;
  }

  static Checkpoint parse(std::string_view bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
      throw FormatError("not a checkpoint (bad magic)");
    pos = 4;
    const auto version = get_u32(bytes, pos);
    if (version != kVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto len = get_u32(bytes, pos);
    if (pos + len > bytes.size()) throw FormatError("truncated checkpoint header");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.substr(pos, len));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    pos += len;
    Checkpoint ck;
    ck.spec = ModelSpec::from_json(j.at("spec"));
    ck.vocab = vocabulary_from_json(j.at("vocabulary"));
    ck.meta = TrainingMetadata::from_json(j.at("metadata"));
    const auto count = get_u64(bytes, pos);
    if (count != ck.spec.parameter_count())
      throw FormatError("checkpoint weight count does not match spec");
    if (bytes.size() - pos != count * 4)
      throw FormatError("checkpoint weight payload has wrong length");
    ck.weights.resize(count);
    for (auto& w : ck.weights) w = std::bit_cast<float>(get_u32(bytes, pos));
    return ck;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    const auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  static Checkpoint load(const std::filesystem::path& path) {
    return parse(read_text_file(path));
  }

 private:
  static void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static std::uint32_t get_u32(std::string_view s, std::size_t& pos) {
    if (pos + 4 > s.size()) throw FormatError("truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  static std::uint64_t get_u64(std::string_view s, std::size_t& pos) {
    if (pos + 8 > s.size()) throw FormatError("truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
};

/// A trained network exposed through the NextTokenModel contract.
class NeuralModel final : public NextTokenModel {
 public:
  explicit NeuralModel(const Checkpoint& ck)
      : net_(ck.spec), id_("nn-" + ck.id()) {
    net_.set_parameters(ck.weights);
  }
  explicit NeuralModel(Network<float> net, std::string id = "nn")
      : net_(std::move(net)), id_(std::move(id)) {}

  std::size_t window() const override { return net_.window(); }
  std::size_t vocab_size() const override { return net_.vocab_size(); }
  std::vector<double> next_distribution(
      std::span<const TokenId> context) const override {
    return net_.forward(context);
  }
  std::string model_id() const override { return id_; }
  const Network<float>& network() const { return net_; }

 private:
  Network<float> net_;
  std::string id_;
};

}  // namespace stylogen::nn
