#pragma once

// Declarative model description: an ordered list of layer descriptors that
// is validated for shape compatibility and serialized into checkpoints.

#include <algorithm>
#include <array>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "stylogen/common.hpp"

namespace stylogen::nn {

enum class LayerKind {
  embedding,
  gated_recurrent,
  dilated_causal_conv,
  max_pool,
  flatten,
  dense,
  dropout,
  softmax_output
};

enum class Activation { linear, relu, tanh };
enum class CellType { gru, lstm };

inline constexpr std::array<std::size_t, 6> kAllowedDilations = {1, 2, 4, 8,
                                                                 16, 32};

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::embedding: return "embedding";
    case LayerKind::gated_recurrent: return "gated_recurrent";
    case LayerKind::dilated_causal_conv: return "dilated_causal_conv";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax_output: return "softmax_output";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::embedding, LayerKind::gated_recurrent,
                 LayerKind::dilated_causal_conv, LayerKind::max_pool,
                 LayerKind::flatten, LayerKind::dense, LayerKind::dropout,
                 LayerKind::softmax_output})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown layer type '" + s + "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw InvalidArgument("unknown activation '" + s + "'");
}

inline std::string to_string(CellType c) {
  return c == CellType::gru ? "gru" : "lstm";
}

inline CellType parse_cell(const std::string& s) {
  if (s == "gru") return CellType::gru;
  if (s == "lstm") return CellType::lstm;
  throw InvalidArgument("unknown recurrent cell '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  /// Embedding dim, recurrent units, conv filters, dense units or V.
  std::size_t units = 0;
  std::size_t kernel = 1;
  std::size_t dilation = 1;
  std::size_t width = 2;
  double rate = 0.0;
  Activation activation = Activation::linear;
  CellType cell = CellType::gru;

  static LayerSpec embedding(std::size_t dim) {
    return {.kind = LayerKind::embedding, .units = dim};
  }
  static LayerSpec gated_recurrent(std::size_t units, CellType cell) {
    return {.kind = LayerKind::gated_recurrent, .units = units, .cell = cell};
  }
  static LayerSpec conv(std::size_t filters, std::size_t kernel,
                        std::size_t dilation,
                        Activation act = Activation::relu) {
    return {.kind = LayerKind::dilated_causal_conv,
            .units = filters,
            .kernel = kernel,
            .dilation = dilation,
            .activation = act};
  }
  static LayerSpec max_pool(std::size_t width) {
    return {.kind = LayerKind::max_pool, .width = width};
  }
  static LayerSpec flatten() { return {.kind = LayerKind::flatten}; }
  static LayerSpec dense(std::size_t units, Activation act) {
    return {.kind = LayerKind::dense, .units = units, .activation = act};
  }
  static LayerSpec dropout(double rate) {
    return {.kind = LayerKind::dropout, .rate = rate};
  }
  static LayerSpec softmax_output(std::size_t vocab) {
    return {.kind = LayerKind::softmax_output, .units = vocab};
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"type", to_string(kind)}};
    switch (kind) {
      case LayerKind::embedding: j["dim"] = units; break;
      case LayerKind::gated_recurrent:
        j["units"] = units;
        j["cell"] = to_string(cell);
        break;
      case LayerKind::dilated_causal_conv:
        j["filters"] = units;
        j["kernel"] = kernel;
        j["dilation"] = dilation;
        j["activation"] = to_string(activation);
        break;
      case LayerKind::max_pool: j["width"] = width; break;
      case LayerKind::flatten: break;
      case LayerKind::dense:
        j["units"] = units;
        j["activation"] = to_string(activation);
        break;
      case LayerKind::dropout: j["rate"] = rate; break;
      case LayerKind::softmax_output: j["units"] = units; break;
    }
    return j;
  }

  static LayerSpec from_json(const nlohmann::json& j) {
    LayerSpec l;
    l.kind = parse_layer_kind(j.at("type").get<std::string>());
    switch (l.kind) {
      case LayerKind::embedding: l.units = j.at("dim"); break;
      case LayerKind::gated_recurrent:
        l.units = j.at("units");
        l.cell = parse_cell(j.value("cell", "gru"));
        break;
      case LayerKind::dilated_causal_conv:
        l.units = j.at("filters");
        l.kernel = j.at("kernel");
        l.dilation = j.value("dilation", std::size_t{1});
        l.activation = parse_activation(j.value("activation", "relu"));
        break;
      case LayerKind::max_pool: l.width = j.at("width"); break;
      case LayerKind::flatten: break;
      case LayerKind::dense:
        l.units = j.at("units");
        l.activation = parse_activation(j.value("activation", "linear"));
        break;
      case LayerKind::dropout: l.rate = j.at("rate"); break;
      case LayerKind::softmax_output: l.units = j.at("units"); break;
    }
    return l;
  }

  bool operator==(const LayerSpec&) const = default;
};

/// Activation shape of one sample: a [time x channels] sequence when
/// `time > 0`, otherwise a flat vector of `channels` features.
struct Shape {
  std::size_t time = 0;
  std::size_t channels = 0;
  std::size_t size() const { return time == 0 ? channels : time * channels; }
  bool is_sequence() const { return time > 0; }
  bool operator==(const Shape&) const = default;
};

struct LayerLayout {
  Shape input;
  Shape output;
  std::size_t param_offset = 0;
  std::size_t param_count = 0;
};

struct ModelSpec {
  std::size_t vocab_size = 0;
  std::size_t context_length = 0;
  std::vector<LayerSpec> layers;

  /// Checks chain compatibility and returns per-layer shapes and parameter
  /// ranges.
  std::vector<LayerLayout> layout() const {
    if (vocab_size < 2) throw InvalidArgument("model: vocabulary size < 2");
    if (context_length == 0) throw InvalidArgument("model: context length 0");
    if (layers.size() < 2) throw InvalidArgument("model: too few layers");
    if (layers.front().kind != LayerKind::embedding)
      throw InvalidArgument("model: first layer must be embedding");
    if (layers.back().kind != LayerKind::softmax_output)
      throw InvalidArgument("model: last layer must be softmax_output");
    std::vector<LayerLayout> out;
    Shape cur{context_length, 1};
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const std::string where =
          "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
      LayerLayout lay;
      lay.input = cur;
      lay.param_offset = offset;
      switch (l.kind) {
        case LayerKind::embedding:
          if (i != 0) throw InvalidArgument(where + ": must be first");
          if (l.units == 0) throw InvalidArgument(where + ": zero dim");
          lay.output = {context_length, l.units};
          lay.param_count = vocab_size * l.units;
          break;
        case LayerKind::gated_recurrent: {
          if (!cur.is_sequence())
            throw InvalidArgument(where + ": needs a sequence input");
          if (l.units == 0) throw InvalidArgument(where + ": zero units");
          const std::size_t gates = l.cell == CellType::gru ? 3 : 4;
          lay.output = {0, l.units};
          lay.param_count =
              gates * (cur.channels * l.units + l.units * l.units + l.units);
          break;
        }
        case LayerKind::dilated_causal_conv: {
          if (!cur.is_sequence())
            throw InvalidArgument(where + ": needs a sequence input");
          if (l.units == 0 || l.kernel == 0)
            throw InvalidArgument(where + ": zero filters or kernel");
          if (std::find(kAllowedDilations.begin(), kAllowedDilations.end(),
                        l.dilation) == kAllowedDilations.end())
            throw InvalidArgument(where + ": dilation must be one of 1,2,4,8,16,32");
          if (l.dilation * (l.kernel - 1) >= cur.time)
            throw InvalidArgument(where + ": receptive field exceeds window");
          lay.output = {cur.time, l.units};
          lay.param_count = l.kernel * cur.channels * l.units + l.units;
          break;
        }
        case LayerKind::max_pool:
          if (!cur.is_sequence())
            throw InvalidArgument(where + ": needs a sequence input");
          if (l.width == 0 || cur.time / l.width == 0)
            throw InvalidArgument(where + ": pool width exceeds sequence");
          lay.output = {cur.time / l.width, cur.channels};
          break;
        case LayerKind::flatten:
          lay.output = {0, cur.size()};
          break;
        case LayerKind::dense:
          if (cur.is_sequence())
            throw InvalidArgument(where + ": needs a flat input (add flatten)");
          if (l.units == 0) throw InvalidArgument(where + ": zero units");
          lay.output = {0, l.units};
          lay.param_count = cur.channels * l.units + l.units;
          break;
        case LayerKind::dropout:
          if (!(l.rate >= 0.0 && l.rate < 1.0))
            throw InvalidArgument(where + ": rate must be in [0,1)");
          lay.output = cur;
          break;
        case LayerKind::softmax_output:
          if (i + 1 != layers.size())
            throw InvalidArgument(where + ": must be last");
          if (cur.is_sequence())
            throw InvalidArgument(where + ": needs a flat input (add flatten)");
          if (l.units != vocab_size)
            throw InvalidArgument(where + ": units must equal vocabulary size");
          lay.output = {0, vocab_size};
          lay.param_count = cur.channels * vocab_size + vocab_size;
          break;
      }
      offset += lay.param_count;
      cur = lay.output;
      out.push_back(lay);
    }
    return out;
  }

  std::size_t parameter_count() const {
    const auto lay = layout();
    return lay.back().param_offset + lay.back().param_count;
  }

  nlohmann::json to_json() const {
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : layers) ls.push_back(l.to_json());
    return {{"vocab_size", vocab_size},
            {"context_length", context_length},
            {"layers", std::move(ls)}};
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.vocab_size = j.at("vocab_size");
    s.context_length = j.at("context_length");
    for (const auto& l : j.at("layers")) s.layers.push_back(LayerSpec::from_json(l));
    return s;
  }

  bool operator==(const ModelSpec&) const = default;
};

/// embedding(32) -> conv(32,k3,d1) -> dropout(.2) -> conv(32,k3,d2) ->
/// max_pool(2) -> flatten -> dense(64,relu) -> dropout(.2) -> softmax.
inline ModelSpec default_conv_spec(std::size_t vocab_size,
                                   std::size_t context_length) {
  return {vocab_size,
          context_length,
          {LayerSpec::embedding(32), LayerSpec::conv(32, 3, 1),
           LayerSpec::dropout(0.2), LayerSpec::conv(32, 3, 2),
           LayerSpec::max_pool(2), LayerSpec::flatten(),
           LayerSpec::dense(64, Activation::relu), LayerSpec::dropout(0.2),
           LayerSpec::softmax_output(vocab_size)}};
}

/// embedding(32) -> GRU(64) (or LSTM) -> softmax.
inline ModelSpec default_recurrent_spec(std::size_t vocab_size,
                                        std::size_t context_length,
                                        CellType cell = CellType::gru) {
  return {vocab_size,
          context_length,
          {LayerSpec::embedding(32), LayerSpec::gated_recurrent(64, cell),
           LayerSpec::softmax_output(vocab_size)}};
}

}  // namespace stylogen::nn
