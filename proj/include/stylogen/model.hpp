#pragma once

#include <span>
#include <string>
#include <vector>

#include "stylogen/common.hpp"

namespace stylogen {

/// Common contract of every next-token predictor: a fixed-length context of
/// token ids in, a probability distribution over the vocabulary out.
/// Implementations are immutable once built and safe for concurrent reads.
class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;

  /// Context length the model expects (n).
  virtual std::size_t window() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> next_distribution(
      std::span<const TokenId> context) const = 0;
  /// Short label recorded in generation records.
  virtual std::string model_id() const = 0;
};

}  // namespace stylogen
