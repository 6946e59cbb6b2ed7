#pragma once

// Mini-batch Adam training with a seeded train/test split and staged
// checkpoints. Single-threaded; identical inputs and seed give bitwise
// identical checkpoints.

#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <vector>

#include "stylogen/corpus.hpp"
#include "stylogen/nn/checkpoint.hpp"
#include "stylogen/nn/network.hpp"

namespace stylogen::nn {

struct TrainHyperparams {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double test_fraction = 0.1;
  /// Checkpoint after every this many epochs (0 = only initial and final).
  std::size_t checkpoint_every = 1;
  /// Extra checkpoints after these optimizer steps.
  std::vector<std::size_t> checkpoint_steps;
  std::uint64_t rng_seed = 0;
  /// Windows used for each train/test loss evaluation (0 = all).
  std::size_t eval_limit = 5000;
  /// Cap on training windows drawn per epoch (0 = all).
  std::size_t max_windows_per_epoch = 0;

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"beta1", beta1},
            {"beta2", beta2},
            {"epsilon", epsilon},
            {"test_fraction", test_fraction},
            {"checkpoint_every", checkpoint_every},
            {"checkpoint_steps", checkpoint_steps},
            {"rng_seed", rng_seed},
            {"eval_limit", eval_limit},
            {"max_windows_per_epoch", max_windows_per_epoch}};
  }

  static TrainHyperparams from_json(const nlohmann::json& j) {
    TrainHyperparams h;
    h.epochs = j.value("epochs", h.epochs);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.lr = j.value("lr", h.lr);
    h.beta1 = j.value("beta1", h.beta1);
    h.beta2 = j.value("beta2", h.beta2);
    h.epsilon = j.value("epsilon", h.epsilon);
    h.test_fraction = j.value("test_fraction", h.test_fraction);
    h.checkpoint_every = j.value("checkpoint_every", h.checkpoint_every);
    h.checkpoint_steps =
        j.value("checkpoint_steps", std::vector<std::size_t>{});
    h.rng_seed = j.value("rng_seed", h.rng_seed);
    h.eval_limit = j.value("eval_limit", h.eval_limit);
    h.max_windows_per_epoch =
        j.value("max_windows_per_epoch", h.max_windows_per_epoch);
    return h;
  }
};

struct WindowSplit {
  std::vector<TrainingWindow> train;
  std::vector<TrainingWindow> test;
};

/// Seeded permutation; the first round(fraction * N) windows are held out.
/// At least one window stays on each side when N >= 2.
inline WindowSplit split_windows(const WindowSet& windows, double test_fraction,
                                 std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw InvalidArgument("test_fraction must be in [0,1)");
  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5D117));
  rng.shuffle(order.begin(), order.end());
  auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(order.size())));
  if (test_fraction > 0.0 && n_test == 0 && order.size() >= 2) n_test = 1;
  if (n_test >= order.size()) n_test = order.size() - 1;
  WindowSplit s;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_test ? s.test : s.train).push_back(windows[order[i]]);
  return s;
}

/// Raised when training produces a non-finite loss; carries every
/// checkpoint emitted before the failure (the last one is the last good
/// state).
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::vector<Checkpoint> done)
      : NumericError(what), completed(std::move(done)) {}
  std::vector<Checkpoint> completed;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, const TrainHyperparams& h)
      : m_(n, 0.0f), v_(n, 0.0f), h_(h) {}

  void step(std::span<float> params, std::span<const float> grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(h_.beta1);
    const auto b2 = static_cast<float>(h_.beta2);
    const auto step_size = static_cast<float>(h_.lr / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    const auto eps = static_cast<float>(h_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const float g = grad[i];
      m_[i] = b1 * m_[i] + (1.0f - b1) * g;
      v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
      params[i] -= step_size * m_[i] / (std::sqrt(v_[i] * inv_bc2) + eps);
    }
  }

 private:
  std::vector<float> m_, v_;
  TrainHyperparams h_;
  std::uint64_t t_ = 0;
};

using CheckpointCallback = std::function<void(const Checkpoint&)>;

/// Trains a freshly initialized network and returns the staged checkpoints:
/// the initial state (epoch 0, step 0), any `checkpoint_steps`, every
/// `checkpoint_every` epochs, and the final state.
inline std::vector<Checkpoint> train(const ModelSpec& spec,
                                     const Vocabulary& vocab,
                                     const WindowSet& windows,
                                     const TrainHyperparams& h,
                                     const CheckpointCallback& on_checkpoint = {}) {
  if (h.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (spec.vocab_size != vocab.size())
    throw InvalidArgument("model vocabulary size does not match vocabulary");
  if (spec.context_length != windows.window_length())
    throw InvalidArgument("model window does not match training windows");
  Network<float> net(spec);
  net.initialize(derive_seed(h.rng_seed, 1));
  auto split = split_windows(windows, h.test_fraction, h.rng_seed);
  if (split.train.empty()) throw InvalidArgument("no training windows after split");

  auto eval_subset = [&](const std::vector<TrainingWindow>& ws) {
    const std::size_t n =
        h.eval_limit == 0 ? ws.size() : std::min(ws.size(), h.eval_limit);
    return std::span<const TrainingWindow>(ws.data(), n);
  };

  std::vector<Checkpoint> out;
  std::size_t step = 0;
  std::uint64_t seen = 0;
  auto emit = [&](std::size_t epoch) {
    Checkpoint ck;
    ck.spec = spec;
    ck.vocab = vocab;
    ck.weights.assign(net.parameters().begin(), net.parameters().end());
    ck.meta.epoch = epoch;
    ck.meta.step = step;
    ck.meta.windows_seen = seen;
    ck.meta.train_loss = net.evaluate(eval_subset(split.train)).loss;
    if (!split.test.empty()) {
      const auto test = eval_subset(split.test);
      const auto st = net.evaluate(test);
      ck.meta.test_loss = st.loss;
      ck.meta.test_accuracy =
          static_cast<double>(st.correct) / static_cast<double>(test.size());
    }
    if (on_checkpoint) on_checkpoint(ck);
    out.push_back(std::move(ck));
  };

  emit(0);
  AdamOptimizer adam(net.parameter_count(), h);
  std::vector<float> grad(net.parameter_count());
  std::vector<std::size_t> order(split.train.size());
  Rng shuffle_rng(derive_seed(h.rng_seed, 2));
  std::vector<TrainingWindow> batch;
  for (std::size_t epoch = 1; epoch <= h.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order.begin(), order.end());
    const std::size_t limit = h.max_windows_per_epoch == 0
                                  ? order.size()
                                  : std::min(order.size(), h.max_windows_per_epoch);
    for (std::size_t start = 0; start < limit; start += h.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(limit, start + h.batch_size); ++i)
        batch.push_back(split.train[order[i]]);
      try {
        net.loss_and_gradients(batch, grad,
                               {.training = true,
                                .dropout_seed = derive_seed(h.rng_seed, 1000 + step)});
      } catch (const NumericError& e) {
        throw TrainingDiverged(std::string("training diverged at step ") +
                                   std::to_string(step) + ": " + e.what(),
                               std::move(out));
      }
      adam.step(net.parameters(), grad);
      ++step;
      seen += batch.size();
      if (std::find(h.checkpoint_steps.begin(), h.checkpoint_steps.end(), step) !=
          h.checkpoint_steps.end())
        emit(epoch - 1);
    }
    const bool last = epoch == h.epochs;
    if (last || (h.checkpoint_every > 0 && epoch % h.checkpoint_every == 0))
      emit(epoch);
  }
  return out;
}

}  // namespace stylogen::nn
