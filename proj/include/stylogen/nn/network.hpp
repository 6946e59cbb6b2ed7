#pragma once

// Dense feed-forward evaluation and reverse-mode gradients for a ModelSpec.
// Parameters live in one flat vector; each layer owns a contiguous slice
// (see ModelSpec::layout). The scalar type is a template parameter so the
// gradient-check harness can run in double while training runs in float.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stylogen/common.hpp"
#include "stylogen/corpus.hpp"
#include "stylogen/nn/spec.hpp"

namespace stylogen::nn {

struct ForwardOptions {
  /// Dropout active when true.
  bool training = false;
  /// Dropout masks for sample i are drawn from derive_seed(dropout_seed, i).
  std::uint64_t dropout_seed = 0;
};

struct BatchStats {
  double loss = 0.0;  // mean cross-entropy
  std::size_t correct = 0;  // argmax == target
  /// Hash of every piecewise-linear branch taken (relu signs, pool argmax).
  std::uint64_t pattern = 0;
};

namespace detail {

template <typename T>
inline T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                   : std::exp(x) / (T(1) + std::exp(x));
}

/// Dot product with four independent accumulators, summed in fixed order.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s0{}, s1{}, s2{}, s3{};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void mix(std::uint64_t& h, std::uint64_t v) {
  h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
}

}  // namespace detail

template <typename T>
class Network {
 public:
  explicit Network(ModelSpec spec)
      : spec_(std::move(spec)), layout_(spec_.layout()) {
    params_.assign(layout_.back().param_offset + layout_.back().param_count,
                   T(0));
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<LayerLayout>& layout() const { return layout_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::size_t window() const { return spec_.context_length; }
  std::size_t vocab_size() const { return spec_.vocab_size; }

  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }

  void set_parameters(std::span<const T> p) {
    if (p.size() != params_.size())
      throw InvalidArgument("parameter count mismatch: expected " +
                            std::to_string(params_.size()) + ", got " +
                            std::to_string(p.size()));
    std::copy(p.begin(), p.end(), params_.begin());
  }

  /// Glorot-uniform for embedding, conv and dense kernels; uniform
  /// +-1/sqrt(units) for recurrent kernels; zero biases (LSTM forget gate
  /// bias 1); the softmax output layer is all zeros so the initial
  /// prediction is uniform.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::fill(params_.begin(), params_.end(), T(0));
    for (std::size_t li = 0; li < layout_.size(); ++li) {
      const auto& l = spec_.layers[li];
      const auto& lay = layout_[li];
      T* p = params_.data() + lay.param_offset;
      auto fill = [&](T* dst, std::size_t count, double limit) {
        for (std::size_t i = 0; i < count; ++i)
          dst[i] = static_cast<T>(rng.uniform(-limit, limit));
      };
      auto glorot = [](std::size_t fan_in, std::size_t fan_out) {
        return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      };
      switch (l.kind) {
        case LayerKind::embedding:
          fill(p, lay.param_count, glorot(spec_.vocab_size, l.units));
          break;
        case LayerKind::dilated_causal_conv: {
          const std::size_t C = lay.input.channels;
          fill(p, l.kernel * C * l.units,
               glorot(l.kernel * C, l.kernel * l.units));
          break;
        }
        case LayerKind::dense:
          fill(p, lay.input.channels * l.units,
               glorot(lay.input.channels, l.units));
          break;
        case LayerKind::gated_recurrent: {
          const std::size_t D = lay.input.channels;
          const std::size_t U = l.units;
          const std::size_t G = l.cell == CellType::gru ? 3 : 4;
          fill(p, D * G * U, glorot(D, G * U));
          fill(p + D * G * U, U * G * U, 1.0 / std::sqrt(static_cast<double>(U)));
          if (l.cell == CellType::lstm) {
            T* b = p + D * G * U + U * G * U;
            for (std::size_t j = 0; j < U; ++j) b[U + j] = T(1);
          }
          break;
        }
        default:
          break;
      }
    }
  }

  /// Inference-mode next-token distribution (softmax evaluated in double).
  std::vector<double> forward(std::span<const TokenId> context) const {
    Workspace ws;
    run_forward(context, ws, ForwardOptions{}, 0, nullptr);
    return softmax(ws.acts.back());
  }

  /// Mean cross-entropy of the batch without gradients.
  BatchStats evaluate(std::span<const TrainingWindow> batch,
                      const ForwardOptions& opt = {}) const {
    if (batch.empty()) throw InvalidArgument("evaluate: empty batch");
    Workspace ws;
    BatchStats st;
    double total = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      run_forward(batch[s].context, ws, opt, s, &st.pattern);
      const auto& logits = ws.acts.back();
      total += cross_entropy(logits, batch[s].target);
      if (argmax(logits) == static_cast<std::size_t>(batch[s].target))
        ++st.correct;
    }
    st.loss = total / static_cast<double>(batch.size());
    if (!std::isfinite(st.loss)) throw NumericError("non-finite loss");
    return st;
  }

  /// Mean cross-entropy and its gradient with respect to every parameter.
  /// `grad` is overwritten.
  BatchStats loss_and_gradients(std::span<const TrainingWindow> batch,
                                std::span<T> grad,
                                const ForwardOptions& opt = {}) const {
    if (batch.empty()) throw InvalidArgument("loss_and_gradients: empty batch");
    if (grad.size() != params_.size())
      throw InvalidArgument("gradient buffer has wrong size");
    std::fill(grad.begin(), grad.end(), T(0));
    Workspace ws;
    BatchStats st;
    double total = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<T> dlogits(spec_.vocab_size);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      run_forward(batch[s].context, ws, opt, s, &st.pattern);
      const auto& logits = ws.acts.back();
      const auto p = softmax(logits);
      const auto target = static_cast<std::size_t>(batch[s].target);
      total += -std::log(std::max(p[target], 1e-300));
      if (argmax(logits) == target) ++st.correct;
      for (std::size_t v = 0; v < p.size(); ++v)
        dlogits[v] = static_cast<T>((p[v] - (v == target ? 1.0 : 0.0)) * scale);
      run_backward(batch[s].context, ws, dlogits, grad);
    }
    st.loss = total / static_cast<double>(batch.size());
    if (!std::isfinite(st.loss)) throw NumericError("non-finite loss");
    return st;
  }

  static std::vector<double> softmax(std::span<const T> logits) {
    double mx = -INFINITY;
    for (auto v : logits) mx = std::max(mx, static_cast<double>(v));
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      p[i] = std::exp(static_cast<double>(logits[i]) - mx);
      sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
  }

 private:
  struct Cache {
    std::vector<T> a, b, c, d, e, f;
    std::vector<std::uint32_t> idx;
  };

  struct Workspace {
    std::vector<std::vector<T>> acts;  // output of each layer
    std::vector<Cache> caches;
    std::vector<T> g_out, g_in;
  };

  static double cross_entropy(std::span<const T> logits, TokenId target) {
    double mx = -INFINITY;
    for (auto v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (auto v : logits) sum += std::exp(static_cast<double>(v) - mx);
    return mx + std::log(sum) -
           static_cast<double>(logits[static_cast<std::size_t>(target)]);
  }

  static std::size_t argmax(std::span<const T> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) -
                                    v.begin());
  }

  static T activate(T x, Activation a) {
    switch (a) {
      case Activation::relu: return x > T(0) ? x : T(0);
      case Activation::tanh: return std::tanh(x);
      case Activation::linear: return x;
    }
    return x;
  }

  /// Derivative expressed through the activation's output y.
  static T activation_grad(T y, Activation a) {
    switch (a) {
      case Activation::relu: return y > T(0) ? T(1) : T(0);
      case Activation::tanh: return T(1) - y * y;
      case Activation::linear: return T(1);
    }
    return T(1);
  }

  void check_finite(const std::vector<T>& v, std::size_t li) const {
    for (auto x : v) {
      if (!std::isfinite(static_cast<double>(x)))
        throw NumericError("non-finite activation in layer " +
                           std::to_string(li) + " (" +
                           to_string(spec_.layers[li].kind) + ")");
    }
  }

  void run_forward(std::span<const TokenId> ctx, Workspace& ws,
                   const ForwardOptions& opt, std::size_t sample,
                   std::uint64_t* pattern) const {
    if (ctx.size() != spec_.context_length)
      throw InvalidArgument("context length " + std::to_string(ctx.size()) +
                            " != model window " +
                            std::to_string(spec_.context_length));
    const std::size_t L = spec_.layers.size();
    ws.acts.resize(L);
    ws.caches.resize(L);
    for (std::size_t li = 0; li < L; ++li) {
      const auto& l = spec_.layers[li];
      const auto& lay = layout_[li];
      const T* P = params_.data() + lay.param_offset;
      auto& y = ws.acts[li];
      auto& cache = ws.caches[li];
      y.assign(lay.output.size(), T(0));
      const std::vector<T>* xin = li == 0 ? nullptr : &ws.acts[li - 1];
      switch (l.kind) {
        case LayerKind::embedding: {
          const std::size_t d = l.units;
          for (std::size_t t = 0; t < ctx.size(); ++t) {
            const auto id = ctx[t];
            if (id < 0 || static_cast<std::size_t>(id) >= spec_.vocab_size)
              throw InvalidArgument("token id " + std::to_string(id) +
                                    " out of range");
            std::copy_n(P + static_cast<std::size_t>(id) * d, d, y.data() + t * d);
          }
          break;
        }
        case LayerKind::dilated_causal_conv:
          conv_forward(l, lay, P, *xin, y, pattern);
          break;
        case LayerKind::max_pool: {
          const std::size_t C = lay.input.channels;
          const std::size_t w = l.width;
          cache.idx.assign(y.size(), 0);
          for (std::size_t p = 0; p < lay.output.time; ++p) {
            for (std::size_t c = 0; c < C; ++c) {
              std::size_t best = p * w * C + c;
              for (std::size_t q = 1; q < w; ++q) {
                const std::size_t k = (p * w + q) * C + c;
                if ((*xin)[k] > (*xin)[best]) best = k;
              }
              y[p * C + c] = (*xin)[best];
              cache.idx[p * C + c] = static_cast<std::uint32_t>(best);
              if (pattern) detail::mix(*pattern, best);
            }
          }
          break;
        }
        case LayerKind::flatten:
          std::copy(xin->begin(), xin->end(), y.begin());
          break;
        case LayerKind::dense:
        case LayerKind::softmax_output: {
          const std::size_t in = lay.input.channels;
          const std::size_t U = lay.output.channels;
          const T* W = P;
          const T* b = P + in * U;
          std::copy_n(b, U, y.data());
          for (std::size_t i = 0; i < in; ++i) {
            const T xi = (*xin)[i];
            if (xi != T(0)) detail::axpy(xi, W + i * U, y.data(), U);
          }
          if (l.kind == LayerKind::dense && l.activation != Activation::linear) {
            for (auto& v : y) {
              v = activate(v, l.activation);
              if (pattern && l.activation == Activation::relu)
                detail::mix(*pattern, v > T(0));
            }
          }
          break;
        }
        case LayerKind::dropout: {
          if (!opt.training || l.rate == 0.0) {
            cache.a.clear();
            std::copy(xin->begin(), xin->end(), y.begin());
            break;
          }
          Rng rng(derive_seed(derive_seed(opt.dropout_seed, sample), li));
          const T keep_scale = static_cast<T>(1.0 / (1.0 - l.rate));
          cache.a.resize(y.size());
          for (std::size_t j = 0; j < y.size(); ++j) {
            cache.a[j] = rng.uniform01() >= l.rate ? keep_scale : T(0);
            y[j] = (*xin)[j] * cache.a[j];
          }
          break;
        }
        case LayerKind::gated_recurrent:
          if (l.cell == CellType::gru)
            gru_forward(l, lay, P, *xin, y, cache);
          else
            lstm_forward(l, lay, P, *xin, y, cache);
          break;
      }
      check_finite(y, li);
    }
  }

  void conv_forward(const LayerSpec& l, const LayerLayout& lay, const T* P,
                    const std::vector<T>& x, std::vector<T>& y,
                    std::uint64_t* pattern) const {
    const std::size_t n = lay.input.time;
    const std::size_t C = lay.input.channels;
    const std::size_t F = l.units;
    const T* W = P;
    const T* b = P + l.kernel * C * F;
    for (std::size_t t = 0; t < n; ++t) {
      T* yr = y.data() + t * F;
      std::copy_n(b, F, yr);
      for (std::size_t i = 0; i < l.kernel; ++i) {
        if (i * l.dilation > t) break;
        const T* xr = x.data() + (t - i * l.dilation) * C;
        for (std::size_t c = 0; c < C; ++c)
          detail::axpy(xr[c], W + (i * C + c) * F, yr, F);
      }
      if (l.activation != Activation::linear) {
        for (std::size_t f = 0; f < F; ++f) {
          yr[f] = activate(yr[f], l.activation);
          if (pattern && l.activation == Activation::relu)
            detail::mix(*pattern, yr[f] > T(0));
        }
      }
    }
  }

  // GRU: z = s(xWz + hUz + bz), r = s(xWr + hUr + br),
  //      c = tanh(xWc + (r*h)Uc + bc), h' = z*h + (1-z)*c.
  // Parameter slice: W[D][3U] | U[U][3U] | b[3U], gate order z, r, c.
  void gru_forward(const LayerSpec& l, const LayerLayout& lay, const T* P,
                   const std::vector<T>& x, std::vector<T>& y,
                   Cache& cache) const {
    const std::size_t n = lay.input.time;
    const std::size_t D = lay.input.channels;
    const std::size_t U = l.units;
    const std::size_t G = 3 * U;
    const T* W = P;
    const T* R = P + D * G;
    const T* b = R + U * G;
    cache.a.assign(n * U, T(0));  // z
    cache.b.assign(n * U, T(0));  // r
    cache.c.assign(n * U, T(0));  // candidate
    cache.d.assign((n + 1) * U, T(0));  // h_0..h_n
    std::vector<T> pre(G);
    for (std::size_t t = 0; t < n; ++t) {
      const T* h = cache.d.data() + t * U;
      std::copy_n(b, G, pre.data());
      for (std::size_t i = 0; i < D; ++i)
        detail::axpy(x[t * D + i], W + i * G, pre.data(), G);
      for (std::size_t k = 0; k < U; ++k)
        detail::axpy(h[k], R + k * G, pre.data(), 2 * U);
      T* z = cache.a.data() + t * U;
      T* r = cache.b.data() + t * U;
      T* c = cache.c.data() + t * U;
      for (std::size_t j = 0; j < U; ++j) {
        z[j] = detail::sigmoid(pre[j]);
        r[j] = detail::sigmoid(pre[U + j]);
      }
      for (std::size_t k = 0; k < U; ++k)
        detail::axpy(r[k] * h[k], R + k * G + 2 * U, pre.data() + 2 * U, U);
      T* hn = cache.d.data() + (t + 1) * U;
      for (std::size_t j = 0; j < U; ++j) {
        c[j] = std::tanh(pre[2 * U + j]);
        hn[j] = z[j] * h[j] + (T(1) - z[j]) * c[j];
      }
    }
    std::copy_n(cache.d.data() + n * U, U, y.data());
  }

  // LSTM with gate order i, f, g, o:
  //   c' = f*c + i*g, h' = o*tanh(c').
  void lstm_forward(const LayerSpec& l, const LayerLayout& lay, const T* P,
                    const std::vector<T>& x, std::vector<T>& y,
                    Cache& cache) const {
    const std::size_t n = lay.input.time;
    const std::size_t D = lay.input.channels;
    const std::size_t U = l.units;
    const std::size_t G = 4 * U;
    const T* W = P;
    const T* R = P + D * G;
    const T* b = R + U * G;
    cache.a.assign(n * G, T(0));  // gate activations
    cache.b.assign((n + 1) * U, T(0));  // c_0..c_n
    cache.d.assign((n + 1) * U, T(0));  // h_0..h_n
    std::vector<T> pre(G);
    for (std::size_t t = 0; t < n; ++t) {
      const T* h = cache.d.data() + t * U;
      const T* c = cache.b.data() + t * U;
      std::copy_n(b, G, pre.data());
      for (std::size_t i = 0; i < D; ++i)
        detail::axpy(x[t * D + i], W + i * G, pre.data(), G);
      for (std::size_t k = 0; k < U; ++k)
        detail::axpy(h[k], R + k * G, pre.data(), G);
      T* gates = cache.a.data() + t * G;
      T* cn = cache.b.data() + (t + 1) * U;
      T* hn = cache.d.data() + (t + 1) * U;
      for (std::size_t j = 0; j < U; ++j) {
        const T ig = detail::sigmoid(pre[j]);
        const T fg = detail::sigmoid(pre[U + j]);
        const T gg = std::tanh(pre[2 * U + j]);
        const T og = detail::sigmoid(pre[3 * U + j]);
        gates[j] = ig;
        gates[U + j] = fg;
        gates[2 * U + j] = gg;
        gates[3 * U + j] = og;
        cn[j] = fg * c[j] + ig * gg;
        hn[j] = og * std::tanh(cn[j]);
      }
    }
    std::copy_n(cache.d.data() + n * U, U, y.data());
  }

  void run_backward(std::span<const TokenId> ctx, Workspace& ws,
                    const std::vector<T>& dlogits, std::span<T> grad) const {
    auto& g = ws.g_out;
    auto& gx = ws.g_in;
    g = dlogits;
    for (std::size_t li = spec_.layers.size(); li-- > 0;) {
      const auto& l = spec_.layers[li];
      const auto& lay = layout_[li];
      const T* P = params_.data() + lay.param_offset;
      T* GP = grad.data() + lay.param_offset;
      const auto& y = ws.acts[li];
      const auto& cache = ws.caches[li];
      if (l.kind == LayerKind::embedding) {
        const std::size_t d = l.units;
        for (std::size_t t = 0; t < ctx.size(); ++t)
          detail::axpy(T(1), g.data() + t * d,
                       GP + static_cast<std::size_t>(ctx[t]) * d, d);
        break;
      }
      const auto& x = ws.acts[li - 1];
      gx.assign(lay.input.size(), T(0));
      switch (l.kind) {
        case LayerKind::dilated_causal_conv: {
          const std::size_t n = lay.input.time;
          const std::size_t C = lay.input.channels;
          const std::size_t F = l.units;
          const T* W = P;
          T* gW = GP;
          T* gb = GP + l.kernel * C * F;
          for (std::size_t j = 0; j < g.size(); ++j)
            g[j] *= activation_grad(y[j], l.activation);
          for (std::size_t t = 0; t < n; ++t) {
            const T* gr = g.data() + t * F;
            detail::axpy(T(1), gr, gb, F);
            for (std::size_t i = 0; i < l.kernel; ++i) {
              if (i * l.dilation > t) break;
              const std::size_t s = t - i * l.dilation;
              for (std::size_t c = 0; c < C; ++c) {
                const std::size_t row = (i * C + c) * F;
                detail::axpy(x[s * C + c], gr, gW + row, F);
                gx[s * C + c] += detail::dot(W + row, gr, F);
              }
            }
          }
          break;
        }
        case LayerKind::max_pool:
          for (std::size_t j = 0; j < g.size(); ++j) gx[cache.idx[j]] += g[j];
          break;
        case LayerKind::flatten:
          std::copy(g.begin(), g.end(), gx.begin());
          break;
        case LayerKind::dense:
        case LayerKind::softmax_output: {
          const std::size_t in = lay.input.channels;
          const std::size_t U = lay.output.channels;
          const T* W = P;
          T* gW = GP;
          T* gb = GP + in * U;
          if (l.kind == LayerKind::dense)
            for (std::size_t j = 0; j < U; ++j)
              g[j] *= activation_grad(y[j], l.activation);
          detail::axpy(T(1), g.data(), gb, U);
          for (std::size_t i = 0; i < in; ++i) {
            if (x[i] != T(0)) detail::axpy(x[i], g.data(), gW + i * U, U);
            gx[i] = detail::dot(W + i * U, g.data(), U);
          }
          break;
        }
        case LayerKind::dropout:
          if (cache.a.empty()) {
            std::copy(g.begin(), g.end(), gx.begin());
          } else {
            for (std::size_t j = 0; j < g.size(); ++j) gx[j] = g[j] * cache.a[j];
          }
          break;
        case LayerKind::gated_recurrent:
          if (l.cell == CellType::gru)
            gru_backward(l, lay, P, GP, x, cache, g, gx);
          else
            lstm_backward(l, lay, P, GP, x, cache, g, gx);
          break;
        case LayerKind::embedding:
          break;
      }
      std::swap(g, gx);
    }
  }

  void gru_backward(const LayerSpec& l, const LayerLayout& lay, const T* P,
                    T* GP, const std::vector<T>& x, const Cache& cache,
                    const std::vector<T>& gy, std::vector<T>& gx) const {
    const std::size_t n = lay.input.time;
    const std::size_t D = lay.input.channels;
    const std::size_t U = l.units;
    const std::size_t G = 3 * U;
    const T* W = P;
    const T* R = P + D * G;
    T* gW = GP;
    T* gR = GP + D * G;
    T* gb = gR + U * G;
    std::vector<T> dh(gy.begin(), gy.end());
    std::vector<T> dprev(U), dpre(G), rh(U);
    for (std::size_t t = n; t-- > 0;) {
      const T* h = cache.d.data() + t * U;
      const T* z = cache.a.data() + t * U;
      const T* r = cache.b.data() + t * U;
      const T* c = cache.c.data() + t * U;
      for (std::size_t j = 0; j < U; ++j) {
        const T dz = dh[j] * (h[j] - c[j]);
        const T dc = dh[j] * (T(1) - z[j]);
        dprev[j] = dh[j] * z[j];
        dpre[j] = dz * z[j] * (T(1) - z[j]);
        dpre[2 * U + j] = dc * (T(1) - c[j] * c[j]);
        rh[j] = r[j] * h[j];
      }
      // candidate pre-activation depends on (r*h) through Uc
      for (std::size_t k = 0; k < U; ++k) {
        const T drh = detail::dot(R + k * G + 2 * U, dpre.data() + 2 * U, U);
        dprev[k] += drh * r[k];
        dpre[U + k] = drh * h[k] * r[k] * (T(1) - r[k]);
      }
      detail::axpy(T(1), dpre.data(), gb, G);
      for (std::size_t i = 0; i < D; ++i) {
        detail::axpy(x[t * D + i], dpre.data(), gW + i * G, G);
        gx[t * D + i] = detail::dot(W + i * G, dpre.data(), G);
      }
      for (std::size_t k = 0; k < U; ++k) {
        detail::axpy(h[k], dpre.data(), gR + k * G, 2 * U);
        detail::axpy(rh[k], dpre.data() + 2 * U, gR + k * G + 2 * U, U);
        dprev[k] += detail::dot(R + k * G, dpre.data(), 2 * U);
      }
      dh.swap(dprev);
    }
  }

  void lstm_backward(const LayerSpec& l, const LayerLayout& lay, const T* P,
                     T* GP, const std::vector<T>& x, const Cache& cache,
                     const std::vector<T>& gy, std::vector<T>& gx) const {
    const std::size_t n = lay.input.time;
    const std::size_t D = lay.input.channels;
    const std::size_t U = l.units;
    const std::size_t G = 4 * U;
    const T* W = P;
    const T* R = P + D * G;
    T* gW = GP;
    T* gR = GP + D * G;
    T* gb = gR + U * G;
    std::vector<T> dh(gy.begin(), gy.end());
    std::vector<T> dc(U, T(0)), dpre(G), dhprev(U);
    for (std::size_t t = n; t-- > 0;) {
      const T* gates = cache.a.data() + t * G;
      const T* cprev = cache.b.data() + t * U;
      const T* cn = cache.b.data() + (t + 1) * U;
      const T* hprev = cache.d.data() + t * U;
      for (std::size_t j = 0; j < U; ++j) {
        const T ig = gates[j], fg = gates[U + j], gg = gates[2 * U + j],
                og = gates[3 * U + j];
        const T tc = std::tanh(cn[j]);
        const T d_o = dh[j] * tc;
        dc[j] += dh[j] * og * (T(1) - tc * tc);
        dpre[j] = dc[j] * gg * ig * (T(1) - ig);
        dpre[U + j] = dc[j] * cprev[j] * fg * (T(1) - fg);
        dpre[2 * U + j] = dc[j] * ig * (T(1) - gg * gg);
        dpre[3 * U + j] = d_o * og * (T(1) - og);
        dc[j] *= fg;
      }
      detail::axpy(T(1), dpre.data(), gb, G);
      for (std::size_t i = 0; i < D; ++i) {
        detail::axpy(x[t * D + i], dpre.data(), gW + i * G, G);
        gx[t * D + i] = detail::dot(W + i * G, dpre.data(), G);
      }
      for (std::size_t k = 0; k < U; ++k) {
        detail::axpy(hprev[k], dpre.data(), gR + k * G, G);
        dhprev[k] = detail::dot(R + k * G, dpre.data(), G);
      }
      dh.swap(dhprev);
    }
  }

  ModelSpec spec_;
  std::vector<LayerLayout> layout_;
  std::vector<T> params_;
};

}  // namespace stylogen::nn
