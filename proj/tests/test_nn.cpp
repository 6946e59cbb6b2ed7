#include "support/catch.hpp"

#include <cmath>
#include <filesystem>

#include "stylogen/nn/checkpoint.hpp"
#include "stylogen/nn/train.hpp"
#include "support/gradcheck.hpp"

using namespace stylogen;
using namespace stylogen::nn;
using Catch::Approx;

namespace {

struct Period2 {
  std::vector<Document> docs;
  Vocabulary vocab;
  WindowSet windows;
};

Period2 period2(std::size_t n, std::size_t reps = 200) {
  Period2 p;
  std::string text;
  for (std::size_t i = 0; i < reps; ++i) text += "a b ";
  p.docs.push_back(make_document("p2", text));
  p.vocab = build_vocabulary(p.docs, TokenMode::word, 1);
  p.windows = windowize(p.docs, p.vocab, n);
  return p;
}

std::vector<TokenId> random_context(std::size_t n, std::size_t V, Rng& rng) {
  std::vector<TokenId> c(n);
  for (auto& t : c) t = static_cast<TokenId>(rng.below(V));
  return c;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences on random specs") {
  const auto s = gradcheck::run_suite(60, 20240611);
  INFO(s.first_failure);
  CHECK(s.failed_configs == 0);
  CHECK(s.configs == 60);
  CHECK(s.max_params <= 500);
  CHECK(s.checked > 1000);
  CHECK(s.kinks_skipped < s.checked / 20);
  for (const char* k : {"embedding", "gated_recurrent", "dilated_causal_conv", "max_pool",
                        "flatten", "dense", "dropout", "softmax_output"})
    CHECK(s.layer_kinds.count(k) == 1);
  CHECK(s.cells.count("gru") == 1);
  CHECK(s.cells.count("lstm") == 1);
}

TEST_CASE("gradient check on the default architectures at small size") {
  for (auto spec : {default_conv_spec(5, 8), default_recurrent_spec(5, 6, CellType::gru),
                    default_recurrent_spec(5, 6, CellType::lstm)}) {
    // shrink the hidden sizes so the check stays quick
    for (auto& l : spec.layers)
      if (l.kind != LayerKind::softmax_output && l.units > 4) l.units = 4;
    const auto r = gradcheck::check(spec, 17);
    INFO(r.first_failure);
    CHECK(r.failures == 0);
    CHECK(r.checked > 0);
  }
}

TEST_CASE("a freshly initialized network predicts uniformly") {
  for (auto spec : {default_conv_spec(100, 10), default_recurrent_spec(100, 10)}) {
    Network<float> net(spec);
    net.initialize(3);
    Rng rng(1);
    std::vector<std::vector<TokenId>> ctxs;
    std::vector<TrainingWindow> batch;
    for (int i = 0; i < 8; ++i) ctxs.push_back(random_context(10, 100, rng));
    for (int i = 0; i < 8; ++i) batch.push_back({ctxs[i], static_cast<TokenId>(i)});
    CHECK(net.evaluate(batch).loss == Approx(std::log(100.0)).epsilon(1e-6));
    for (double p : net.forward(ctxs[0])) CHECK(p == Approx(0.01).epsilon(1e-6));
  }
}

TEST_CASE("causal convolutions ignore future positions") {
  const std::size_t n = 8, V = 5, t0 = 4;
  ModelSpec spec{V, n,
                 {LayerSpec::embedding(2), LayerSpec::conv(3, 2, 2, Activation::tanh),
                  LayerSpec::conv(3, 2, 1, Activation::tanh), LayerSpec::flatten(),
                  LayerSpec::softmax_output(V)}};
  Network<double> net(spec);
  Rng rng(9);
  std::vector<double> p(net.parameter_count());
  for (auto& v : p) v = rng.uniform(-1.0, 1.0);
  // the output layer reads only time step t0 of the last conv
  const auto& out = net.layout().back();
  const std::size_t C = 3;
  for (std::size_t i = 0; i < n * C; ++i)
    if (i / C != t0)
      for (std::size_t u = 0; u < V; ++u) p[out.param_offset + i * V + u] = 0.0;
  net.set_parameters(p);

  for (int trial = 0; trial < 20; ++trial) {
    auto ctx = random_context(n, V, rng);
    const auto base = net.forward(ctx);
    for (std::size_t pos = 0; pos < n; ++pos) {
      auto alt = ctx;
      alt[pos] = static_cast<TokenId>((ctx[pos] + 1) % V);
      const auto q = net.forward(alt);
      double diff = 0.0;
      for (std::size_t v = 0; v < V; ++v) diff = std::max(diff, std::abs(q[v] - base[v]));
      // receptive field of t0 is t0-3 .. t0
      if (pos > t0 || pos + 3 < t0) {
        CHECK(diff == 0.0);
      } else if (pos == t0) {
        CHECK(diff > 0.0);
      }
    }
  }
}

TEST_CASE("kernel 2 dilation 2 convolution shifts by two steps") {
  const std::size_t n = 6, V = 6;
  ModelSpec spec{V, n,
                 {LayerSpec::embedding(1), LayerSpec::conv(1, 2, 2, Activation::linear),
                  LayerSpec::flatten(), LayerSpec::softmax_output(V)}};
  Network<double> net(spec);
  std::vector<double> p(net.parameter_count(), 0.0);
  const auto lay = net.layout();
  for (std::size_t v = 0; v < V; ++v) p[lay[0].param_offset + v] = static_cast<double>(v);
  p[lay[1].param_offset + 1] = 1.0;  // tap 1 weight; tap 0 and bias stay 0
  for (std::size_t i = 0; i < n; ++i) p[lay[3].param_offset + i * V + i] = 1.0;
  net.set_parameters(p);

  const std::vector<TokenId> ctx{3, 1, 4, 1, 5, 2};
  const auto q = net.forward(ctx);
  // logits[t] = ctx[t-2] for t >= 2, else 0
  for (std::size_t t = 0; t < n; ++t) {
    const double expect = t >= 2 ? ctx[t - 2] : 0.0;
    CHECK(std::log(q[t]) - std::log(q[0]) == Approx(expect).margin(1e-9));
  }
}

TEST_CASE("invalid architectures are rejected") {
  ModelSpec wide{5, 8,
                 {LayerSpec::embedding(2), LayerSpec::conv(2, 3, 4), LayerSpec::flatten(),
                  LayerSpec::softmax_output(5)}};
  CHECK_THROWS_WITH(wide.layout(), Catch::Matchers::ContainsSubstring("receptive field"));
  ModelSpec dil3 = wide;
  dil3.layers[1] = LayerSpec::conv(2, 2, 3);
  CHECK_THROWS_AS(dil3.layout(), InvalidArgument);
  ModelSpec no_flatten{5, 8,
                       {LayerSpec::embedding(2), LayerSpec::conv(2, 2, 1),
                        LayerSpec::softmax_output(5)}};
  CHECK_THROWS_WITH(no_flatten.layout(), Catch::Matchers::ContainsSubstring("flatten"));
  ModelSpec bad_v{5, 8, {LayerSpec::embedding(2), LayerSpec::flatten(), LayerSpec::softmax_output(4)}};
  CHECK_THROWS_AS(bad_v.layout(), InvalidArgument);
  ModelSpec big_pool{5, 4,
                     {LayerSpec::embedding(2), LayerSpec::max_pool(8), LayerSpec::flatten(),
                      LayerSpec::softmax_output(5)}};
  CHECK_THROWS_AS(big_pool.layout(), InvalidArgument);
}

TEST_CASE("spec JSON round-trips") {
  for (const auto& s : {default_conv_spec(40, 16), default_recurrent_spec(40, 16, CellType::lstm)}) {
    CHECK(ModelSpec::from_json(nlohmann::json::parse(s.to_json().dump())) == s);
  }
}

TEST_CASE("non-finite activations name the layer") {
  ModelSpec spec{4, 4,
                 {LayerSpec::embedding(2), LayerSpec::flatten(),
                  LayerSpec::dense(3, Activation::tanh), LayerSpec::softmax_output(4)}};
  Network<double> net(spec);
  std::vector<double> p(net.parameter_count(), 0.1);
  p[net.layout()[2].param_offset] = std::numeric_limits<double>::quiet_NaN();
  net.set_parameters(p);
  const std::vector<TokenId> ctx{1, 2, 3, 0};
  CHECK_THROWS_AS(net.forward(ctx), NumericError);
  CHECK_THROWS_WITH(net.forward(ctx), Catch::Matchers::ContainsSubstring("layer 2 (dense)"));
}

TEST_CASE("training learns a period-2 sequence") {
  auto data = period2(6);
  TrainHyperparams h;
  h.epochs = 6;
  h.batch_size = 16;
  h.lr = 5e-3;
  h.test_fraction = 0.2;
  h.rng_seed = 11;
  SECTION("convolutional") {
    const auto cks = train(default_conv_spec(data.vocab.size(), 6), data.vocab, data.windows, h);
    REQUIRE(cks.size() == 7);
    CHECK(cks.front().meta.test_loss == Approx(std::log(3.0)).epsilon(1e-5));
    CHECK(cks.back().meta.test_accuracy == 1.0);
    CHECK(cks.back().meta.test_loss < 0.1);
  }
  SECTION("recurrent") {
    const auto cks =
        train(default_recurrent_spec(data.vocab.size(), 6), data.vocab, data.windows, h);
    CHECK(cks.back().meta.test_accuracy == 1.0);
    NeuralModel m(cks.back());
    const auto ctx = data.vocab.encode(std::vector<std::string>{"a", "b", "a", "b", "a", "b"});
    const auto p = m.next_distribution(ctx);
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == data.vocab.id("a"));
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto data = period2(6, 60);
  TrainHyperparams h;
  h.epochs = 2;
  h.rng_seed = 5;
  const auto spec = default_conv_spec(data.vocab.size(), 6);
  const auto a = train(spec, data.vocab, data.windows, h);
  const auto b = train(spec, data.vocab, data.windows, h);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].serialize() == b[i].serialize());
  h.rng_seed = 6;
  const auto c = train(spec, data.vocab, data.windows, h);
  CHECK(c.back().weights != a.back().weights);
}

TEST_CASE("step checkpoints are emitted in order") {
  auto data = period2(6, 100);
  TrainHyperparams h;
  h.epochs = 2;
  h.batch_size = 8;
  h.checkpoint_every = 0;
  h.checkpoint_steps = {1, 3};
  std::vector<std::size_t> steps;
  const auto cks = train(default_conv_spec(data.vocab.size(), 6), data.vocab, data.windows, h,
                         [&](const Checkpoint& c) { steps.push_back(c.meta.step); });
  REQUIRE(steps.size() == 4);
  CHECK(steps[0] == 0);
  CHECK(steps[1] == 1);
  CHECK(steps[2] == 3);
  CHECK(cks[1].meta.epoch == 0);
  CHECK(cks.back().meta.epoch == 2);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  auto data = period2(4, 40);
  TrainHyperparams h;
  h.epochs = 1;
  const auto cks = train(default_recurrent_spec(data.vocab.size(), 4, CellType::lstm), data.vocab,
                         data.windows, h);
  const auto& ck = cks.back();
  const auto bytes = ck.serialize();
  const auto back = Checkpoint::parse(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.id() == ck.id());
  CHECK(back.spec == ck.spec);
  CHECK(back.vocab == ck.vocab);
  CHECK(back.meta == ck.meta);

  const auto path = std::filesystem::temp_directory_path() / "stylogen_test_nn.ckpt";
  ck.save(path);
  CHECK(Checkpoint::load(path).serialize() == bytes);
  std::filesystem::remove(path);

  NeuralModel a(ck), b(back);
  const auto ctx = data.vocab.encode(std::vector<std::string>{"b", "a", "b", "a"});
  CHECK(a.next_distribution(ctx) == b.next_distribution(ctx));
  CHECK(a.model_id() == b.model_id());

  CHECK_THROWS_AS(Checkpoint::parse("nope"), FormatError);
  CHECK_THROWS_AS(Checkpoint::parse(bytes.substr(0, bytes.size() - 3)), FormatError);
}
