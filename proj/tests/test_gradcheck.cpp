// Analytic gradients against central finite differences (h = 1e-5).
// Every check runs 20 random instances and demands a relative error below
// 1e-4 on every inspected entry.

#include <gtest/gtest.h>

#include <functional>

#include "oracles.hpp"
#include "wsense/attention.hpp"
#include "wsense/layers.hpp"
#include "wsense/model.hpp"
#include "wsense/train.hpp"

using namespace wsense;

namespace {

constexpr int kInstances = 20;
constexpr double kTolerance = 1e-4;

void run_instances(const std::function<LayerParams(Rng&)>& make, const std::function<Shape(Rng&)>& input_shape,
                   Mode mode, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    LayerParams p = make(rng);
    const Tensor x = oracle::random_tensor(input_shape(rng), rng);
    const auto r = oracle::check_layer(p, x, mode, rng);
    EXPECT_LT(r.max_rel_error, kTolerance) << "instance " << i << ": " << r.worst;
    worst = std::max(worst, r.max_rel_error);
  }
  ::testing::Test::RecordProperty("max_rel_error", std::to_string(worst));
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Small random biases make sure bias gradients are exercised away from 0.
void jitter(LayerParams& p, Rng& rng) {
  initialize(p, rng);
  for (auto* t : flatten_params(p)) {
    if (t->name.find("bias") != std::string::npos || t->name == "beta") {
      for (auto& v : t->value.data()) v = rng.uniform(-0.2, 0.2);
    }
    if (t->name == "gamma") {
      for (auto& v : t->value.data()) v = rng.uniform(0.5, 1.5);
    }
  }
}

}  // namespace

TEST(GradCheck, Conv1d) {
  std::size_t cin = 0, cout = 0;
  run_instances(
      [&](Rng& rng) {
        cin = between(rng, 1, 4);
        cout = between(rng, 1, 4);
        LayerParams p = make_conv1d(between(rng, 1, 7), cin, cout);
        jitter(p, rng);
        return p;
      },
      [&](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 1, 12), cin}; }, Mode::train, 11);
}

TEST(GradCheck, BatchNormTrainMode) {
  std::size_t c = 0;
  run_instances(
      [&](Rng& rng) {
        c = between(rng, 1, 5);
        LayerParams p = make_batchnorm1d(c);
        jitter(p, rng);
        return p;
      },
      [&](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 2, 8), c}; }, Mode::train, 12);
}

TEST(GradCheck, BatchNormInferMode) {
  std::size_t c = 0;
  run_instances(
      [&](Rng& rng) {
        c = between(rng, 1, 5);
        LayerParams p = make_batchnorm1d(c);
        jitter(p, rng);
        for (auto& v : p.weight("moving_mean").data()) v = rng.uniform(-1, 1);
        for (auto& v : p.weight("moving_var").data()) v = rng.uniform(0.5, 2);
        return p;
      },
      [&](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 1, 8), c}; }, Mode::infer, 13);
}

TEST(GradCheck, MaxPool) {
  run_instances([](Rng&) { return make_maxpool1d(2); },
                [](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 2, 13), between(rng, 1, 4)}; },
                Mode::train, 14);
}

TEST(GradCheck, GlobalMaxPool) {
  run_instances([](Rng&) { return make_globalmaxpool(); },
                [](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 1, 13), between(rng, 1, 4)}; },
                Mode::train, 15);
}

TEST(GradCheck, Dense) {
  std::size_t f = 0;
  run_instances(
      [&](Rng& rng) {
        f = between(rng, 1, 6);
        LayerParams p = make_dense(f, between(rng, 1, 6), rng.below(2) == 0);
        jitter(p, rng);
        return p;
      },
      [&](Rng& rng) { return Shape{between(rng, 1, 4), f}; }, Mode::train, 16);
}

TEST(GradCheck, Lstm) {
  std::size_t f = 0;
  run_instances(
      [&](Rng& rng) {
        f = between(rng, 1, 4);
        LayerParams p = make_lstm(f, between(rng, 1, 4), rng.below(2) == 0);
        jitter(p, rng);
        return p;
      },
      [&](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 1, 6), f}; }, Mode::train, 17);
}

TEST(GradCheck, Dropout) {
  run_instances([](Rng& rng) { return make_dropout(rng.uniform(0.1, 0.7)); },
                [](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 1, 20)}; }, Mode::train, 18);
}

TEST(GradCheck, Activations) {
  for (Activation a : {Activation::relu, Activation::elu, Activation::sigmoid, Activation::tanh,
                       Activation::softmax, Activation::linear}) {
    SCOPED_TRACE(std::string(to_string(a)));
    run_instances([&](Rng&) { return make_activation(a); },
                  [](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 2, 7)}; }, Mode::train, 19);
  }
}

TEST(GradCheck, WSenseBlock) {
  std::size_t c = 0;
  run_instances(
      [&](Rng& rng) {
        c = between(rng, 1, 5);
        LayerParams p = make_wsense(c);
        jitter(p, rng);
        return p;
      },
      [&](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 1, 12), c}; }, Mode::train, 20);
}

TEST(GradCheck, SEBlock) {
  std::size_t c = 0;
  run_instances(
      [&](Rng& rng) {
        const std::size_t r = between(rng, 1, 3);
        c = r * between(rng, 1, 3);
        LayerParams p = make_se(c, r);
        jitter(p, rng);
        return p;
      },
      [&](Rng& rng) { return Shape{between(rng, 1, 3), between(rng, 1, 8), c}; }, Mode::train, 21);
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  Rng rng(22);
  double worst = 0.0;
  for (int inst = 0; inst < kInstances; ++inst) {
    const std::size_t B = between(rng, 1, 5), K = between(rng, 2, 8);
    Tensor z = oracle::random_tensor({B, K}, rng, -3, 3);
    std::vector<int> targets(B);
    for (auto& t : targets) t = static_cast<int>(rng.below(K));
    auto loss = [&] { return cross_entropy_loss(apply_activation(Activation::softmax, z), targets).loss; };
    const Tensor analytic = cross_entropy_loss(apply_activation(Activation::softmax, z), targets).logit_grad;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double e = oracle::rel_error(analytic[i], oracle::central_difference(z, i, loss));
      EXPECT_LT(e, kTolerance);
      worst = std::max(worst, e);
    }
  }
  ::testing::Test::RecordProperty("max_rel_error", std::to_string(worst));
}

// The whole tape: gradients of a full pipeline on a tiny batch, for a
// sample of parameters in every layer. Dropout and batch statistics are on.
class ModelGradCheck : public ::testing::TestWithParam<Arch> {};

TEST_P(ModelGradCheck, SampledParameters) {
  const Arch arch = GetParam();
  ModelSpec m = build_model(arch, min_window(arch), 2, 3, 5);
  Rng rng(23);
  const Tensor x = oracle::random_tensor({2, m.window_size, 2}, rng);
  const std::vector<int> targets{0, 2};

  auto loss = [&] {
    Rng drop(31);
    return cross_entropy_loss(forward(m, x, Mode::train, &drop), targets).loss;
  };
  GradTape tape;
  Rng drop(31);
  const Tensor probs = forward(m, x, Mode::train, &drop, tape);
  // forward with a tape moved the moving statistics; they do not enter a
  // train-mode loss, so the finite differences below are unaffected.
  backward(m, tape, cross_entropy_loss(probs, targets).logit_grad, GradientOf::logits);

  auto refs = parameters(m);
  ASSERT_EQ(refs.size(), tape.grads.size());
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    if (!refs[k].param->trainable) continue;
    Tensor& w = refs[k].param->value;
    for (int s = 0; s < 6; ++s) {
      const std::size_t i = rng.below(w.size());
      const double e = oracle::rel_error(tape.grads[k][i], oracle::central_difference(w, i, loss));
      EXPECT_LT(e, kTolerance) << refs[k].path << "[" << i << "]";
      worst = std::max(worst, e);
      ++checked;
    }
  }
  ::testing::Test::RecordProperty("max_rel_error", std::to_string(worst));
  ::testing::Test::RecordProperty("checked", std::to_string(checked));
}

INSTANTIATE_TEST_SUITE_P(AllArchs, ModelGradCheck, ::testing::ValuesIn(kAllArchs),
                         [](const auto& info) {
                           std::string s(to_string(info.param));
                           for (auto& ch : s) ch = ch == '-' ? '_' : ch;
                           return s;
                         });
