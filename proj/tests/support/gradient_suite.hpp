#pragma once

// Finite-difference cases for every differentiable kernel. Each case fixes
// all operands except one and reduces the kernel output to a scalar through
// a fixed random projection, so that every output element contributes.

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mrinet/gradcheck.hpp"
#include "support/random_tensor.hpp"

namespace testing_support {

struct GradientCase {
  std::string kernel;
  std::string name;
  mrinet::ScalarFunction f;
  mrinet::Tensor<double> point;
};

inline mrinet::Var project(mrinet::Tape<double> &t, mrinet::Var v, std::uint64_t seed) {
  mrinet::Rng rng(seed);
  return t.weighted_sum(v, random_tensor(t.value(v).shape(), rng));
}

// Distinct values at least 1e-3 apart so that a finite-difference step can
// never change the max-pool winner.
inline mrinet::Tensor<double> distinct_values(mrinet::Shape shape, mrinet::Rng &rng) {
  mrinet::Tensor<double> t(std::move(shape));
  std::vector<double> v(t.size());
  std::iota(v.begin(), v.end(), 0.0);
  mrinet::shuffle(v.begin(), v.end(), rng);
  for (std::size_t i = 0; i < v.size(); ++i)
    t[i] = v[i] * 1e-2 - 0.5 * double(v.size()) * 1e-2;
  return t;
}

inline std::vector<GradientCase> kernel_gradient_cases(std::uint64_t seed = 7) {
  using namespace mrinet;
  Rng rng(seed);
  std::vector<GradientCase> cases;

  // conv2d
  {
    ConvSpec s{3, 3, 3, 4, 2, Padding::same, true};
    auto x = random_tensor({2, 6, 6, 3}, rng);
    auto w = random_tensor({3, 3, 3, 4}, rng);
    auto b = random_tensor({4}, rng);
    cases.push_back({"conv2d", "input", [=](Tape<double> &t, Var v) {
                       return project(t, t.conv2d(v, t.constant(w), t.constant(b), s), 1);
                     }, x});
    cases.push_back({"conv2d", "weights", [=](Tape<double> &t, Var v) {
                       return project(t, t.conv2d(t.constant(x), v, t.constant(b), s), 1);
                     }, w});
    cases.push_back({"conv2d", "bias", [=](Tape<double> &t, Var v) {
                       return project(t, t.conv2d(t.constant(x), t.constant(w), v, s), 1);
                     }, b});
    ConvSpec sv{2, 3, 2, 3, 1, Padding::valid, false};
    auto x2 = random_tensor({1, 7, 8, 2}, rng);
    auto w2 = random_tensor({2, 3, 2, 3}, rng);
    cases.push_back({"conv2d", "valid-input", [=](Tape<double> &t, Var v) {
                       return project(t, t.conv2d(v, t.constant(w2), std::nullopt, sv), 2);
                     }, x2});
    ConvSpec sp{1, 1, 5, 3, 1, Padding::same, false};
    auto x3 = random_tensor({2, 4, 4, 5}, rng);
    auto w3 = random_tensor({1, 1, 5, 3}, rng);
    cases.push_back({"conv2d", "pointwise-weights", [=](Tape<double> &t, Var v) {
                       return project(t, t.conv2d(t.constant(x3), v, std::nullopt, sp), 3);
                     }, w3});
  }
  // depthwise_conv2d
  {
    ConvSpec s{3, 3, 4, 4, 2, Padding::same, true};
    auto x = random_tensor({2, 6, 5, 4}, rng);
    auto w = random_tensor({3, 3, 4, 1}, rng);
    auto b = random_tensor({4}, rng);
    cases.push_back({"depthwise_conv2d", "input", [=](Tape<double> &t, Var v) {
                       return project(t, t.depthwise_conv2d(v, t.constant(w), t.constant(b), s), 4);
                     }, x});
    cases.push_back({"depthwise_conv2d", "weights", [=](Tape<double> &t, Var v) {
                       return project(t, t.depthwise_conv2d(t.constant(x), v, t.constant(b), s), 4);
                     }, w});
    cases.push_back({"depthwise_conv2d", "bias", [=](Tape<double> &t, Var v) {
                       return project(t, t.depthwise_conv2d(t.constant(x), t.constant(w), v, s), 4);
                     }, b});
  }
  // max_pool2d
  {
    auto x = distinct_values({2, 7, 7, 3}, rng);
    cases.push_back({"max_pool2d", "same-3x3-s2", [=](Tape<double> &t, Var v) {
                       return project(t, t.max_pool2d(v, PoolSpec{3, 3, 2, Padding::same}), 5);
                     }, x});
  }
  // global_average_pool
  cases.push_back({"global_average_pool", "input", [](Tape<double> &t, Var v) {
                     return project(t, t.global_average_pool(v), 6);
                   }, random_tensor({2, 5, 5, 4}, rng)});
  // dense_affine
  {
    auto x = random_tensor({4, 16}, rng);
    auto w = random_tensor({16, 8}, rng);
    auto b = random_tensor({8}, rng);
    cases.push_back({"dense_affine", "input", [=](Tape<double> &t, Var v) {
                       return project(t, t.dense(v, t.constant(w), t.constant(b)), 7);
                     }, x});
    cases.push_back({"dense_affine", "weights", [=](Tape<double> &t, Var v) {
                       return project(t, t.dense(t.constant(x), v, t.constant(b)), 7);
                     }, w});
    cases.push_back({"dense_affine", "bias", [=](Tape<double> &t, Var v) {
                       return project(t, t.dense(t.constant(x), t.constant(w), v), 7);
                     }, b});
  }
  // batch_norm
  {
    auto x = random_tensor({3, 4, 4, 3}, rng, -2, 3);
    auto gamma = random_tensor({3}, rng, 0.5, 1.5);
    auto beta = random_tensor({3}, rng);
    auto mean = std::make_shared<Tensor<double>>(random_tensor({3}, rng));
    auto var = std::make_shared<Tensor<double>>(random_tensor({3}, rng, 0.5, 2.0));
    for (Mode mode : {Mode::train, Mode::infer}) {
      std::string tag = mode == Mode::train ? "train-" : "infer-";
      // Each evaluation works on a private copy of the running statistics.
      cases.push_back({"batch_norm", tag + "input", [=](Tape<double> &t, Var v) {
                         auto m = std::make_shared<Tensor<double>>(*mean);
                         auto s = std::make_shared<Tensor<double>>(*var);
                         auto out = t.batch_norm(v, t.constant(gamma), t.constant(beta), *m, *s, mode);
                         return project(t, out, 8);
                       }, x});
      cases.push_back({"batch_norm", tag + "gamma", [=](Tape<double> &t, Var v) {
                         Tensor<double> m = *mean, s = *var;
                         auto out = t.batch_norm(t.constant(x), v, t.constant(beta), m, s, mode);
                         return project(t, out, 8);
                       }, gamma});
      cases.push_back({"batch_norm", tag + "beta", [=](Tape<double> &t, Var v) {
                         Tensor<double> m = *mean, s = *var;
                         auto out = t.batch_norm(t.constant(x), t.constant(gamma), v, m, s, mode);
                         return project(t, out, 8);
                       }, beta});
    }
  }
  // activations, away from the kinks at 0 and 6
  {
    auto x = away_from_zero({4, 40}, rng);
    cases.push_back({"relu", "input", [](Tape<double> &t, Var v) {
                       return project(t, t.relu(v), 9);
                     }, x});
    Tensor<double> y({160});
    for (std::size_t i = 0; i < y.size(); ++i) {
      switch (i % 4) {
      case 0: y[i] = rng.uniform(0.05, 5.95); break;
      case 1: y[i] = rng.uniform(6.05, 8.0); break;
      case 2: y[i] = -rng.uniform(0.05, 2.0); break;
      default: y[i] = rng.uniform(1.0, 5.0); break;
      }
    }
    cases.push_back({"relu6", "input", [](Tape<double> &t, Var v) {
                       return project(t, t.relu6(v), 10);
                     }, y});
  }
  // add (used by residual shortcuts): the variable feeds both operands.
  {
    auto other = random_tensor({2, 3, 3, 6}, rng);
    cases.push_back({"add", "both-operands", [=](Tape<double> &t, Var v) {
                       return project(t, t.add(t.add(v, t.constant(other)), v), 11);
                     }, random_tensor({2, 3, 3, 6}, rng)});
  }
  // softmax
  cases.push_back({"softmax", "logits", [](Tape<double> &t, Var v) {
                     return project(t, t.softmax(v), 12);
                   }, random_tensor({20, 5}, rng, -3, 3)});
  // dropout with a fixed mask
  cases.push_back({"dropout", "train", [](Tape<double> &t, Var v) {
                     Rng r(99);
                     return project(t, t.dropout(v, 0.2, Mode::train, r), 13);
                   }, random_tensor({4, 40}, rng)});
  // fused softmax + sparse categorical cross-entropy
  {
    std::vector<int> labels;
    for (int i = 0; i < 24; ++i)
      labels.push_back(int(rng.below(5)));
    cases.push_back({"softmax_cross_entropy", "logits", [=](Tape<double> &t, Var v) {
                       return t.softmax_cross_entropy(v, labels);
                     }, random_tensor({24, 5}, rng, -2, 2)});
  }
  return cases;
}

} // namespace testing_support
