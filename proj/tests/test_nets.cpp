#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fd_check.hpp"
#include "macc/nets.hpp"
#include "macc/rng.hpp"

using namespace macc;
using namespace macc::nets;
using doctest::Approx;

TEST_CASE("dense net: single identity layer backpropagates W^T upstream") {
  DenseNet net({3, 2}, {Activation::kIdentity});
  Rng rng(1);
  net.init(rng);
  Vec params = net.flatten_params();

  Vec x = {0.5, -1.0, 2.0};
  DenseNet::Cache cache;
  Vec y = net.forward(x, &cache);
  REQUIRE(y.size() == 2);

  Vec upstream = {1.0, -2.0};
  Vec pg(net.n_params(), 0.0);
  Vec dx = net.backward(cache, upstream, pg);

  // Input gradient equals W^T upstream; W is stored row-major first.
  for (int c = 0; c < 3; ++c) {
    double expect = params[0 * 3 + c] * upstream[0] + params[1 * 3 + c] * upstream[1];
    CHECK(dx[c] == Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("dense net: zero upstream gradient gives all-zero grads") {
  DenseNet net({4, 8, 2}, {Activation::kTanh, Activation::kIdentity});
  Rng rng(2);
  net.init(rng);
  DenseNet::Cache cache;
  net.forward({0.1, 0.2, 0.3, 0.4}, &cache);
  Vec pg(net.n_params(), 0.0);
  Vec dx = net.backward(cache, {0.0, 0.0}, pg);
  for (double g : pg) CHECK(g == 0.0);
  for (double g : dx) CHECK(g == 0.0);
}

TEST_CASE("dense net: parameters round-trip through flatten/unflatten") {
  DenseNet net({5, 7, 3}, {Activation::kRelu, Activation::kIdentity});
  Rng rng(3);
  net.init(rng);
  Vec p = net.flatten_params();
  DenseNet net2({5, 7, 3}, {Activation::kRelu, Activation::kIdentity});
  net2.unflatten_params(p);
  CHECK(net2.flatten_params() == p);
  Vec x = {1, 2, 3, 4, 5};
  CHECK(net.forward(x) == net2.forward(x));
}

TEST_CASE("dense net: finite differences confirm the analytic gradients") {
  Rng rng(4);
  int checked = 0;
  while (checked < 30) {
    int in = 2 + rng.uniform_int(3);
    int hidden = 2 + rng.uniform_int(4);
    Activation act = (checked % 3 == 0)   ? Activation::kRelu
                     : (checked % 3 == 1) ? Activation::kTanh
                                          : Activation::kIdentity;
    DenseNet net({in, hidden, 1}, {act, Activation::kIdentity});
    net.init(rng);
    Vec x(in);
    for (double& v : x) v = rng.normal();
    if (act == Activation::kRelu && testutil::near_relu_kink(net, x)) continue;

    Vec params = net.flatten_params();
    auto loss = [&](const Vec& p) {
      DenseNet probe = net;
      probe.unflatten_params(p);
      return probe.forward(x)[0];
    };
    DenseNet::Cache cache;
    net.forward(x, &cache);
    Vec analytic(net.n_params(), 0.0);
    net.backward(cache, {1.0}, analytic);
    double err = testutil::fd_relative_error(loss, params, analytic);
    CHECK(err <= 1e-4);
    ++checked;
  }
}

TEST_CASE("set pool: mean pooling is bit-exact under element permutation") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    SetPoolNet net(DenseNet({4, 8}, {Activation::kRelu}), Pooling::kMean,
                   DenseNet({8, 1}, {Activation::kIdentity}));
    net.init(rng);
    int m = 2 + rng.uniform_int(5);
    std::vector<Vec> elements(m, Vec(4));
    for (auto& e : elements)
      for (double& v : e) v = rng.normal();
    Vec base = net.forward(elements);
    std::vector<Vec> shuffled = elements;
    for (int i = m - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.uniform_int(i + 1)]);
    CHECK(net.forward(shuffled) == base);
  }
}

TEST_CASE("set pool: max pooling is exactly permutation invariant") {
  Rng rng(6);
  SetPoolNet net(DenseNet({3, 6}, {Activation::kTanh}), Pooling::kMax,
                 DenseNet({6, 2}, {Activation::kIdentity}));
  net.init(rng);
  std::vector<Vec> elements = {{1, 2, 3}, {-1, 0.5, 2}, {0, 0, 0}, {4, -2, 1}};
  Vec base = net.forward(elements);
  std::reverse(elements.begin(), elements.end());
  CHECK(net.forward(elements) == base);
}

TEST_CASE("set pool: 0/1 weights reproduce subset evaluation bit for bit") {
  Rng rng(7);
  SetPoolNet net(DenseNet({4, 8}, {Activation::kRelu}), Pooling::kMean,
                 DenseNet({8, 1}, {Activation::kIdentity}));
  net.init(rng);
  std::vector<Vec> elements(5, Vec(4));
  for (auto& e : elements)
    for (double& v : e) v = rng.normal();
  Vec weights = {1.0, 0.0, 1.0, 0.0, 1.0};
  Vec masked = net.forward(elements, nullptr, &weights);
  std::vector<Vec> subset = {elements[0], elements[2], elements[4]};
  CHECK(net.forward(subset) == masked);
}

TEST_CASE("set pool: linear head commutes with the mean over a two-element set") {
  // With a linear head, the pooled value of two elements is the average of
  // the per-element values pushed through the head.
  Rng rng(8);
  SetPoolNet net(DenseNet({3, 5}, {Activation::kTanh}), Pooling::kMean,
                 DenseNet({5, 1}, {Activation::kIdentity}));
  net.init(rng);
  std::vector<Vec> pair = {{0.3, -0.7, 1.1}, {2.0, 0.4, -0.9}};
  double both = net.forward(pair)[0];
  double a = net.forward({pair[0]})[0];
  double b = net.forward({pair[1]})[0];
  CHECK(both == Approx(0.5 * (a + b)).epsilon(1e-12));
}

TEST_CASE("gumbel: forward output is one-hot by construction") {
  GumbelSampler sampler(1.0);
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    auto s = sampler.sample({0.3, -0.5, 1.2}, rng);
    CHECK(s.index >= 0);
    CHECK(s.index < 3);
  }
}

TEST_CASE("gumbel: symmetric logits sample both categories evenly") {
  GumbelSampler sampler(1.0);
  Rng rng(10);
  int zeros = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) zeros += sampler.sample({0.0, 0.0}, rng).index == 0;
  double freq = static_cast<double>(zeros) / draws;
  CHECK(freq == Approx(0.5).epsilon(0.02));
}

TEST_CASE("gumbel: strongly separated logits pick the top category") {
  GumbelSampler sampler(1.0);
  Rng rng(11);
  int zeros = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) zeros += sampler.sample({10.0, -10.0}, rng).index == 0;
  CHECK(static_cast<double>(zeros) / draws >= 0.999);
}

TEST_CASE("gumbel: straight-through gradient matches fixed-noise finite differences") {
  GumbelSampler sampler(1.0);
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    int k = 2 + rng.uniform_int(3);
    Vec logits(k), noise(k), weights(k);
    for (double& v : logits) v = rng.normal();
    for (double& v : noise) v = rng.gumbel();
    for (double& v : weights) v = rng.normal();

    // Scalar loss through the relaxed pathway: weights . soft(logits).
    auto loss = [&](const Vec& l) {
      Vec s = sampler.soft(l, noise);
      return dot(weights, s);
    };
    Vec soft = sampler.soft(logits, noise);
    Vec analytic = sampler.backward(soft, weights);
    double err = testutil::fd_relative_error(loss, logits, analytic);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  AdamState opt(3, 0.01);
  Vec params = {1.0, -2.0, 0.5};
  Vec before = params;
  for (int i = 0; i < 10; ++i) opt.step(params, {0.0, 0.0, 0.0});
  CHECK(params == before);
}

TEST_CASE("adam: first step magnitude is the learning rate, whatever the gradient scale") {
  for (double g : {1e-4, 1.0, 1e4}) {
    AdamState opt(1, 0.01);
    Vec params = {0.0};
    opt.step(params, {g});
    // Bias-corrected first iterate: lr * g / (|g| + eps).
    CHECK(std::fabs(params[0]) == Approx(0.01).epsilon(1e-3));
    CHECK(params[0] < 0.0);
  }
}

TEST_CASE("adam: identical seeds give identical trajectories") {
  auto run = [] {
    Rng rng(77);
    DenseNet net({2, 4, 1}, {Activation::kTanh, Activation::kIdentity});
    net.init(rng);
    Vec params = net.flatten_params();
    AdamState opt(static_cast<int>(params.size()), 0.01);
    for (int step = 0; step < 50; ++step) {
      Vec x = {rng.normal(), rng.normal()};
      net.unflatten_params(params);
      DenseNet::Cache cache;
      double y = net.forward(x, &cache)[0];
      Vec pg(net.n_params(), 0.0);
      net.backward(cache, {2.0 * (y - 1.0)}, pg);
      opt.step(params, pg);
    }
    return params;
  };
  CHECK(run() == run());
}

TEST_CASE("params: save/load round-trips the flat vectors") {
  auto dir = std::filesystem::temp_directory_path() / "macc_params_test.bin";
  std::vector<std::pair<std::string, Vec>> entries = {
      {"critic", {1.0, 2.5, -3.25}}, {"actor", {0.0, -1.0}}, {"gate", {42.0}}};
  save_params(dir.string(), entries);
  auto loaded = load_params(dir.string());
  REQUIRE(loaded.size() == entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(loaded[i].first == entries[i].first);
    CHECK(loaded[i].second == entries[i].second);
  }
  std::filesystem::remove(dir);
  std::filesystem::remove(dir.string() + ".manifest");
}

TEST_CASE("set pool: gradients (params, inputs, weights) match finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    SetPoolNet net(DenseNet({3, 6}, {Activation::kTanh}), Pooling::kMean,
                   DenseNet({6, 1}, {Activation::kIdentity}));
    net.init(rng);
    int m = 2 + rng.uniform_int(3);
    std::vector<Vec> elements(m, Vec(3));
    for (auto& e : elements)
      for (double& v : e) v = rng.normal();
    Vec weights(m);
    for (double& w : weights) w = 0.2 + rng.uniform();

    SetPoolNet::Cache cache;
    net.forward(elements, &cache, &weights);
    auto grads = net.backward(elements, cache, {1.0});

    // Parameter gradients.
    Vec params = net.flatten_params();
    Vec analytic_params = grads.encoder_params;
    analytic_params.insert(analytic_params.end(), grads.head_params.begin(),
                           grads.head_params.end());
    auto loss_params = [&](const Vec& p) {
      SetPoolNet probe = net;
      probe.unflatten_params(p);
      return probe.forward(elements, nullptr, &weights)[0];
    };
    CHECK(testutil::fd_relative_error(loss_params, params, analytic_params) <= 1e-4);

    // Element-weight gradients.
    auto loss_weights = [&](const Vec& w) { return net.forward(elements, nullptr, &w)[0]; };
    CHECK(testutil::fd_relative_error(loss_weights, weights, grads.weights) <= 1e-4);

    // Input gradients of the first element.
    auto loss_input = [&](const Vec& e0) {
      std::vector<Vec> mod = elements;
      mod[0] = e0;
      return net.forward(mod, nullptr, &weights)[0];
    };
    CHECK(testutil::fd_relative_error(loss_input, elements[0], grads.inputs[0]) <= 1e-4);
  }
}
