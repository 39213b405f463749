#include <cmath>
#include <cstring>
#include <filesystem>

#include "adgn/error.hpp"
#include "adgn/gan.hpp"
#include "adgn/nn.hpp"
#include "doctest.h"

using namespace adgn;

namespace {

void set_grad(Tensor& t, float g) {
  t.grad.emplace(t.size(), g);
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("init is seed-reproducible with zero biases") {
  GeneratorNet a(3), b(3);
  init_params(a, 11);
  init_params(b, 11);
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    CHECK(a.layers()[i].weight == b.layers()[i].weight);
    for (float v : a.layers()[i].bias.data) CHECK(v == 0.0f);
  }
  GeneratorNet c(3);
  init_params(c, 12);
  CHECK_FALSE(a.layers()[1].weight == c.layers()[1].weight);
}

TEST_CASE("init respects the fan-in bound") {
  std::vector<LinearLayer> layers;
  layers.emplace_back(100, 20);
  init_params(layers, 5);
  for (float v : layers[0].weight.data) CHECK(std::abs(v) <= 0.1f);
}

TEST_CASE("default shapes") {
  GeneratorNet g(3);
  REQUIRE(g.layers().size() == 3);
  CHECK(g.layers()[0].weight.shape == Shape{64, 3});
  CHECK(g.layers()[1].weight.shape == Shape{64, 64});
  CHECK(g.layers()[2].weight.shape == Shape{1, 64});
  DiscriminatorNet d(3);
  CHECK(d.layers()[0].weight.shape == Shape{64, 4});
  CHECK(d.layers()[2].weight.shape == Shape{1, 64});
  for (Tensor* p : g.parameters()) CHECK(p->requires_grad);
}

TEST_CASE("generator output varies through dropout alone") {
  GeneratorNet g(3);
  init_params(g, 1);
  Rng rng(2);
  Graph graph;
  const std::vector<std::uint32_t> xs(1000, 1);
  const Tensor y = graph.value(g.forward(graph, graph.constant(one_hot(xs, 3)), rng));
  double mean = 0.0, var = 0.0;
  for (float v : y.data) mean += v;
  mean /= 1000.0;
  for (float v : y.data) var += (v - mean) * (v - mean);
  CHECK(var / 1000.0 > 0.0);
}

TEST_CASE("adam first step") {
  Tensor theta({1}, 0.0f);
  theta.requires_grad = true;
  set_grad(theta, 1.0f);
  OptimizerState s(AdamParams{});
  adam_step({&theta}, s);
  CHECK(s.step == 1);
  CHECK(theta.data[0] == doctest::Approx(-2e-4 / (1.0 + 1e-8)).epsilon(1e-6));
}

TEST_CASE("adam zero gradient leaves theta unchanged") {
  Tensor theta({2}, 0.7f);
  set_grad(theta, 0.0f);
  OptimizerState s(AdamParams{});
  adam_step({&theta}, s);
  CHECK(theta.data[0] == 0.7f);
  CHECK(theta.data[1] == 0.7f);
}

TEST_CASE("adam keeps per-parameter moments") {
  Tensor a({1}, 0.0f), b({1}, 0.0f), solo({1}, 0.0f);
  OptimizerState joint(AdamParams{}), alone(AdamParams{});
  for (int i = 0; i < 3; ++i) {
    set_grad(a, 1.0f);
    set_grad(b, -5.0f);
    set_grad(solo, 1.0f);
    adam_step({&a, &b}, joint);
    adam_step({&solo}, alone);
  }
  CHECK(a.data[0] == solo.data[0]);
  CHECK(b.data[0] > 0.0f);
}

TEST_CASE("missing gradient is a contract violation") {
  Tensor a({1}, 0.0f);
  OptimizerState s(AdamParams{});
  CHECK_THROWS_AS(adam_step({&a}, s), ContractViolation);
  OptimizerState m(SgdMomentumParams{1.0, 0.9});
  CHECK_THROWS_AS(sgd_momentum_step({&a}, m), ContractViolation);
}

TEST_CASE("sgd momentum examples") {
  Tensor theta({1}, 0.0f);
  OptimizerState s(SgdMomentumParams{1.0, 0.9});
  set_grad(theta, 1.0f);
  sgd_momentum_step({&theta}, s);
  CHECK(theta.data[0] == doctest::Approx(-1.0));
  set_grad(theta, 1.0f);
  sgd_momentum_step({&theta}, s);
  CHECK(theta.data[0] == doctest::Approx(-2.9));

  Tensor plain({1}, 2.0f);
  OptimizerState p(SgdMomentumParams{0.5, 0.0});
  set_grad(plain, 3.0f);
  optimizer_step({&plain}, p);
  CHECK(plain.data[0] == doctest::Approx(0.5));

  Tensor idle({1}, 2.0f);
  OptimizerState q(SgdMomentumParams{0.5, 0.9});
  set_grad(idle, 0.0f);
  sgd_momentum_step({&idle}, q);
  CHECK(idle.data[0] == 2.0f);
}

TEST_CASE("checkpoint round trip and layout") {
  GeneratorNet g(3);
  init_params(g, 9);
  const auto named = snapshot(g.named_parameters());
  const auto bytes = encode_checkpoint(named);
  REQUIRE(bytes.size() > 9);
  CHECK(std::memcmp(bytes.data(), "ADGN", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == named.size());  // u32 count, little-endian
  CHECK(decode_checkpoint(bytes) == named);

  const auto path = std::filesystem::temp_directory_path() / "adgn_nn_ckpt.bin";
  save_checkpoint(path.string(), named);
  GeneratorNet h(3);
  restore(h, load_checkpoint(path.string()));
  for (std::size_t i = 0; i < 3; ++i) CHECK(h.layers()[i].weight == g.layers()[i].weight);
  std::filesystem::remove(path);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(decode_checkpoint(bad));
  bad = bytes;
  bad.resize(bytes.size() - 3);
  CHECK_THROWS(decode_checkpoint(bad));
  DiscriminatorNet d(3);
  CHECK_THROWS_AS(restore(d, named), ContractViolation);
}

}  // TEST_SUITE
