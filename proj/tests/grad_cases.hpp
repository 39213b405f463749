#pragma once

// Scalar test functions, one per autodiff op kind, shared by the unit and
// acceptance suites.

#include <functional>
#include <vector>

#include "adgn/autodiff.hpp"
#include "adgn/rng.hpp"

namespace adgn::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(shape);
  for (auto& v : t.data) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return t;
}

struct OpCase {
  const char* name;
  Shape shape;
  std::function<Var(Graph&, Var, std::uint64_t)> f;
  double lo = -1.0;
  double hi = 1.0;
};

inline std::vector<OpCase> op_cases() {
  return {
      {"add", {3, 4}, [](Graph& g, Var x, std::uint64_t s) {
         return g.sum(g.mul(g.add(x, g.constant(random_tensor({3, 4}, s + 1))), x));
       }},
      {"sub", {3, 4}, [](Graph& g, Var x, std::uint64_t s) {
         return g.sum(g.mul(g.sub(g.constant(random_tensor({3, 4}, s + 1)), x), x));
       }},
      {"mul", {5}, [](Graph& g, Var x, std::uint64_t s) {
         return g.sum(g.mul(x, g.constant(random_tensor({5}, s + 1))));
       }},
      {"scale", {5}, [](Graph& g, Var x, std::uint64_t) { return g.sum(g.mul(g.scale(x, -2.5), x)); }},
      {"matmul", {3, 4}, [](Graph& g, Var x, std::uint64_t s) {
         Var y = g.matmul(x, g.constant(random_tensor({4, 2}, s + 1)));
         return g.sum(g.mul(y, y));
       }},
      {"matmul_nt", {4, 3}, [](Graph& g, Var x, std::uint64_t s) {
         Var y = g.matmul_nt(g.constant(random_tensor({2, 3}, s + 1)), x);
         return g.sum(g.mul(y, y));
       }},
      {"add_bias", {3}, [](Graph& g, Var b, std::uint64_t s) {
         Var y = g.add_bias(g.constant(random_tensor({4, 3}, s + 1)), b);
         return g.sum(g.mul(y, y));
       }},
      {"mean", {6}, [](Graph& g, Var x, std::uint64_t) { return g.mean(g.mul(x, x)); }},
      {"sum", {6}, [](Graph& g, Var x, std::uint64_t) { return g.sum(g.mul(x, x)); }},
      {"concat", {4, 1}, [](Graph& g, Var x, std::uint64_t s) {
         Var c = g.concat(x, g.constant(random_tensor({4, 2}, s + 1)));
         return g.sum(g.mul(c, c));
       }},
      {"relu", {8}, [](Graph& g, Var x, std::uint64_t) { return g.sum(g.mul(g.relu(x), x)); }},
      {"leaky_relu", {8}, [](Graph& g, Var x, std::uint64_t) {
         return g.sum(g.mul(g.leaky_relu(x, 0.2), x));
       }},
      {"sigmoid", {6}, [](Graph& g, Var x, std::uint64_t) { return g.sum(g.sigmoid(g.scale(x, 3.0))); }},
      {"log", {6}, [](Graph& g, Var x, std::uint64_t) { return g.sum(g.log(x)); }, 0.5, 2.0},
      {"softplus", {6}, [](Graph& g, Var x, std::uint64_t) { return g.sum(g.softplus(g.scale(x, 4.0))); }},
      {"dropout", {10}, [](Graph& g, Var x, std::uint64_t s) {
         Rng rng(s);  // reseeded per evaluation, so the mask is fixed
         return g.sum(g.mul(g.dropout(x, 0.5, rng), x));
       }},
  };
}

}  // namespace adgn::testing
