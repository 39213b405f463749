#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace adgn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of 32-bit reals. This is the unit of numeric
/// exchange: model parameters, minibatches and every tensor payload on the
/// wire. Computation happens inside a Graph, which reads tensors in and
/// writes gradients back.
struct Tensor {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::optional<std::vector<float>> grad;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);
  Tensor(Shape s, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  float& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void zero_grad() { grad.reset(); }
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

}  // namespace adgn
