#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fea2fea/error.hpp"

namespace fea2fea {

/// Dense row-major array of doubles with an explicit shape. Most of the
/// engine works on rank-2 tensors; scalars have shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)), data(count(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != count(shape)) throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_string(shape));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) { return Tensor({rows, cols}, std::move(values)); }
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
  }

  std::string shape_string() const { return shape_string(shape); }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double item() const {
    if (data.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
    return data[0];
  }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Trainable array plus its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape, 0.0); }
};

}  // namespace fea2fea
