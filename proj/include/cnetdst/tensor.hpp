#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cnetdst/errors.hpp"
#include "cnetdst/rng.hpp"

namespace cnetdst {

// Dense row-major tensor of 64-bit reals. Only rank 1 and rank 2 are needed
// by the model; the shape vector keeps the invariant product(shape) == size.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros_vector(std::size_t n) {
    Tensor t;
    t.shape = {n};
    t.data.assign(n, 0.0);
    return t;
  }

  static Tensor zeros_matrix(std::size_t rows, std::size_t cols) {
    Tensor t;
    t.shape = {rows, cols};
    t.data.assign(rows * cols, 0.0);
    return t;
  }

  static Tensor from_vector(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
  }

  // Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)).
  static Tensor glorot_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = zeros_matrix(rows, cols);
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& x : t.data) x = rng.uniform(-bound, bound);
    return t;
  }

  std::size_t size() const { return data.size(); }
  bool is_vector() const { return shape.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 0 : shape[1]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::size_t r, std::size_t c) {
    assert(is_matrix());
    return data[r * shape[1] + c];
  }
  double at(std::size_t r, std::size_t c) const {
    assert(is_matrix());
    return data[r * shape[1] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }

  Tensor zeros_like() const {
    Tensor t;
    t.shape = shape;
    t.data.assign(data.size(), 0.0);
    return t;
  }
};

inline std::string shape_string(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + ")";
}

}  // namespace cnetdst
