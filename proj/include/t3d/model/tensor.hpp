#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace t3d::model {

/// Dense NCDHW tensor. Two-dimensional data uses depth 1.
template <typename T>
struct Tensor {
  std::array<int, 5> shape{0, 0, 1, 1, 1};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n, int c, int d, int h, int w) : shape{n, c, d, h, w}, data(static_cast<std::size_t>(n) * c * d * h * w, T(0)) {}

  int batch() const { return shape[0]; }
  int channels() const { return shape[1]; }
  std::size_t spatial() const { return static_cast<std::size_t>(shape[2]) * shape[3] * shape[4]; }
  std::size_t per_example() const { return static_cast<std::size_t>(shape[1]) * spatial(); }
  std::size_t size() const { return data.size(); }

  std::span<T> example(int n) { return std::span<T>(data).subspan(n * per_example(), per_example()); }
  std::span<const T> example(int n) const { return std::span<const T>(data).subspan(n * per_example(), per_example()); }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& in) {
  Tensor<To> out;
  out.shape = in.shape;
  out.data.assign(in.data.begin(), in.data.end());
  return out;
}

}  // namespace t3d::model
