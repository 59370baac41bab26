#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "patchlab/common.hpp"

namespace patchlab {

// Dense row-major tensor. Training uses float; gradient-check tests
// instantiate the same layers with double.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }
  std::size_t numel() const { return data.size(); }

  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool operator==(const Tensor&) const = default;
};

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace patchlab
