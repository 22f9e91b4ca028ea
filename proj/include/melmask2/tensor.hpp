#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "melmask2/errors.hpp"

namespace melmask2 {

// Dense row-major tensor. Ranks used in this project are 1..3; the last
// axis is always the frequency axis for layer activations.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), T(0));
  }
  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw InvalidInputError("tensor data length does not match shape");
  }

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw InvalidInputError("negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2-D / 3-D accessors (row-major).
  T& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  const T& at(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  T& at(int i, int j, int k) {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != data_.size())
      throw InvalidInputError("reshape changes element count");
    return Tensor(std::move(shape), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

// All stochastic behavior in the project flows through explicitly seeded
// 64-bit generators; a name string lets independent streams coexist.
inline std::mt19937_64 named_rng(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return std::mt19937_64(seed ^ h);
}

// Uniform init in +/- sqrt(1/fan_in), generated in double so float and
// double instantiations of a model agree to float precision.
template <typename T>
void init_uniform_fanin(Tensor<T>& w, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(dist(rng));
}

}  // namespace melmask2
