// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace photofit {

/// Raised for shape, size or configuration mismatches.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cache-line aligned storage. Vectorised reductions peel to the next aligned
/// address, so a fixed base alignment keeps their summation order, and with it
/// every result, independent of where the heap happens to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign))); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(kAlign)); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::string dims_to_string(std::span<const int> dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t dims_product(std::span<const int> dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

/// Dense row-major tensor. The element type is a template parameter so the
/// finite-difference oracle can evaluate the same layer code in 64-bit.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<int> dims, T fill = T{0})
      : dims_(std::move(dims)) {
    check_dims();
    data_.assign(dims_product(dims_), fill);
  }

  BasicTensor(std::vector<int> dims, const std::vector<T>& data)
      : BasicTensor(std::move(dims), AlignedVector<T>(data.begin(), data.end())) {}

  BasicTensor(std::vector<int> dims, AlignedVector<T> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims();
    if (dims_product(dims_) != data_.size()) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match dims " + dims_to_string(dims_));
    }
  }

  const std::vector<int>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  BasicTensor reshaped(std::vector<int> dims) const& {
    return BasicTensor(std::move(dims), data_);
  }
  BasicTensor reshaped(std::vector<int> dims) && {
    return BasicTensor(std::move(dims), std::move(data_));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  BasicTensor<U> cast() const {
    AlignedVector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(dims_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (int d : dims_) {
      if (d <= 0) throw ConfigError("non-positive tensor dim in " + dims_to_string(dims_));
    }
  }

  std::vector<int> dims_;
  AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Throws ConfigError unless `t` has exactly `rank` dims.
template <typename T>
void require_rank(const BasicTensor<T>& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ConfigError(std::string(what) + ": expected rank " + std::to_string(rank) +
                      ", got dims " + dims_to_string(t.dims()));
  }
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.size() != b.size()) throw ConfigError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

}  // namespace photofit
