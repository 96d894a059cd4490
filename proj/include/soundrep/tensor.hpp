#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace soundrep {

namespace detail {

/// std::allocator that default-initializes (i.e. leaves trivial types
/// uninitialized) on plain construct. Large activation buffers are fully
/// overwritten right after allocation; skipping the zero-fill halves the
/// memory traffic of a training step.
template <typename T>
class uninit_allocator : public std::allocator<T> {
 public:
  template <typename U>
  struct rebind {
    using other = uninit_allocator<U>;
  };
  uninit_allocator() noexcept = default;
  template <typename U>
  uninit_allocator(const uninit_allocator<U>&) noexcept {}

  template <typename U>
  void construct(U* p) noexcept(noexcept(::new (static_cast<void*>(p)) U)) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

}  // namespace detail

/// Dense row-major tensor. Float at runtime, double in gradient tests.
template <typename T>
struct Tensor {
  using Storage = std::vector<T, detail::uninit_allocator<T>>;

  std::vector<int> shape;
  Storage data;

  Tensor() = default;
  /// Zero-initialized (gradient buffers rely on this).
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  /// Allocated but not filled; every element must be written before use.
  static Tensor uninit(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.resize(static_cast<std::size_t>(numel_of(t.shape)));
    return t;
  }
  static Tensor full(std::vector<int> s, T v) {
    Tensor t = uninit(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  /// Releases the backing storage; shape is kept for error messages.
  void release() {
    data.clear();
    data.shrink_to_fit();
  }
  bool released() const { return data.empty() && numel_of(shape) != 0; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out = Tensor<U>::uninit(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

}  // namespace soundrep
