// Dense row-major tensor with a flat storage vector. Shapes are small
// (<= 4 dims); the first dimension is treated as the batch/row dimension
// when a 2-D matrix view is needed.
#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aif {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

#define AIF_CHECK(cond, msg)                                       \
  do {                                                             \
    if (!(cond)) ::aif::fail(std::string("check failed: ") + msg); \
  } while (0)

template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(count(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    AIF_CHECK(static_cast<int64_t>(data.size()) == count(shape), "tensor data/shape mismatch " + shape_str(shape));
  }

  static int64_t count(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  // Matrix view: first dim x rest.
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.empty() ? 1 : static_cast<int>(size() / std::max(1, shape[0])); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <class T>
Tensor<T> make_tensor(Shape s, std::initializer_list<T> vals) {
  return Tensor<T>(std::move(s), std::vector<T>(vals));
}

}  // namespace aif
