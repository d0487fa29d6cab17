#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnp {

/// Raised when an operation is asked to combine incompatible shapes or an
/// otherwise invalid configuration. The message names the offending dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on malformed or corrupt files (PNM, checkpoints).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a training run diverges (NaN loss).
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& msg, long step, double last_finite_loss)
      : std::runtime_error(msg), step(step), last_finite_loss(last_finite_loss) {}
  long step = -1;
  double last_finite_loss = 0.0;
};

/// (batch, channels, height, width) of a dense tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t size() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

/// Dense 4-D array in row-major (batch outermost) order.
template <typename T>
struct TensorT {
  Shape shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(Shape s) : shape(s), data(static_cast<std::size_t>(s.size()), T(0)) {}
  TensorT(Shape s, std::vector<T> values) : shape(s), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != shape.size())
      throw ConfigError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape.str());
  }

  static TensorT zeros(Shape s) { return TensorT(s); }
  static TensorT full(Shape s, T v) {
    TensorT t(s);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  std::int64_t size() const { return shape.size(); }

  T& at(int b, int ch, int y, int x) {
    return data[((std::int64_t(b) * shape.c + ch) * shape.h + y) * shape.w + x];
  }
  T at(int b, int ch, int y, int x) const {
    return data[((std::int64_t(b) * shape.c + ch) * shape.h + y) * shape.w + x];
  }

  T* plane(int b, int ch) {
    return data.data() + (std::int64_t(b) * shape.c + ch) * shape.h * shape.w;
  }
  const T* plane(int b, int ch) const {
    return data.data() + (std::int64_t(b) * shape.c + ch) * shape.h * shape.w;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

/// Named weight with an always-shape-matched gradient buffer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { grad.fill(0.0f); }
};

template <typename T>
TensorT<T> randn(Shape s, std::mt19937& rng, double stddev = 1.0, double mean = 0.0) {
  TensorT<T> t(s);
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
TensorT<T> rand_uniform(Shape s, std::mt19937& rng, double lo = 0.0, double hi = 1.0) {
  TensorT<T> t(s);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace cnp
