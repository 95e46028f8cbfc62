#ifndef NMTREE_TENSOR_HPP
#define NMTREE_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmtree/rng.hpp"

namespace nmtree {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major array with an optional gradient buffer of the same shape.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;

  explicit Tensor(Shape s) : shape(std::move(s)), values(shape_size(shape), T(0)) { check_shape(); }

  Tensor(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    check_shape();
    if (values.size() != shape_size(shape))
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
  void zero_grad() { grad.assign(values.size(), T(0)); }

  T& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  T at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

 private:
  void check_shape() const {
    for (auto e : shape)
      if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
  }
};

template <class T>
struct OptimizerState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step_count = 0;
};

// Named trainable parameters. std::map keeps iteration lexicographic by name.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    Tensor<T> tensor;
    OptimizerState<T> state;
  };

  Tensor<T>& add(const std::string& name, Shape shape) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (!inserted) throw std::invalid_argument("parameter '" + name + "' already exists");
    it->second.tensor = Tensor<T>(std::move(shape));
    it->second.tensor.zero_grad();
    it->second.state.m.assign(it->second.tensor.size(), T(0));
    it->second.state.v.assign(it->second.tensor.size(), T(0));
    return it->second.tensor;
  }

  Tensor<T>& get(const std::string& name) { return entry(name).tensor; }
  const Tensor<T>& get(const std::string& name) const { return entry(name).tensor; }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::size_t size() const { return entries_.size(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, e] : entries_) std::fill(e.tensor.grad.begin(), e.tensor.grad.end(), T(0));
  }

 private:
  std::map<std::string, Entry> entries_;
};

// Matrices: uniform in [-a, a], a = 1/sqrt(fan_in). Vectors (biases) stay zero.
template <class T>
void init_uniform_fan_in(Tensor<T>& t, Rng& rng) {
  if (t.shape.size() < 2) return;
  const double a = 1.0 / std::sqrt(static_cast<double>(t.cols()));
  for (auto& v : t.values) v = static_cast<T>(rng.uniform(-a, a));
}

template <class T>
void init_uniform(Tensor<T>& t, Rng& rng, double a) {
  for (auto& v : t.values) v = static_cast<T>(rng.uniform(-a, a));
}

}  // namespace nmtree

#endif  // NMTREE_TENSOR_HPP
