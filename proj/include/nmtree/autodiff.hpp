#ifndef NMTREE_AUTODIFF_HPP
#define NMTREE_AUTODIFF_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nmtree/tensor.hpp"

namespace nmtree {

template <class T>
class Graph;

// Handle to a node recorded on a Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

inline constexpr double kL2Eps = 1e-12;

// Taped reverse-mode differentiation. Every op appends a node holding its
// forward value and a closure that pushes its output gradient to its inputs.
// Nodes bound to a parameter Tensor read its values in place and accumulate
// gradients straight into Tensor::grad.
template <class T>
class Graph {
 public:
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using MapV = Eigen::Map<Vec>;
  using CMapV = Eigen::Map<const Vec>;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMapM = Eigen::Map<const Mat>;
  using MapM = Eigen::Map<Mat>;

  // With grad disabled no backward closures are stored.
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // ---- leaves ----------------------------------------------------------

  Var constant(Shape shape, std::vector<T> values) {
    if (values.size() != shape_size(shape))
      throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape));
    return push(std::move(shape), std::move(values), false);
  }

  Var constant(std::span<const T> values) {
    return constant({values.size()}, std::vector<T>(values.begin(), values.end()));
  }

  // Differentiable leaf; its gradient is readable through grad() after backward.
  Var input(Shape shape, std::vector<T> values) {
    Var v = constant(std::move(shape), std::move(values));
    nodes_[v.id].needs_grad = grad_enabled_;
    return v;
  }

  Var param(Tensor<T>& t) {
    Var v = param(std::as_const(t));
    nodes_[v.id].bound_mut = &t;
    nodes_[v.id].needs_grad = grad_enabled_;
    return v;
  }

  // Read-only binding; no gradient flows into the tensor.
  Var param(const Tensor<T>& t) {
    Node n;
    n.shape = t.shape;
    n.bound = &t;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  // ---- accessors -------------------------------------------------------

  const Shape& shape(Var v) const { return nodes_.at(v.id).shape; }
  std::size_t numel(Var v) const { return shape_size(shape(v)); }

  std::span<const T> value(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.bound) return {n.bound->values.data(), n.bound->values.size()};
    return {n.value.data(), n.value.size()};
  }

  T scalar(Var v) const {
    if (numel(v) != 1) throw ShapeError("scalar: node has shape " + shape_str(shape(v)));
    return value(v)[0];
  }

  std::span<const T> grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.bound) return {n.bound->grad.data(), n.bound->grad.size()};
    return {n.grad.data(), n.grad.size()};
  }

  // ---- linear algebra ------------------------------------------------------

  // out = W x + b; W is m x n, x has n entries, b (optional) has m entries.
  Var linear(Var x, Var w, std::optional<Var> b = std::nullopt) {
    const Shape& ws = shape(w);
    if (ws.size() != 2 || numel(x) != ws[1])
      throw ShapeError("linear: weight " + shape_str(ws) + " incompatible with input " +
                       shape_str(shape(x)));
    const std::size_t m = ws[0], n = ws[1];
    if (b && numel(*b) != m)
      throw ShapeError("linear: bias " + shape_str(shape(*b)) + " for output size " +
                       std::to_string(m));
    std::vector<T> out(m);
    MapV o(out.data(), m);
    o.noalias() = cmat(w, m, n) * cvec(x);
    if (b) o += cvec(*b);
    std::vector<Var> ins{x, w};
    if (b) ins.push_back(*b);
    return push_op({m}, std::move(out), ins, [x, w, b, m, n](Graph& g, Var self) {
      CMapV go = g.cgvec(self);
      if (g.needs(x)) g.gvec(x).noalias() += g.cmat(w, m, n).transpose() * go;
      if (g.needs(w)) g.gmat(w, m, n).noalias() += go * g.cvec(x).transpose();
      if (b && g.needs(*b)) g.gvec(*b) += go;
    });
  }

  // out = M^T v; M is k x d, v has k entries.
  Var matvec_t(Var mat, Var v) {
    const Shape& ms = shape(mat);
    if (ms.size() != 2 || numel(v) != ms[0])
      throw ShapeError("matvec_t: matrix " + shape_str(ms) + " incompatible with vector " +
                       shape_str(shape(v)));
    const std::size_t k = ms[0], d = ms[1];
    std::vector<T> out(d);
    MapV(out.data(), d).noalias() = cmat(mat, k, d).transpose() * cvec(v);
    return push_op({d}, std::move(out), {mat, v}, [mat, v, k, d](Graph& g, Var self) {
      CMapV go = g.cgvec(self);
      if (g.needs(v)) g.gvec(v).noalias() += g.cmat(mat, k, d) * go;
      if (g.needs(mat)) g.gmat(mat, k, d).noalias() += g.cvec(v) * go.transpose();
    });
  }

  // Row `row` of a 2-D table as a vector.
  Var lookup(Var table, std::size_t row) {
    const Shape& ts = shape(table);
    if (ts.size() != 2) throw ShapeError("lookup: table must be 2-D, got " + shape_str(ts));
    if (row >= ts[0])
      throw std::out_of_range("lookup: row " + std::to_string(row) + " out of range for " +
                              shape_str(ts));
    const std::size_t d = ts[1];
    auto tv = value(table);
    std::vector<T> out(tv.begin() + row * d, tv.begin() + (row + 1) * d);
    return push_op({d}, std::move(out), {table}, [table, row, d](Graph& g, Var self) {
      auto go = g.grad(self);
      auto gt = g.mgrad(table);
      for (std::size_t j = 0; j < d; ++j) gt[row * d + j] += go[j];
    });
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) {
    same_shape("add", a, b);
    std::vector<T> out(numel(a));
    MapV(out.data(), out.size()) = cvec(a) + cvec(b);
    return push_op(shape(a), std::move(out), {a, b}, [a, b](Graph& g, Var self) {
      if (g.needs(a)) g.gvec(a) += g.cgvec(self);
      if (g.needs(b)) g.gvec(b) += g.cgvec(self);
    });
  }

  Var add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("add_n: no operands");
    for (auto x : xs) same_shape("add_n", xs[0], x);
    std::vector<T> out(numel(xs[0]), T(0));
    MapV o(out.data(), out.size());
    for (auto x : xs) o += cvec(x);
    return push_op(shape(xs[0]), std::move(out), xs, [xs](Graph& g, Var self) {
      for (auto x : xs)
        if (g.needs(x)) g.gvec(x) += g.cgvec(self);
    });
  }

  Var sub(Var a, Var b) {
    same_shape("sub", a, b);
    std::vector<T> out(numel(a));
    MapV(out.data(), out.size()) = cvec(a) - cvec(b);
    return push_op(shape(a), std::move(out), {a, b}, [a, b](Graph& g, Var self) {
      if (g.needs(a)) g.gvec(a) += g.cgvec(self);
      if (g.needs(b)) g.gvec(b) -= g.cgvec(self);
    });
  }

  Var mul(Var a, Var b) {
    same_shape("mul", a, b);
    std::vector<T> out(numel(a));
    MapV(out.data(), out.size()) = cvec(a).cwiseProduct(cvec(b));
    return push_op(shape(a), std::move(out), {a, b}, [a, b](Graph& g, Var self) {
      if (g.needs(a)) g.gvec(a) += g.cgvec(self).cwiseProduct(g.cvec(b));
      if (g.needs(b)) g.gvec(b) += g.cgvec(self).cwiseProduct(g.cvec(a));
    });
  }

  Var scale(Var a, T c) {
    std::vector<T> out(numel(a));
    MapV(out.data(), out.size()) = cvec(a) * c;
    return push_op(shape(a), std::move(out), {a}, [a, c](Graph& g, Var self) {
      g.gvec(a) += g.cgvec(self) * c;
    });
  }

  Var neg(Var a) { return scale(a, T(-1)); }

  Var sigmoid(Var a) {
    std::vector<T> out(numel(a));
    auto av = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(av[i]);
    return push_op(shape(a), std::move(out), {a}, [a](Graph& g, Var self) {
      auto y = g.value(self);
      auto go = g.grad(self);
      auto ga = g.mgrad(a);
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += go[i] * y[i] * (T(1) - y[i]);
    });
  }

  Var tanh(Var a) {
    std::vector<T> out(numel(a));
    auto av = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
    return push_op(shape(a), std::move(out), {a}, [a](Graph& g, Var self) {
      auto y = g.value(self);
      auto go = g.grad(self);
      auto ga = g.mgrad(a);
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += go[i] * (T(1) - y[i] * y[i]);
    });
  }

  // ---- structural --------------------------------------------------------

  // Concatenation along axis 0; trailing extents must agree.
  Var concat(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat: no operands");
    Shape out_shape = shape(xs[0]);
    out_shape[0] = 0;
    for (auto x : xs) {
      const Shape& s = shape(x);
      if (s.size() != out_shape.size() || !std::equal(s.begin() + 1, s.end(), out_shape.begin() + 1))
        throw ShapeError("concat: cannot join " + shape_str(shape(xs[0])) + " with " +
                         shape_str(s));
      out_shape[0] += s[0];
    }
    std::vector<T> out;
    out.reserve(shape_size(out_shape));
    for (auto x : xs) {
      auto v = value(x);
      out.insert(out.end(), v.begin(), v.end());
    }
    return push_op(std::move(out_shape), std::move(out), xs, [xs](Graph& g, Var self) {
      auto go = g.grad(self);
      std::size_t off = 0;
      for (auto x : xs) {
        const std::size_t n = g.numel(x);
        if (g.needs(x)) {
          auto gx = g.mgrad(x);
          for (std::size_t i = 0; i < n; ++i) gx[i] += go[off + i];
        }
        off += n;
      }
    });
  }

  // Equal-length vectors as the rows of an n x d matrix.
  Var stack(const std::vector<Var>& rows) {
    if (rows.empty()) throw ShapeError("stack: no operands");
    const std::size_t d = numel(rows[0]);
    for (auto r : rows)
      if (shape(r).size() != 1 || numel(r) != d)
        throw ShapeError("stack: rows must be vectors of equal length, got " +
                         shape_str(shape(rows[0])) + " and " + shape_str(shape(r)));
    Var flat = concat(rows);
    nodes_[flat.id].shape = {rows.size(), d};
    return flat;
  }

  // Contiguous range [offset, offset + len) of a flat view.
  Var slice(Var a, std::size_t offset, std::size_t len) {
    if (len == 0 || offset + len > numel(a))
      throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                       std::to_string(offset + len) + ") outside " + shape_str(shape(a)));
    auto av = value(a);
    std::vector<T> out(av.begin() + offset, av.begin() + offset + len);
    return push_op({len}, std::move(out), {a}, [a, offset, len](Graph& g, Var self) {
      auto go = g.grad(self);
      auto ga = g.mgrad(a);
      for (std::size_t i = 0; i < len; ++i) ga[offset + i] += go[i];
    });
  }

  Var pick(Var a, std::size_t index) { return slice(a, index, 1); }

  // Sum of all entries; result has shape {1}.
  Var sum(Var a) {
    auto av = value(a);
    T s = T(0);
    for (auto x : av) s += x;
    return push_op({1}, {s}, {a}, [a](Graph& g, Var self) {
      const T go = g.grad(self)[0];
      for (auto& x : g.mgrad(a)) x += go;
    });
  }

  // Sum over one axis of a rank-1 or rank-2 tensor.
  Var sum(Var a, std::size_t axis) {
    const Shape& s = shape(a);
    if (s.size() == 1) {
      if (axis != 0) throw ShapeError("sum: axis out of range for " + shape_str(s));
      return sum(a);
    }
    if (s.size() != 2 || axis > 1) throw ShapeError("sum: unsupported axis for " + shape_str(s));
    const std::size_t r = s[0], c = s[1];
    std::vector<T> out(axis == 0 ? c : r, T(0));
    auto av = value(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += av[i * c + j];
    const std::size_t n = out.size();
    return push_op({n}, std::move(out), {a}, [a, axis, r, c](Graph& g, Var self) {
      auto go = g.grad(self);
      auto ga = g.mgrad(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[axis == 0 ? j : i];
    });
  }

  // ---- normalizers -------------------------------------------------------

  Var softmax(Var a) {
    if (numel(a) == 0) throw ShapeError("softmax: empty input");
    std::vector<T> out = softmax_values(value(a));
    return push_op(shape(a), std::move(out), {a}, [a](Graph& g, Var self) {
      auto y = g.value(self);
      auto go = g.grad(self);
      T dot = T(0);
      for (std::size_t i = 0; i < y.size(); ++i) dot += go[i] * y[i];
      auto ga = g.mgrad(a);
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (go[i] - dot);
    });
  }

  Var log_softmax(Var a) {
    if (numel(a) == 0) throw ShapeError("log_softmax: empty input");
    std::vector<T> out = log_softmax_values(value(a));
    return push_op(shape(a), std::move(out), {a}, [a](Graph& g, Var self) {
      auto y = g.value(self);
      auto go = g.grad(self);
      T total = T(0);
      for (auto x : go) total += x;
      auto ga = g.mgrad(a);
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += go[i] - std::exp(y[i]) * total;
    });
  }

  // v / max(||v||, 1e-12)
  Var l2_normalize(Var a) {
    auto av = value(a);
    T sq = T(0);
    for (auto x : av) sq += x * x;
    const T norm = std::sqrt(sq);
    const bool clamped = norm <= T(kL2Eps);
    const T denom = clamped ? T(kL2Eps) : norm;
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / denom;
    return push_op(shape(a), std::move(out), {a}, [a, denom, clamped](Graph& g, Var self) {
      auto y = g.value(self);
      auto go = g.grad(self);
      auto ga = g.mgrad(a);
      T dot = T(0);
      if (!clamped)
        for (std::size_t i = 0; i < y.size(); ++i) dot += go[i] * y[i];
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += (go[i] - y[i] * dot) / denom;
    });
  }

  // Hard forward sum_k hard[k] * branch_k; backward treats the mixing weights
  // as `soft` (straight-through). Branch gradients are weighted by `hard`.
  Var straight_through_mix(std::span<const T> hard, Var soft, const std::vector<Var>& branches) {
    if (branches.empty() || hard.size() != branches.size() || numel(soft) != branches.size())
      throw ShapeError("straight_through_mix: weights and branches disagree");
    for (auto b : branches) same_shape("straight_through_mix", branches[0], b);
    const std::size_t n = numel(branches[0]);
    std::vector<T> out(n, T(0));
    for (std::size_t k = 0; k < branches.size(); ++k) {
      if (hard[k] == T(0)) continue;
      auto bv = value(branches[k]);
      for (std::size_t i = 0; i < n; ++i) out[i] += hard[k] * bv[i];
    }
    std::vector<T> h(hard.begin(), hard.end());
    std::vector<Var> ins(branches);
    ins.push_back(soft);
    return push_op(shape(branches[0]), std::move(out), ins,
                   [h, soft, branches, n](Graph& g, Var self) {
                     auto go = g.grad(self);
                     for (std::size_t k = 0; k < branches.size(); ++k) {
                       auto bv = g.value(branches[k]);
                       if (g.needs(soft)) {
                         T dot = T(0);
                         for (std::size_t i = 0; i < n; ++i) dot += go[i] * bv[i];
                         g.mgrad(soft)[k] += dot;
                       }
                       if (h[k] != T(0) && g.needs(branches[k])) {
                         auto gb = g.mgrad(branches[k]);
                         for (std::size_t i = 0; i < n; ++i) gb[i] += h[k] * go[i];
                       }
                     }
                   });
  }

  // Fully differentiable sum_k weights[k] * branch_k.
  Var weighted_mix(Var weights, const std::vector<Var>& branches) {
    if (numel(weights) != branches.size())
      throw ShapeError("weighted_mix: weights and branches disagree");
    std::vector<Var> terms;
    for (std::size_t k = 0; k < branches.size(); ++k) {
      Var wk = pick(weights, k);
      terms.push_back(broadcast_scale(branches[k], wk));
    }
    return add_n(terms);
  }

  // a * s where s is a single-entry node.
  Var broadcast_scale(Var a, Var s) {
    if (numel(s) != 1) throw ShapeError("broadcast_scale: scale must be scalar");
    const T sv = value(s)[0];
    std::vector<T> out(numel(a));
    MapV(out.data(), out.size()) = cvec(a) * sv;
    return push_op(shape(a), std::move(out), {a, s}, [a, s](Graph& g, Var self) {
      const T sv = g.value(s)[0];
      if (g.needs(a)) g.gvec(a) += g.cgvec(self) * sv;
      if (g.needs(s)) g.mgrad(s)[0] += g.cgvec(self).dot(g.cvec(a));
    });
  }

  // ---- reverse pass ------------------------------------------------------

  void backward(Var output) {
    if (!grad_enabled_) throw std::logic_error("backward: graph was built without gradients");
    if (numel(output) != 1)
      throw ShapeError("backward: output must be scalar, got shape " + shape_str(shape(output)));
    for (auto& n : nodes_) {
      if (!n.needs_grad) continue;
      if (n.bound_mut)
        n.bound_mut->ensure_grad();
      else
        n.grad.assign(n.value.size(), T(0));
    }
    if (!nodes_[output.id].needs_grad) return;
    mgrad(output)[0] += T(1);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.backward) n.backward(*this, Var{i});
    }
  }

  // ---- scalar helpers (shared with oracles) -------------------------------

  static T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  static std::vector<T> softmax_values(std::span<const T> v) {
    const T mx = *std::max_element(v.begin(), v.end());
    std::vector<T> out(v.size());
    T s = T(0);
    for (std::size_t i = 0; i < v.size(); ++i) s += (out[i] = std::exp(v[i] - mx));
    for (auto& x : out) x /= s;
    return out;
  }

  static std::vector<T> log_softmax_values(std::span<const T> v) {
    const T mx = *std::max_element(v.begin(), v.end());
    T s = T(0);
    for (auto x : v) s += std::exp(x - mx);
    const T lse = mx + std::log(s);
    std::vector<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
    return out;
  }

 private:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    const Tensor<T>* bound = nullptr;
    Tensor<T>* bound_mut = nullptr;
    bool needs_grad = false;
    std::function<void(Graph&, Var)> backward;
  };

  Var push(Shape shape, std::vector<T> values, bool needs_grad) {
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(values);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  template <class F>
  Var push_op(Shape shape, std::vector<T> values, const std::vector<Var>& inputs, F&& back) {
    bool needs = false;
    if (grad_enabled_)
      for (auto in : inputs) needs = needs || nodes_[in.id].needs_grad;
    Var v = push(std::move(shape), std::move(values), needs);
    if (needs) nodes_[v.id].backward = std::forward<F>(back);
    return v;
  }

  bool needs(Var v) const { return nodes_[v.id].needs_grad; }

  std::span<T> mgrad(Var v) {
    Node& n = nodes_[v.id];
    if (n.bound_mut) return {n.bound_mut->grad.data(), n.bound_mut->grad.size()};
    return {n.grad.data(), n.grad.size()};
  }

  CMapV cvec(Var v) const {
    auto s = value(v);
    return CMapV(s.data(), static_cast<Eigen::Index>(s.size()));
  }
  CMapM cmat(Var v, std::size_t r, std::size_t c) const {
    return CMapM(value(v).data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  MapV gvec(Var v) {
    auto s = mgrad(v);
    return MapV(s.data(), static_cast<Eigen::Index>(s.size()));
  }
  CMapV cgvec(Var v) const {
    auto s = grad(v);
    return CMapV(s.data(), static_cast<Eigen::Index>(s.size()));
  }
  MapM gmat(Var v, std::size_t r, std::size_t c) {
    return MapM(mgrad(v).data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }

  void same_shape(const char* op, Var a, Var b) const {
    if (shape(a) != shape(b))
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(shape(a)) + " vs " +
                       shape_str(shape(b)));
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

}  // namespace nmtree

#endif  // NMTREE_AUTODIFF_HPP
