#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every intermediate in creation order, which is already a
// topological order, so backward() is a single reverse sweep. Parameter
// leaves reference tensors owned elsewhere (a ParamStore) and accumulate
// their gradients there directly, so several tapes (one per sample of a
// batch) sum into the same parameter gradient.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctxcap/rng.hpp"
#include "ctxcap/tensor.hpp"

namespace ctxcap {

template <class T>
class Tape;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  T item() const { return value().item(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  Tape<T>* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return record(std::move(value), false, nullptr); }

  // Leaf bound to an externally owned tensor. Frozen (non-trainable) leaves
  // read the tensor but never write its gradient.
  Var<T> parameter(Tensor<T>& p, bool trainable = true) {
    Node& n = nodes_.emplace_back();
    n.external = &p;
    n.requires_grad = trainable;
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.owned.drop_grad();  // outputs copied from inputs must not inherit their gradient
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].tensor(); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::span<T> grad(std::size_t id) { return nodes_[id].tensor().grad(); }
  std::span<const T> grad_view(std::size_t id) const {
    const Tensor<T>& t = nodes_[id].tensor();
    return t.grad();
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var<T> loss) {
    if (loss.tape() != this) throw std::invalid_argument("backward: variable belongs to another tape");
    if (loss.size() != 1)
      throw DimensionError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (!requires_grad(loss.id())) return;
    grad(loss.id())[0] += T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || !n.owned.has_grad()) continue;
      n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;

    Tensor<T>& tensor() { return external ? *external : owned; }
    const Tensor<T>& tensor() const { return external ? *external : owned; }
  };

  // deque: references returned by value() stay valid while recording.
  std::deque<Node> nodes_;
};

namespace detail {

template <class T>
Tape<T>& same_tape(const char* op, Var<T> a, Var<T> b) {
  if (!a.valid() || a.tape() != b.tape())
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

template <class T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw DimensionError(op, a.shape(), b.shape());
}

template <class T, class F>
Var<T> unary(Var<T> a, Tensor<T> out, F grad_fn) {
  Tape<T>& tape = *a.tape();
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia, grad_fn](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    auto g = t.grad_view(self);
    const auto& y = t.value(self).values();
    const auto& x = t.value(ia).values();
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * grad_fn(x[i], y[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape("add", a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = a.requires_grad() || b.requires_grad();
  if (av.shape() == bv.shape()) {
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return tape.record(std::move(out), rg, [ia, ib](Tape<T>& t, std::size_t self) {
      auto g = t.grad_view(self);
      for (std::size_t id : {ia, ib}) {
        if (!t.requires_grad(id)) continue;
        auto gx = t.grad(id);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    });
  }
  if (av.rank() == 2 && bv.rank() == 1 && av.cols() == bv.size()) {
    const std::size_t m = av.rows(), n = av.cols();
    Tensor<T> out = av;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) out.at(r, c) += bv[c];
    return tape.record(std::move(out), rg, [ia, ib, m, n](Tape<T>& t, std::size_t self) {
      auto g = t.grad_view(self);
      if (t.requires_grad(ia)) {
        auto ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.requires_grad(ib)) {
        auto gb = t.grad(ib);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
      }
    });
  }
  throw DimensionError("add", av.shape(), bv.shape());
}

// Sum of any number of same-shape operands.
template <class T>
Var<T> add_n(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: no operands");
  Tape<T>& tape = *xs.front().tape();
  Tensor<T> out = xs.front().value();
  bool rg = xs.front().requires_grad();
  std::vector<std::size_t> ids{xs.front().id()};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    detail::same_tape("add_n", xs.front(), xs[k]);
    detail::require_same_shape("add_n", xs.front(), xs[k]);
    const auto& v = xs[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    rg = rg || xs[k].requires_grad();
    ids.push_back(xs[k].id());
  }
  return tape.record(std::move(out), rg, [ids](Tape<T>& t, std::size_t self) {
    auto g = t.grad_view(self);
    for (std::size_t id : ids) {
      if (!t.requires_grad(id)) continue;
      auto gx = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape("sub", a, b);
  detail::require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<T>& t, std::size_t self) {
                       auto g = t.grad_view(self);
                       if (t.requires_grad(ia)) {
                         auto ga = t.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (t.requires_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                       }
                     });
}

// Elementwise product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape("mul", a, b);
  detail::require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<T>& t, std::size_t self) {
                       auto g = t.grad_view(self);
                       const auto& av = t.value(ia);
                       const auto& bv = t.value(ib);
                       if (t.requires_grad(ia)) {
                         auto ga = t.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                       }
                       if (t.requires_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                       }
                     });
}

// a * s where s holds a single value.
template <class T>
Var<T> scale(Var<T> a, Var<T> s) {
  Tape<T>& tape = detail::same_tape("scale", a, s);
  if (s.size() != 1) throw DimensionError("scale", a.shape(), s.shape());
  const T sv = s.value()[0];
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= sv;
  const std::size_t ia = a.id(), is = s.id();
  return tape.record(std::move(out), a.requires_grad() || s.requires_grad(),
                     [ia, is](Tape<T>& t, std::size_t self) {
                       auto g = t.grad_view(self);
                       const T sv = t.value(is)[0];
                       const auto& av = t.value(ia);
                       if (t.requires_grad(ia)) {
                         auto ga = t.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
                       }
                       if (t.requires_grad(is)) {
                         T acc = 0;
                         for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
                         t.grad(is)[0] += acc;
                       }
                     });
}

template <class T>
Var<T> scale(Var<T> a, T c) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= c;
  return detail::unary(a, std::move(out), [c](T, T) { return c; });
}

// 1 - a
template <class T>
Var<T> one_minus(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = T(1) - v;
  return detail::unary(a, std::move(out), [](T, T) { return T(-1); });
}

// Supports [m,k]x[k,n], [m,k]x[k] and [k]x[k,n].
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape("matmul", a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const bool a_vec = av.rank() == 1, b_vec = bv.rank() == 1;
  if (av.rank() > 2 || bv.rank() > 2 || (a_vec && b_vec)) throw DimensionError("matmul", av.shape(), bv.shape());
  const std::size_t m = a_vec ? 1 : av.shape()[0];
  const std::size_t k = av.shape().back();
  const std::size_t kb = b_vec ? bv.shape()[0] : bv.shape()[0];
  const std::size_t n = b_vec ? 1 : bv.shape()[1];
  if (k != kb) throw DimensionError("matmul", av.shape(), bv.shape());
  Shape out_shape = a_vec ? Shape{n} : (b_vec ? Shape{m} : Shape{m, n});
  Tensor<T> out(out_shape);
  auto o = out.values();
  auto A = av.values();
  auto B = bv.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      if (aip == T(0)) continue;
      for (std::size_t j = 0; j < n; ++j) o[i * n + j] += aip * B[p * n + j];
    }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
                       auto g = t.grad_view(self);
                       auto A = t.value(ia).values();
                       auto B = t.value(ib).values();
                       if (t.requires_grad(ia)) {
                         auto ga = t.grad(ia);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             T acc = 0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
                             ga[i * k + p] += acc;
                           }
                       }
                       if (t.requires_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const T aip = A[i * k + p];
                             if (aip == T(0)) continue;
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                           }
                       }
                     });
}

// a [m,k] times b [n,k] transposed -> [m,n]. Batched linear layers use this
// with b = weight [out,in].
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape("matmul_nt", a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
    throw DimensionError("matmul_nt", av.shape(), bv.shape());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor<T> out({m, n});
  auto A = av.values();
  auto B = bv.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
      out.at(i, j) = acc;
    }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
                       auto g = t.grad_view(self);
                       auto A = t.value(ia).values();
                       auto B = t.value(ib).values();
                       if (t.requires_grad(ia)) {
                         auto ga = t.grad(ia);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                             const T gij = g[i * n + j];
                             if (gij == T(0)) continue;
                             for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * B[j * k + p];
                           }
                       }
                       if (t.requires_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                             const T gij = g[i * n + j];
                             if (gij == T(0)) continue;
                             for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * A[i * k + p];
                           }
                       }
                     });
}

// a [m] outer b [n] -> [m,n]
template <class T>
Var<T> outer(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape("outer", a, b);
  if (a.value().rank() != 1 || b.value().rank() != 1) throw DimensionError("outer", a.shape(), b.shape());
  const std::size_t m = a.size(), n = b.size();
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a.value()[i] * b.value()[j];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, m, n](Tape<T>& t, std::size_t self) {
                       auto g = t.grad_view(self);
                       const auto& av = t.value(ia);
                       const auto& bv = t.value(ib);
                       if (t.requires_grad(ia)) {
                         auto ga = t.grad(ia);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) ga[i] += g[i * n + j] * bv[j];
                       }
                       if (t.requires_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j] * av[i];
                       }
                     });
}

// Concatenation of rank-1 operands.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no operands");
  Tape<T>& tape = *xs.front().tape();
  std::vector<std::size_t> ids, offsets;
  std::vector<T> out;
  bool rg = false;
  for (const auto& x : xs) {
    detail::same_tape("concat", xs.front(), x);
    if (x.value().rank() != 1) throw DimensionError("concat", xs.front().shape(), x.shape());
    offsets.push_back(out.size());
    ids.push_back(x.id());
    const auto v = x.value().values();
    out.insert(out.end(), v.begin(), v.end());
    rg = rg || x.requires_grad();
  }
  return tape.record(Tensor<T>::vec(std::move(out)), rg, [ids, offsets](Tape<T>& t, std::size_t self) {
    auto g = t.grad_view(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      auto gx = t.grad(ids[k]);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[offsets[k] + i];
    }
  });
}

template <class T>
Var<T> slice(Var<T> a, std::size_t offset, std::size_t len) {
  const Tensor<T>& av = a.value();
  if (av.rank() != 1 || len == 0 || offset + len > av.size())
    throw DimensionError("slice: [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                         ") out of range for shape " + shape_str(av.shape()));
  std::vector<T> out(av.values().begin() + offset, av.values().begin() + offset + len);
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor<T>::vec(std::move(out)), a.requires_grad(),
                          [ia, offset](Tape<T>& t, std::size_t self) {
                            auto g = t.grad_view(self);
                            auto ga = t.grad(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
                          });
}

// Row i of a matrix (embedding lookup).
template <class T>
Var<T> row(Var<T> a, std::size_t i) {
  const Tensor<T>& av = a.value();
  if (av.rank() != 2 || i >= av.rows())
    throw DimensionError("row: index " + std::to_string(i) + " out of range for shape " + shape_str(av.shape()));
  const std::size_t n = av.cols();
  std::vector<T> out(av.values().begin() + i * n, av.values().begin() + (i + 1) * n);
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor<T>::vec(std::move(out)), a.requires_grad(),
                          [ia, i, n](Tape<T>& t, std::size_t self) {
                            auto g = t.grad_view(self);
                            auto ga = t.grad(ia);
                            for (std::size_t c = 0; c < n; ++c) ga[i * n + c] += g[c];
                          });
}

// Stacks equal-length rank-1 operands into a [k,n] matrix.
template <class T>
Var<T> stack(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack: no operands");
  Tape<T>& tape = *xs.front().tape();
  const std::size_t n = xs.front().size();
  std::vector<T> out;
  out.reserve(n * xs.size());
  std::vector<std::size_t> ids;
  bool rg = false;
  for (const auto& x : xs) {
    detail::same_tape("stack", xs.front(), x);
    if (x.value().rank() != 1 || x.size() != n) throw DimensionError("stack", xs.front().shape(), x.shape());
    const auto v = x.value().values();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(x.id());
    rg = rg || x.requires_grad();
  }
  return tape.record(Tensor<T>({xs.size(), n}, std::move(out)), rg, [ids, n](Tape<T>& t, std::size_t self) {
    auto g = t.grad_view(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      auto gx = t.grad(ids[k]);
      for (std::size_t c = 0; c < n; ++c) gx[c] += g[k * n + c];
    }
  });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  return detail::unary(a, std::move(out), [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return detail::unary(a, std::move(out), [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> exp(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  return detail::unary(a, std::move(out), [](T, T y) { return y; });
}

// log(max(a, floor)); the gradient is zero where the floor is active.
template <class T>
Var<T> log(Var<T> a, T floor = T(0)) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::log(std::max(v, floor));
  return detail::unary(a, std::move(out), [floor](T x, T) { return x > floor ? T(1) / x : T(0); });
}

// Softmax of a rank-1 tensor restricted to its first `valid` entries; the
// remaining entries are masked to exactly zero.
template <class T>
Var<T> softmax(Var<T> a, std::size_t valid) {
  const Tensor<T>& av = a.value();
  if (av.rank() != 1) throw DimensionError("softmax: masked form needs a rank-1 tensor, got " + shape_str(av.shape()));
  if (valid == 0 || valid > av.size())
    throw std::invalid_argument("softmax: empty axis (valid length " + std::to_string(valid) + ")");
  Tensor<T> out(av.shape());
  T mx = av[0];
  for (std::size_t i = 1; i < valid; ++i) mx = std::max(mx, av[i]);
  T z = 0;
  for (std::size_t i = 0; i < valid; ++i) z += (out[i] = std::exp(av[i] - mx));
  for (std::size_t i = 0; i < valid; ++i) out[i] /= z;
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::size_t self) {
    auto g = t.grad_view(self);
    const auto& y = t.value(self);
    T dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
  });
}

// Numerically stable softmax along `axis` (rank 1: axis 0; rank 2: 0 or 1;
// negative counts from the back).
template <class T>
Var<T> softmax(Var<T> a, int axis = -1) {
  const Tensor<T>& av = a.value();
  const int rank = static_cast<int>(av.rank());
  if (axis < 0) axis += rank;
  if (rank < 1 || rank > 2 || axis < 0 || axis >= rank)
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(av.shape()));
  if (rank == 1) return softmax(a, av.size());
  const std::size_t rows = av.rows(), cols = av.cols();
  // Iterate over "lanes" along the axis: stride and count per lane.
  const std::size_t lanes = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  const std::size_t stride = axis == 1 ? 1 : cols;
  auto lane_start = [=](std::size_t l) { return axis == 1 ? l * cols : l; };
  Tensor<T> out(av.shape());
  for (std::size_t l = 0; l < lanes; ++l) {
    const std::size_t s = lane_start(l);
    T mx = av[s];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, av[s + i * stride]);
    T z = 0;
    for (std::size_t i = 0; i < len; ++i) z += (out[s + i * stride] = std::exp(av[s + i * stride] - mx));
    for (std::size_t i = 0; i < len; ++i) out[s + i * stride] /= z;
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia, lanes, len, stride, lane_start](Tape<T>& t, std::size_t self) {
                            auto g = t.grad_view(self);
                            const auto& y = t.value(self);
                            auto ga = t.grad(ia);
                            for (std::size_t l = 0; l < lanes; ++l) {
                              const std::size_t s = lane_start(l);
                              T dot = 0;
                              for (std::size_t i = 0; i < len; ++i) dot += g[s + i * stride] * y[s + i * stride];
                              for (std::size_t i = 0; i < len; ++i) {
                                const std::size_t j = s + i * stride;
                                ga[j] += y[j] * (g[j] - dot);
                              }
                            }
                          });
}

template <class T>
Var<T> sum(Var<T> a) {
  T acc = 0;
  for (T v : a.value().values()) acc += v;
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor<T>::scalar(acc), a.requires_grad(), [ia](Tape<T>& t, std::size_t self) {
    const T g = t.grad_view(self)[0];
    for (auto& v : t.grad(ia)) v += g;
  });
}

template <class T>
Var<T> dot(Var<T> a, Var<T> b) {
  return sum(mul(a, b));
}

template <class T>
Var<T> minimum(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape("minimum", a, b);
  detail::require_same_shape("minimum", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], bv[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<T>& t, std::size_t self) {
                       auto g = t.grad_view(self);
                       const auto& av = t.value(ia);
                       const auto& bv = t.value(ib);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         // Ties route the gradient to the first operand.
                         const std::size_t to = av[i] <= bv[i] ? ia : ib;
                         if (t.requires_grad(to)) t.grad(to)[i] += g[i];
                       }
                     });
}

// Single entry as a scalar tensor.
template <class T>
Var<T> pick(Var<T> a, std::size_t i) {
  if (i >= a.size())
    throw DimensionError("pick: index " + std::to_string(i) + " out of range for shape " + shape_str(a.shape()));
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor<T>::scalar(a.value()[i]), a.requires_grad(),
                          [ia, i](Tape<T>& t, std::size_t self) { t.grad(ia)[i] += t.grad_view(self)[0]; });
}

// out[index[i]] += a[i] over a zero vector of length out_size.
template <class T>
Var<T> scatter_add(Var<T> a, std::vector<std::size_t> index, std::size_t out_size) {
  if (a.value().rank() != 1 || index.size() != a.size())
    throw DimensionError("scatter_add: " + std::to_string(index.size()) + " indices for shape " +
                         shape_str(a.shape()));
  Tensor<T> out({out_size});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= out_size)
      throw DimensionError("scatter_add: index " + std::to_string(index[i]) + " >= " + std::to_string(out_size));
    out[index[i]] += a.value()[i];
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia, index = std::move(index)](Tape<T>& t, std::size_t self) {
                            auto g = t.grad_view(self);
                            auto ga = t.grad(ia);
                            for (std::size_t i = 0; i < index.size(); ++i) ga[i] += g[index[i]];
                          });
}

// Inverted dropout: survivors are scaled by 1/(1-rate) so the expectation is
// unchanged; identity when not training or rate is zero.
template <class T>
Var<T> dropout(Var<T> a, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return a;
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(a.size());
  for (auto& m : mask) m = rng.bernoulli(rate) ? T(0) : keep_scale;
  return mul(a, a.tape()->constant(Tensor<T>(a.shape(), std::move(mask))));
}

}  // namespace ctxcap
