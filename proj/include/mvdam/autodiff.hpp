#pragma once

// Tape-based reverse-mode automatic differentiation over dense tensors.
//
// A Graph records every operation applied to its Vars. Calling backward()
// on a scalar walks the tape in reverse and accumulates adjoints; gradients
// for parameters bound through Graph::param() are then collected by name.
// A Graph is single-threaded; build one per thread.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "mvdam/error.hpp"
#include "mvdam/param_store.hpp"
#include "mvdam/tensor.hpp"

namespace mvdam {

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : g_(g), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  Graph* graph() const { return g_; }
  std::size_t id() const { return id_; }
  bool valid() const { return g_ != nullptr; }

 private:
  Graph* g_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  // With record=false no adjoints are kept; useful for inference.
  explicit Graph(bool record = true) : record_(record) { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor t) { return push(std::move(t), false, {}); }
  Var variable(Tensor t) { return push(std::move(t), record_, {}); }

  // Leaf bound to a named parameter. Repeated calls return the same node.
  Var param(const ParamStore& store, const std::string& name) {
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) return Var(this, it->second);
    Var v = push(store.value(name), record_, {});
    param_ids_.emplace(name, v.id());
    return v;
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  // Adjoints of every parameter in `store`; parameters absent from the graph
  // get zero tensors.
  TensorMap param_grads(const ParamStore& store) const {
    TensorMap out;
    for (const auto& [name, slot] : store) {
      auto it = param_ids_.find(name);
      if (it != param_ids_.end() && nodes_[it->second].has_grad)
        out.emplace(name, nodes_[it->second].grad);
      else
        out.emplace(name, Tensor::zeros_like(slot.value));
    }
    return out;
  }

  void backward(Var out) {
    if (out.graph() != this) throw ValidationError("backward: Var belongs to another graph");
    if (out.value().rank() != 0)
      throw ValidationError("backward: output must be a scalar, got shape " + out.shape().str());
    if (!record_) throw ValidationError("backward: graph was built with record=false");
    grad_ref(out.id())[0] += 1.0;
    for (std::size_t i = out.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward();
    }
  }

  // Gradient of a node after backward(); zeros if it never received one.
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
  }

  // --- internal API used by the primitive ops below ---
  using Backward = std::function<void()>;

  Var push(Tensor value, bool requires_grad, Backward fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  Tensor& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor::zeros_like(n.value);
      n.has_grad = true;
    }
    return n.grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_ids_;
};

inline const Tensor& Var::value() const { return g_->value(id_); }

// Convenience: gradient of a scalar output with respect to every parameter.
inline TensorMap grad(Graph& g, Var scalar_output, const ParamStore& wrt) {
  g.backward(scalar_output);
  return g.param_grads(wrt);
}

namespace detail {

using Mat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline Graph& same_graph(Var a, Var b, const char* op) {
  if (a.graph() != b.graph() || a.graph() == nullptr)
    throw ValidationError(std::string(op) + ": operands from different graphs");
  return *a.graph();
}

inline bool needs(Graph& g, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (g.requires_grad(v.id())) return true;
  return false;
}

enum class Bcast { kSame, kRow, kScalar };

inline Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.size() == 1) return Bcast::kScalar;
  if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) return Bcast::kRow;
  throw ValidationError(std::string(op) + ": incompatible shapes " + a.shape().str() + " and " +
                        b.shape().str());
}

// Reduce an adjoint shaped like `a` back onto a broadcast operand.
inline void accumulate_broadcast(Tensor& gb, const Tensor& upstream, Bcast kind, double sign) {
  switch (kind) {
    case Bcast::kSame:
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * upstream[i];
      break;
    case Bcast::kScalar:
      gb[0] += sign * upstream.sum();
      break;
    case Bcast::kRow: {
      std::size_t c = upstream.cols();
      for (std::size_t i = 0; i < upstream.size(); ++i) gb[i % c] += sign * upstream[i];
      break;
    }
  }
}

inline double bcast_at(const Tensor& b, Bcast kind, std::size_t i) {
  switch (kind) {
    case Bcast::kSame: return b[i];
    case Bcast::kScalar: return b[0];
    case Bcast::kRow: return b[i % b.size()];
  }
  return 0.0;
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  std::size_t ai = a.id();
  Graph* gp = &g;
  std::size_t oi = g.size();
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, deriv] {
    const Tensor& x = gp->value(ai);
    const Tensor& y = gp->value(oi);
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[i] * deriv(x[i], y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic. `b` may broadcast as a scalar or, for rank-2 `a`,
// as a row vector matching a's column count.

inline Var add(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto kind = detail::broadcast_kind(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + detail::bcast_at(bv, kind, i);
  std::size_t ai = a.id(), bi = b.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), detail::needs(g, {a, b}), [gp, ai, bi, oi, kind] {
    const Tensor& up = gp->grad_ref(oi);
    if (gp->requires_grad(ai)) gp->grad_ref(ai) += up;
    if (gp->requires_grad(bi)) detail::accumulate_broadcast(gp->grad_ref(bi), up, kind, 1.0);
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto kind = detail::broadcast_kind(av, bv, "sub");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - detail::bcast_at(bv, kind, i);
  std::size_t ai = a.id(), bi = b.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), detail::needs(g, {a, b}), [gp, ai, bi, oi, kind] {
    const Tensor& up = gp->grad_ref(oi);
    if (gp->requires_grad(ai)) gp->grad_ref(ai) += up;
    if (gp->requires_grad(bi)) detail::accumulate_broadcast(gp->grad_ref(bi), up, kind, -1.0);
  });
}

inline Var mul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto kind = detail::broadcast_kind(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * detail::bcast_at(bv, kind, i);
  std::size_t ai = a.id(), bi = b.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), detail::needs(g, {a, b}), [gp, ai, bi, oi, kind] {
    const Tensor& x = gp->value(ai);
    const Tensor& y = gp->value(bi);
    const Tensor& up = gp->grad_ref(oi);
    if (gp->requires_grad(ai)) {
      Tensor& ga = gp->grad_ref(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[i] * detail::bcast_at(y, kind, i);
    }
    if (gp->requires_grad(bi)) {
      Tensor prod(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) prod[i] = up[i] * x[i];
      detail::accumulate_broadcast(gp->grad_ref(bi), prod, kind, 1.0);
    }
  });
}

inline Var scale(Var a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// ---------------------------------------------------------------------------
// Pointwise nonlinearities.

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(Var a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(a, [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}

// Pass-through inside [lo, hi], zero gradient outside.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
                       [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra.

// Supports [m,k]x[k,n] -> [m,n], [k]x[k,n] -> [n], [m,k]x[k] -> [m].
inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 1 || av.rank() > 2 || bv.rank() < 1 || bv.rank() > 2 ||
      (av.rank() == 1 && bv.rank() == 1))
    throw ValidationError("matmul: unsupported ranks " + av.shape().str() + " x " + bv.shape().str());
  const std::size_t m = av.rank() == 2 ? av.dim(0) : 1;
  const std::size_t k = av.rank() == 2 ? av.dim(1) : av.dim(0);
  const std::size_t kb = bv.dim(0);
  const std::size_t n = bv.rank() == 2 ? bv.dim(1) : 1;
  if (k != kb)
    throw ValidationError("matmul: inner dimensions differ " + av.shape().str() + " x " +
                          bv.shape().str());
  Shape os = av.rank() == 1 ? Shape{n} : (bv.rank() == 1 ? Shape{m} : Shape{m, n});
  Tensor out(os);
  detail::CMat A(av.data().data(), m, k), B(bv.data().data(), k, n);
  detail::Mat(out.data().data(), m, n).noalias() = A * B;
  std::size_t ai = a.id(), bi = b.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), detail::needs(g, {a, b}), [gp, ai, bi, oi, m, k, n] {
    detail::CMat A(gp->value(ai).data().data(), m, k), B(gp->value(bi).data().data(), k, n);
    detail::CMat G(gp->grad_ref(oi).data().data(), m, n);
    if (gp->requires_grad(ai)) detail::Mat(gp->grad_ref(ai).data().data(), m, k).noalias() += G * B.transpose();
    if (gp->requires_grad(bi)) detail::Mat(gp->grad_ref(bi).data().data(), k, n).noalias() += A.transpose() * G;
  });
}

// x W + b for a [k] or [m,k] input.
inline Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }

// ---------------------------------------------------------------------------
// Normalisation along the last axis (each row of a rank-2 tensor).

inline Var softmax(Var a) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  if (av.rank() < 1 || av.rank() > 2) throw ValidationError("softmax: rank must be 1 or 2");
  Tensor out(av.shape());
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, av.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (out.at(r, c) = std::exp(av.at(r, c) - mx));
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= z;
  }
  std::size_t ai = a.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, rows, cols] {
    const Tensor& y = gp->value(oi);
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += up.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += y.at(r, c) * (up.at(r, c) - dot);
    }
  });
}

inline Var log_softmax(Var a) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  if (av.rank() < 1 || av.rank() > 2) throw ValidationError("log_softmax: rank must be 1 or 2");
  Tensor out(av.shape());
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, av.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(av.at(r, c) - mx);
    double lz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = av.at(r, c) - lz;
  }
  std::size_t ai = a.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, rows, cols] {
    const Tensor& y = gp->value(oi);
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += up.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += up.at(r, c) - std::exp(y.at(r, c)) * s;
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops.

// Concatenate rank-1 tensors end to end (axis 0), or rank-2 tensors along
// axis 0 (rows) or axis 1 (columns).
inline Var concat(const std::vector<Var>& parts, std::size_t axis = 0) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  Graph& g = *parts[0].graph();
  const std::size_t rank = parts[0].value().rank();
  if (rank < 1 || rank > 2 || axis >= rank) throw ValidationError("concat: bad rank/axis");
  std::size_t total = 0;
  for (Var p : parts) {
    if (p.graph() != &g) throw ValidationError("concat: operands from different graphs");
    const Tensor& v = p.value();
    if (v.rank() != rank) throw ValidationError("concat: rank mismatch");
    if (rank == 2 && v.dim(1 - axis) != parts[0].value().dim(1 - axis))
      throw ValidationError("concat: off-axis dimension mismatch");
    total += v.dim(axis);
  }
  Shape os;
  if (rank == 1) os = Shape{total};
  else if (axis == 0) os = Shape{total, parts[0].value().dim(1)};
  else os = Shape{parts[0].value().dim(0), total};
  Tensor out(os);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  bool req = false;
  for (Var p : parts) {
    const Tensor& v = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    req = req || g.requires_grad(p.id());
    if (rank == 1 || axis == 0) {
      std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off * (rank == 1 ? 1 : v.dim(1))));
    } else {
      for (std::size_t r = 0; r < v.dim(0); ++r)
        for (std::size_t c = 0; c < v.dim(1); ++c) out.at(r, off + c) = v.at(r, c);
    }
    off += v.dim(axis);
  }
  std::size_t oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), req, [gp, ids, offsets, oi, rank, axis] {
    const Tensor& up = gp->grad_ref(oi);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gp->requires_grad(ids[k])) continue;
      Tensor& gk = gp->grad_ref(ids[k]);
      if (rank == 1 || axis == 0) {
        std::size_t base = offsets[k] * (rank == 1 ? 1 : gk.dim(1));
        for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += up[base + i];
      } else {
        for (std::size_t r = 0; r < gk.dim(0); ++r)
          for (std::size_t c = 0; c < gk.dim(1); ++c) gk.at(r, c) += up.at(r, offsets[k] + c);
      }
    }
  });
}

// Stack equal-length rank-1 tensors as the rows of a matrix.
inline Var stack(const std::vector<Var>& rows) {
  if (rows.empty()) throw ValidationError("stack: no inputs");
  Graph& g = *rows[0].graph();
  // Scalars stack into a vector, vectors into a matrix.
  const std::size_t rank = rows[0].value().rank();
  const std::size_t n = rows[0].value().size();
  Tensor out(rank == 0 ? Shape{rows.size()} : Shape{rows.size(), n});
  std::vector<std::size_t> ids;
  bool req = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = rows[r].value();
    if (rank > 1 || v.rank() != rank || v.size() != n)
      throw ValidationError("stack: rows must be equal-length vectors or scalars");
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * n));
    ids.push_back(rows[r].id());
    req = req || g.requires_grad(rows[r].id());
  }
  std::size_t oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), req, [gp, ids, oi, n] {
    const Tensor& up = gp->grad_ref(oi);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!gp->requires_grad(ids[r])) continue;
      Tensor& gr = gp->grad_ref(ids[r]);
      for (std::size_t c = 0; c < n; ++c) gr[c] += up[r * n + c];
    }
  });
}

// Half-open range [begin, end) along `axis` (rank 1: elements; rank 2: rows or columns).
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  if (av.rank() < 1 || av.rank() > 2 || axis >= av.rank() || begin >= end || end > av.dim(axis))
    throw ValidationError("slice: bad range on shape " + av.shape().str());
  const std::size_t len = end - begin;
  Tensor out;
  if (av.rank() == 1) {
    out = Tensor(Shape{len});
    for (std::size_t i = 0; i < len; ++i) out[i] = av[begin + i];
  } else if (axis == 0) {
    out = Tensor(Shape{len, av.dim(1)});
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t c = 0; c < av.dim(1); ++c) out.at(r, c) = av.at(begin + r, c);
  } else {
    out = Tensor(Shape{av.dim(0), len});
    for (std::size_t r = 0; r < av.dim(0); ++r)
      for (std::size_t c = 0; c < len; ++c) out.at(r, c) = av.at(r, begin + c);
  }
  std::size_t ai = a.id(), oi = g.size();
  const std::size_t rank = av.rank();
  Graph* gp = &g;
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, rank, axis, begin, len] {
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    if (rank == 1) {
      for (std::size_t i = 0; i < len; ++i) ga[begin + i] += up[i];
    } else if (axis == 0) {
      for (std::size_t r = 0; r < len; ++r)
        for (std::size_t c = 0; c < ga.dim(1); ++c) ga.at(begin + r, c) += up.at(r, c);
    } else {
      for (std::size_t r = 0; r < ga.dim(0); ++r)
        for (std::size_t c = 0; c < len; ++c) ga.at(r, begin + c) += up.at(r, c);
    }
  });
}

// Row r of a matrix as a vector, or element r of a vector as a scalar.
inline Var pick(Var a, std::size_t r) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  if (av.rank() < 1 || av.rank() > 2 || r >= av.dim(0))
    throw ValidationError("pick: index out of range on shape " + av.shape().str());
  Tensor out;
  std::size_t width = av.rank() == 2 ? av.dim(1) : 1;
  if (av.rank() == 2) {
    out = Tensor(Shape{width});
    for (std::size_t c = 0; c < width; ++c) out[c] = av.at(r, c);
  } else {
    out = Tensor::scalar(av[r]);
  }
  std::size_t ai = a.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, r, width] {
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t c = 0; c < width; ++c) ga[r * width + c] += up[c];
  });
}

// ---------------------------------------------------------------------------
// Reductions.

inline Var sum(Var a) {
  Graph& g = *a.graph();
  std::size_t ai = a.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(Tensor::scalar(a.value().sum()), g.requires_grad(ai), [gp, ai, oi] {
    double up = gp->grad_ref(oi)[0];
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Sum of a matrix along axis 0 (-> one value per column) or axis 1 (-> per row).
inline Var sum(Var a, std::size_t axis) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  if (av.rank() == 1 && axis == 0) return sum(a);
  if (av.rank() != 2 || axis > 1) throw ValidationError("sum(axis): expects a matrix");
  const std::size_t R = av.dim(0), C = av.dim(1);
  Tensor out(Shape{axis == 0 ? C : R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[axis == 0 ? c : r] += av.at(r, c);
  std::size_t ai = a.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, R, C, axis] {
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) ga.at(r, c) += up[axis == 0 ? c : r];
  });
}

inline Var mean(Var a, std::size_t axis) {
  const Tensor& av = a.value();
  double n = av.rank() == 1 ? static_cast<double>(av.size()) : static_cast<double>(av.dim(axis));
  return scale(sum(a, axis), 1.0 / n);
}

// Max along an axis. The subgradient flows to the first maximal element.
inline Var max(Var a, std::size_t axis) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  std::vector<std::size_t> arg;
  Tensor out;
  if (av.rank() == 1 && axis == 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < av.size(); ++i)
      if (av[i] > av[best]) best = i;
    arg.push_back(best);
    out = Tensor::scalar(av[best]);
  } else if (av.rank() == 2 && axis <= 1) {
    const std::size_t R = av.dim(0), C = av.dim(1);
    if (axis == 0) {
      out = Tensor(Shape{C});
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < R; ++r)
          if (av.at(r, c) > av.at(best, c)) best = r;
        arg.push_back(best * C + c);
        out[c] = av.at(best, c);
      }
    } else {
      out = Tensor(Shape{R});
      for (std::size_t r = 0; r < R; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (av.at(r, c) > av.at(r, best)) best = c;
        arg.push_back(r * C + best);
        out[r] = av.at(r, best);
      }
    }
  } else {
    throw ValidationError("max: unsupported rank/axis for shape " + av.shape().str());
  }
  std::size_t ai = a.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, arg = std::move(arg)] {
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t i = 0; i < arg.size(); ++i) ga[arg[i]] += up[i];
  });
}

// ---------------------------------------------------------------------------
// Embedding lookup: rows of `table` selected by `ids`; the adjoint scatter-adds.
inline Var embedding(Var table, std::span<const std::size_t> ids) {
  Graph& g = *table.graph();
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ValidationError("embedding: table must be a matrix");
  if (ids.empty()) throw ValidationError("embedding: empty id list");
  const std::size_t e = tv.dim(1);
  Tensor out(Shape{ids.size(), e});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.dim(0)) throw ValidationError("embedding: id out of range");
    auto src = tv.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::size_t ti = table.id(), oi = g.size();
  Graph* gp = &g;
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return g.push(std::move(out), g.requires_grad(ti), [gp, ti, oi, e, idv = std::move(idv)] {
    const Tensor& up = gp->grad_ref(oi);
    Tensor& gt = gp->grad_ref(ti);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t c = 0; c < e; ++c) gt.at(idv[i], c) += up.at(i, c);
  });
}

// Sliding windows of width w over the rows of a [T, e] matrix, flattened to
// [T - w + 1, w * e]. Composes with matmul into a valid 1-D convolution.
inline Var unfold(Var a, std::size_t w) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  if (av.rank() != 2 || w == 0 || w > av.dim(0))
    throw ValidationError("unfold: window " + std::to_string(w) + " does not fit shape " +
                          av.shape().str());
  const std::size_t T = av.dim(0), e = av.dim(1), n = T - w + 1;
  Tensor out(Shape{n, w * e});
  for (std::size_t t = 0; t < n; ++t)
    std::copy(av.data().begin() + static_cast<std::ptrdiff_t>(t * e),
              av.data().begin() + static_cast<std::ptrdiff_t>((t + w) * e), out.row(t).begin());
  std::size_t ai = a.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), g.requires_grad(ai), [gp, ai, oi, n, w, e] {
    const Tensor& up = gp->grad_ref(oi);
    Tensor& ga = gp->grad_ref(ai);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < w * e; ++j) ga[t * e + j] += up.at(t, j);
  });
}

// Gaussian reparameterisation: mu + exp(logvar / 2) * eps with eps held fixed.
inline Var reparameterize(Var mu, Var logvar, const Tensor& eps) {
  Graph& g = detail::same_graph(mu, logvar, "reparameterize");
  const Tensor& m = mu.value();
  const Tensor& lv = logvar.value();
  m.check_same(lv, "reparameterize(mu, logvar)");
  m.check_same(eps, "reparameterize(mu, eps)");
  Tensor out(m.shape());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] + std::exp(0.5 * lv[i]) * eps[i];
  std::size_t mi = mu.id(), li = logvar.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), detail::needs(g, {mu, logvar}), [gp, mi, li, oi, eps] {
    const Tensor& up = gp->grad_ref(oi);
    if (gp->requires_grad(mi)) gp->grad_ref(mi) += up;
    if (gp->requires_grad(li)) {
      const Tensor& lv = gp->value(li);
      Tensor& gl = gp->grad_ref(li);
      for (std::size_t i = 0; i < gl.size(); ++i)
        gl[i] += up[i] * 0.5 * std::exp(0.5 * lv[i]) * eps[i];
    }
  });
}

// GRU recurrence over pre-projected inputs xp = x Wx + bx, shape [T, 3h]
// (update, reset, candidate blocks), with h_0 = 0:
//   [z r] = sigmoid(xp_t[0:2h] + h Uzr)
//   n     = tanh(xp_t[2h:3h] + (r * h) Un)
//   h'    = h + z * (n - h)
// Returns the states [T, h] in input order; `reverse` scans from t = T-1.
// One node for the whole sequence, backpropagated through time by hand.
inline Var gru_scan(Var xp, Var uzr, Var un, bool reverse) {
  Graph& g = detail::same_graph(xp, uzr, "gru_scan");
  detail::same_graph(xp, un, "gru_scan");
  const Tensor& X = xp.value();
  const Tensor& Uzr = uzr.value();
  const Tensor& Un = un.value();
  if (Un.rank() != 2 || Un.dim(0) != Un.dim(1)) throw ValidationError("gru_scan: Un must be square");
  const std::size_t h = Un.dim(0);
  if (Uzr.rank() != 2 || Uzr.dim(0) != h || Uzr.dim(1) != 2 * h)
    throw ValidationError("gru_scan: Uzr must be [h, 2h], got " + Uzr.shape().str());
  if (X.rank() != 2 || X.dim(1) != 3 * h || X.dim(0) == 0)
    throw ValidationError("gru_scan: inputs must be [T, 3h], got " + X.shape().str());
  const std::size_t T = X.dim(0);
  const double* Xd = X.data().data();
  const double* Ud = Uzr.data().data();
  const double* Nd = Un.data().data();

  // Per position: z, r, n and the previous state.
  struct Cache {
    std::vector<double> z, r, n, prev;
  };
  auto c = std::make_shared<Cache>();
  c->z.resize(T * h);
  c->r.resize(T * h);
  c->n.resize(T * h);
  c->prev.resize(T * h);
  Tensor out(Shape{T, h});
  std::vector<double> state(h, 0.0), pre(2 * h), rh(h), cand(h);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = reverse ? T - 1 - k : k;
    const double* x = Xd + t * 3 * h;
    for (std::size_t j = 0; j < 2 * h; ++j) pre[j] = x[j];
    for (std::size_t i = 0; i < h; ++i) {
      const double hi = state[i];
      if (hi == 0.0) continue;
      const double* row = Ud + i * 2 * h;
      for (std::size_t j = 0; j < 2 * h; ++j) pre[j] += hi * row[j];
    }
    double* z = &c->z[t * h];
    double* r = &c->r[t * h];
    for (std::size_t j = 0; j < h; ++j) {
      z[j] = 1.0 / (1.0 + std::exp(-pre[j]));
      r[j] = 1.0 / (1.0 + std::exp(-pre[h + j]));
      rh[j] = r[j] * state[j];
      cand[j] = x[2 * h + j];
    }
    for (std::size_t i = 0; i < h; ++i) {
      if (rh[i] == 0.0) continue;
      const double* row = Nd + i * h;
      for (std::size_t j = 0; j < h; ++j) cand[j] += rh[i] * row[j];
    }
    double* n = &c->n[t * h];
    double* prev = &c->prev[t * h];
    for (std::size_t j = 0; j < h; ++j) {
      n[j] = std::tanh(cand[j]);
      prev[j] = state[j];
      state[j] += z[j] * (n[j] - state[j]);
      out[t * h + j] = state[j];
    }
  }

  std::size_t xi = xp.id(), ui = uzr.id(), ni = un.id(), oi = g.size();
  Graph* gp = &g;
  return g.push(std::move(out), detail::needs(g, {xp, uzr, un}), [gp, xi, ui, ni, oi, T, h, reverse, c] {
    const Tensor& up = gp->grad_ref(oi);
    const Tensor& Uzr = gp->value(ui);
    const Tensor& Un = gp->value(ni);
    const double* U = up.data().data();
    const double* Ud = Uzr.data().data();
    const double* Nd = Un.data().data();
    Tensor dX(Shape{T, 3 * h}), dUzr(Uzr.shape()), dUn(Un.shape());
    std::vector<double> carry(h, 0.0), dh(h), dpre(2 * h), dan(h), drh(h);
    for (std::size_t k = T; k-- > 0;) {
      const std::size_t t = reverse ? T - 1 - k : k;
      const double* z = &c->z[t * h];
      const double* r = &c->r[t * h];
      const double* n = &c->n[t * h];
      const double* prev = &c->prev[t * h];
      for (std::size_t j = 0; j < h; ++j) dh[j] = U[t * h + j] + carry[j];
      for (std::size_t j = 0; j < h; ++j) {
        const double dn = dh[j] * z[j];
        const double dz = dh[j] * (n[j] - prev[j]);
        carry[j] = dh[j] * (1.0 - z[j]);
        dan[j] = dn * (1.0 - n[j] * n[j]);
        dpre[j] = dz * z[j] * (1.0 - z[j]);
        dX[t * 3 * h + 2 * h + j] += dan[j];
      }
      // candidate: d(r*h) = dan Un^T, dUn += (r*h)^T dan
      for (std::size_t i = 0; i < h; ++i) {
        const double rhi = r[i] * prev[i];
        const double* row = Nd + i * h;
        double* drow = dUn.data().data() + i * h;
        double s = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
          s += dan[j] * row[j];
          drow[j] += rhi * dan[j];
        }
        drh[i] = s;
      }
      for (std::size_t i = 0; i < h; ++i) {
        dpre[h + i] = drh[i] * prev[i] * r[i] * (1.0 - r[i]);
        carry[i] += drh[i] * r[i];
      }
      for (std::size_t j = 0; j < 2 * h; ++j) dX[t * 3 * h + j] += dpre[j];
      // gates: dUzr += h^T dpre, dh_prev += dpre Uzr^T
      for (std::size_t i = 0; i < h; ++i) {
        const double* row = Ud + i * 2 * h;
        double* drow = dUzr.data().data() + i * 2 * h;
        double s = 0.0;
        for (std::size_t j = 0; j < 2 * h; ++j) {
          s += dpre[j] * row[j];
          drow[j] += prev[i] * dpre[j];
        }
        carry[i] += s;
      }
    }
    if (gp->requires_grad(xi)) gp->grad_ref(xi) += dX;
    if (gp->requires_grad(ui)) gp->grad_ref(ui) += dUzr;
    if (gp->requires_grad(ni)) gp->grad_ref(ni) += dUn;
  });
}

}  // namespace mvdam
