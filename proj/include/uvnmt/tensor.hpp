#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uvnmt/errors.hpp"
#include "uvnmt/rng.hpp"

namespace uvnmt {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor of reals. Copying a Tensor copies the handle, not the
// buffer: operations recorded on a Tape hold handles to their operands so that
// backward() can accumulate into the gradients of the original parameters.
// Shape is fixed at construction.
template <typename S>
class Tensor {
  static_assert(std::is_floating_point_v<S>);

  struct Data {
    Shape shape;
    std::vector<S> values;
    std::vector<S> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
  };

 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : d_(std::make_shared<Data>()) {
    d_->shape = std::move(shape);
    d_->values.assign(shape_numel(d_->shape), S{0});
    d_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<S> values, bool requires_grad = false)
      : d_(std::make_shared<Data>()) {
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    d_->shape = std::move(shape);
    d_->values = std::move(values);
    d_->requires_grad = requires_grad;
  }

  static Tensor scalar(S v) { return Tensor(Shape{1}, std::vector<S>{v}); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
  }

  static Tensor row(std::initializer_list<S> vs) {
    return Tensor({vs.size()}, std::vector<S>(vs));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<S>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<S> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix initializer");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(v));
  }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t ndim() const { return d_->shape.size(); }
  std::size_t size() const { return d_->values.size(); }
  std::size_t rows() const { return d_->shape.at(0); }
  std::size_t cols() const { return d_->shape.size() > 1 ? d_->shape[1] : 1; }

  std::span<S> values() { return d_->values; }
  std::span<const S> values() const { return d_->values; }
  S* data() { return d_->values.data(); }
  const S* data() const { return d_->values.data(); }

  S& at(std::size_t i) { return d_->values[i]; }
  S at(std::size_t i) const { return d_->values[i]; }
  S& at(std::size_t r, std::size_t c) { return d_->values[r * cols() + c]; }
  S at(std::size_t r, std::size_t c) const { return d_->values[r * cols() + c]; }

  bool requires_grad() const { return d_ && d_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    d_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return d_ && !d_->grad.empty(); }

  // Gradient buffer, allocated (zeroed) on first use. A Tensor is a shared
  // handle, so gradient bookkeeping works through const handles: backward
  // rules accumulate into operands they hold by value.
  std::span<S> grad() const {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), S{0});
    return d_->grad;
  }
  std::span<const S> grad_view() const { return d_->grad; }

  void clear_grad() const { d_->grad.clear(); }

  // Identity of the underlying buffer (used by Tape bookkeeping).
  const void* key() const { return d_.get(); }

 private:
  std::shared_ptr<Data> d_;
};

// Linear record of differentiable operations. Nodes are appended in execution
// order, so every node's inputs were produced by earlier nodes; backward()
// replays the records once, in reverse.
template <typename S>
class Tape {
 public:
  using NodeId = std::size_t;

  struct Node {
    std::vector<NodeId> inputs;
    NodeId output;
    std::function<void()> backward;  // null for leaves
  };

  // Records one operation. `backward` must add the operation's contribution to
  // each input's gradient, reading the output's gradient.
  void record(std::initializer_list<Tensor<S>> inputs, const Tensor<S>& output,
              std::function<void()> backward) {
    record(std::vector<Tensor<S>>(inputs), output, std::move(backward));
  }

  void record(const std::vector<Tensor<S>>& inputs, const Tensor<S>& output,
              std::function<void()> backward) {
    Node node;
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) node.inputs.push_back(id_for(in));
    node.output = fresh_id(output);
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
  }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor on
  // the path from the leaves to `loss`. `loss` must be a scalar produced on
  // this tape.
  void backward(Tensor<S> loss) {
    if (loss.size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_str(loss.shape()));
    }
    if (ids_.find(loss.key()) == ids_.end()) {
      throw ContractError("loss tensor was not produced on this tape");
    }
    loss.grad()[0] = S{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->backward) it->backward();
    }
  }

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  void clear() {
    nodes_.clear();
    ids_.clear();
  }

 private:
  NodeId id_for(const Tensor<S>& t) {
    auto it = ids_.find(t.key());
    if (it != ids_.end()) return it->second;
    // A tensor first seen as an input is a leaf; give it a passive node.
    NodeId id = nodes_.size();
    ids_.emplace(t.key(), id);
    nodes_.push_back(Node{{}, id, nullptr});
    return id;
  }

  NodeId fresh_id(const Tensor<S>& t) {
    NodeId id = nodes_.size();  // the record being appended
    ids_[t.key()] = id;
    return id;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const void*, NodeId> ids_;
};

namespace detail {

// C(m x n) = A(m x k) * B(k x n), row major. ikj order keeps both B and C rows
// streaming.
template <typename S>
void mm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, S{0});
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      S av = arow[p];
      const S* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m x k) += A(m x n) * B(k x n)^T: row dot products.
template <typename S>
void mm_nt_acc(const S* a, const S* b, S* c, std::size_t m, std::size_t n,
               std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * n;
    S* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const S* brow = b + p * n;
      S acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C(k x n) += A(m x k)^T * B(m x n).
template <typename S>
void mm_tn_acc(const S* a, const S* b, S* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    const S* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      S av = arow[p];
      S* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <typename S>
Tensor<S> matmul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<S> out({m, n});
  detail::mm_nn(a.data(), b.data(), out.data(), m, k, n, false);
  if (a.requires_grad() || b.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      if (a.requires_grad()) detail::mm_nt_acc(g, b.data(), a.grad().data(), m, n, k);
      if (b.requires_grad()) detail::mm_tn_acc(a.data(), g, b.grad().data(), m, k, n);
    });
  }
  return out;
}

enum class Elementwise { add, sub, mul };

// Pointwise binary op. Shapes must match, or b may be a row vector ({n} or
// {1,n}) broadcast over the rows of a 2-D a; that is the only broadcast form.
template <typename S>
Tensor<S> elementwise(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b,
                      Elementwise kind) {
  const bool same = a.shape() == b.shape();
  const bool row_bcast = !same && a.ndim() == 2 && b.size() == a.shape()[1] &&
                         (b.ndim() == 1 || (b.ndim() == 2 && b.shape()[0] == 1));
  if (!same && !row_bcast) {
    throw ShapeError("elementwise shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.size(), bn = b.size();
  Tensor<S> out(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  switch (kind) {
    case Elementwise::add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % bn];
      break;
    case Elementwise::sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i % bn];
      break;
    case Elementwise::mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i % bn];
      break;
  }
  if (a.requires_grad() || b.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out, kind, n, bn]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      if (a.requires_grad()) {
        S* ga = a.grad().data();
        if (kind == Elementwise::mul) {
          const S* pb2 = b.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i % bn];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (b.requires_grad()) {
        S* gb = b.grad().data();
        const S sign = kind == Elementwise::sub ? S{-1} : S{1};
        if (kind == Elementwise::mul) {
          const S* pa2 = a.data();
          for (std::size_t i = 0; i < n; ++i) gb[i % bn] += g[i] * pa2[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i % bn] += sign * g[i];
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  return elementwise(tape, a, b, Elementwise::add);
}
template <typename S>
Tensor<S> sub(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  return elementwise(tape, a, b, Elementwise::sub);
}
template <typename S>
Tensor<S> mul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  return elementwise(tape, a, b, Elementwise::mul);
}

enum class Activation { sigmoid, tanh };

template <typename S>
Tensor<S> activation(Tape<S>& tape, const Tensor<S>& a, Activation kind) {
  Tensor<S> out(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  const std::size_t n = a.size();
  if (kind == Activation::sigmoid) {
    for (std::size_t i = 0; i < n; ++i) {
      // Branch keeps exp() away from overflow for large |x|.
      S x = pa[i];
      po[i] = x >= S{0} ? S{1} / (S{1} + std::exp(-x))
                        : std::exp(x) / (S{1} + std::exp(x));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = std::tanh(pa[i]);
  }
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a}, out, [a, out, kind, n]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      const S* y = out.data();
      S* ga = a.grad().data();
      if (kind == Activation::sigmoid) {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (S{1} - y[i]);
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (S{1} - y[i] * y[i]);
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid(Tape<S>& tape, const Tensor<S>& a) {
  return activation(tape, a, Activation::sigmoid);
}
template <typename S>
Tensor<S> tanh(Tape<S>& tape, const Tensor<S>& a) {
  return activation(tape, a, Activation::tanh);
}

// Softmax along `axis` of a 1-D or 2-D tensor, with max subtraction. -inf
// inputs are legal and produce exact zeros.
template <typename S>
Tensor<S> softmax(Tape<S>& tape, const Tensor<S>& a, std::size_t axis) {
  if (axis >= a.ndim()) {
    throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(a.shape()));
  }
  if (a.ndim() > 2) throw ShapeError("softmax supports 1-D and 2-D tensors");
  const std::size_t slices = a.ndim() == 1 ? 1 : (axis == 1 ? a.shape()[0] : a.shape()[1]);
  const std::size_t len = a.ndim() == 1 ? a.shape()[0] : (axis == 1 ? a.shape()[1] : a.shape()[0]);
  const std::size_t stride = (a.ndim() == 2 && axis == 0) ? a.shape()[1] : 1;
  const std::size_t slice_step = (a.ndim() == 2 && axis == 0) ? 1 : len;

  Tensor<S> out(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  for (std::size_t s = 0; s < slices; ++s) {
    const S* in = pa + s * slice_step;
    S* o = po + s * slice_step;
    S mx = -std::numeric_limits<S>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[i * stride]);
    S sum{0};
    for (std::size_t i = 0; i < len; ++i) {
      S e = std::exp(in[i * stride] - mx);
      o[i * stride] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < len; ++i) o[i * stride] /= sum;
  }
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a}, out, [a, out, slices, len, stride, slice_step]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      const S* y = out.data();
      S* ga = a.grad().data();
      for (std::size_t s = 0; s < slices; ++s) {
        const S* gs = g + s * slice_step;
        const S* ys = y + s * slice_step;
        S* gas = ga + s * slice_step;
        S dot{0};
        for (std::size_t i = 0; i < len; ++i) dot += gs[i * stride] * ys[i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          gas[i * stride] += ys[i * stride] * (gs[i * stride] - dot);
        }
      }
    });
  }
  return out;
}

// Stacks the selected rows of a V x d table; repeated ids are repeated rows.
// Backward scatter-adds, so repeated ids accumulate.
template <typename S>
Tensor<S> gather_rows(Tape<S>& tape, const Tensor<S>& table,
                      const std::vector<std::int32_t>& ids) {
  if (table.ndim() != 2) {
    throw ShapeError("gather_rows expects a 2-D table, got " + shape_str(table.shape()));
  }
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("row id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(v) + ")");
    }
  }
  Tensor<S> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const S* src = table.data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(src, src + d, out.data() + i * d);
  }
  if (table.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({table}, out, [table, out, ids, d]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      S* gt = table.grad().data();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        S* dst = gt + static_cast<std::size_t>(ids[i]) * d;
        const S* src = g + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// Concatenates 2-D tensors with equal row counts along columns.
template <typename S>
Tensor<S> concat_cols(Tape<S>& tape, const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one part");
  const std::size_t m = parts.front().shape().at(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.shape()[0] != m) {
      throw ShapeError("concat_cols row mismatch at part with shape " +
                       shape_str(p.shape()));
    }
    total += p.shape()[1];
  }
  Tensor<S> out({m, total});
  std::size_t off = 0;
  bool track = false;
  for (const auto& p : parts) {
    const std::size_t c = p.shape()[1];
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(p.data() + i * c, p.data() + (i + 1) * c, out.data() + i * total + off);
    }
    off += c;
    track = track || p.requires_grad();
  }
  if (track) {
    out.set_requires_grad(true);
    tape.record(parts, out, [parts, out, m, total]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      std::size_t off2 = 0;
      for (auto& p : parts) {
        const std::size_t c = p.shape()[1];
        if (p.requires_grad()) {
          S* gp = p.grad().data();
          for (std::size_t i = 0; i < m; ++i) {
            const S* src = g + i * total + off2;
            for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += src[j];
          }
        }
        off2 += c;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_cols(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  return concat_cols(tape, std::vector<Tensor<S>>{a, b});
}

// Column j of a 2-D tensor as an m x 1 tensor.
template <typename S>
Tensor<S> slice_col(Tape<S>& tape, const Tensor<S>& a, std::size_t j) {
  if (a.ndim() != 2 || j >= a.shape()[1]) {
    throw ShapeError("slice_col " + std::to_string(j) + " invalid for shape " +
                     shape_str(a.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<S> out({m, 1});
  for (std::size_t i = 0; i < m; ++i) out.at(i) = a.at(i, j);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a}, out, [a, out, j, m, n]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      S* ga = a.grad().data();
      for (std::size_t i = 0; i < m; ++i) ga[i * n + j] += g[i];
    });
  }
  return out;
}

// Scales row i of a (m x n) by w[i] (w is m x 1).
template <typename S>
Tensor<S> scale_rows(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& w) {
  if (a.ndim() != 2 || w.shape() != Shape{a.shape()[0], 1}) {
    throw ShapeError("scale_rows expects (m x n, m x 1), got " + shape_str(a.shape()) +
                     " and " + shape_str(w.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<S> out(a.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const S wi = w.at(i);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) * wi;
  }
  if (a.requires_grad() || w.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a, w}, out, [a, w, out, m, n]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      if (a.requires_grad()) {
        S* ga = a.grad().data();
        for (std::size_t i = 0; i < m; ++i) {
          const S wi = w.at(i);
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * wi;
        }
      }
      if (w.requires_grad()) {
        S* gw = w.grad().data();
        for (std::size_t i = 0; i < m; ++i) {
          S acc{0};
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * a.at(i, j);
          gw[i] += acc;
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(Tape<S>& tape, const Tensor<S>& a) {
  if (a.ndim() != 2) throw ShapeError("transpose expects 2-D, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<S> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a}, out, [a, out, m, n]() mutable {
      if (!out.has_grad()) return;
      const S* g = out.grad_view().data();
      S* ga = a.grad().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

// Sum of all elements, as a scalar tensor.
template <typename S>
Tensor<S> sum_all(Tape<S>& tape, const Tensor<S>& a) {
  S total{0};
  for (S v : a.values()) total += v;
  Tensor<S> out = Tensor<S>::scalar(total);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({a}, out, [a, out]() mutable {
      if (!out.has_grad()) return;
      const S g = out.grad_view()[0];
      S* ga = a.grad().data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

// Glorot/Xavier uniform draw: U(-L, L) with L = sqrt(6 / (fan_in + fan_out)).
// fan_in/fan_out are the last two dims; a vector has fan_out 1.
template <typename S>
Tensor<S> glorot_uniform(const Shape& shape, Rng& rng) {
  if (shape.empty()) throw ContractError("glorot_uniform requires a nonempty shape");
  const std::size_t nd = shape.size();
  const std::size_t fan_in = nd >= 2 ? shape[nd - 2] : shape[nd - 1];
  const std::size_t fan_out = nd >= 2 ? shape[nd - 1] : 1;
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<S> out(shape);
  for (auto& v : out.values()) v = static_cast<S>(rng.uniform(-limit, limit));
  return out;
}

}  // namespace uvnmt
