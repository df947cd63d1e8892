#include "shallowdiff/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace shallowdiff::ad {

namespace detail {

struct Node {
  Array value;
  Array grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct VarAccess {
  static const NodePtr& node(const Var& v) {
    if (!v.node_) throw std::invalid_argument("operation on undefined Var");
    return v.node_;
  }
  static Var wrap(NodePtr n) { return Var(std::move(n)); }
};

namespace {

const NodePtr& node_of(const Var& v) { return VarAccess::node(v); }

Array& grad_buffer(Node& n) {
  if (n.grad.empty() && n.value.size() > 0) n.grad = Array(n.value.shape());
  return n.grad;
}

Var make_result(Array value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->leaf = false;
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return VarAccess::wrap(std::move(node));
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_string(x.shape()));
  }
}

// b broadcasts onto a when it is a scalar or equals a trailing suffix of a's shape.
bool broadcasts_onto(const Shape& a, const Shape& b) {
  if (shape_size(b) == 1) return true;
  if (b.size() > a.size()) return false;
  return std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()));
}

Var binary(ElementwiseKind kind, const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool commutative = kind == ElementwiseKind::add || kind == ElementwiseKind::mul;
  if (sa != sb && !broadcasts_onto(sa, sb)) {
    if (commutative && broadcasts_onto(sb, sa)) return binary(kind, b, a);
    throw std::invalid_argument("elementwise shape mismatch: " + shape_string(sa) + " vs " + shape_string(sb));
  }
  const auto& av = a.value().values();
  const auto& bv = b.value().values();
  const std::size_t n = av.size();
  const std::size_t m = bv.size();
  Array out(sa);
  auto od = out.data();
  switch (kind) {
    case ElementwiseKind::add:
      for (std::size_t i = 0; i < n; ++i) od[i] = av[i] + bv[i % m];
      break;
    case ElementwiseKind::sub:
      for (std::size_t i = 0; i < n; ++i) od[i] = av[i] - bv[i % m];
      break;
    case ElementwiseKind::mul:
      for (std::size_t i = 0; i < n; ++i) od[i] = av[i] * bv[i % m];
      break;
    default:
      throw std::logic_error("binary(): unary kind");
  }
  return make_result(std::move(out), {node_of(a), node_of(b)}, [kind, n, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto g = self.grad.data();
    if (pa.requires_grad) {
      auto ga = grad_buffer(pa).data();
      if (kind == ElementwiseKind::mul) {
        const auto bvals = pb.value.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bvals[i % m];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (pb.requires_grad) {
      auto gb = grad_buffer(pb).data();
      const double sign = kind == ElementwiseKind::sub ? -1.0 : 1.0;
      if (kind == ElementwiseKind::mul) {
        const auto avals = pa.value.data();
        for (std::size_t i = 0; i < n; ++i) gb[i % m] += g[i] * avals[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) gb[i % m] += sign * g[i];
      }
    }
  });
}

template <typename Forward, typename Derivative>
Var unary(const Var& x, Forward f, Derivative df) {
  // df(input, output) -> local derivative
  const auto& xv = x.value().values();
  Array out(x.shape());
  auto od = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) od[i] = f(xv[i]);
  return make_result(std::move(out), {node_of(x)}, [df](Node& self) {
    Node& p = *self.parents[0];
    auto gp = grad_buffer(p).data();
    const auto g = self.grad.data();
    const auto in = p.value.data();
    const auto outv = self.value.data();
    for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * df(in[i], outv[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Var

Var Var::constant(Array value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Array value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->grad = Array(node->value.shape());
  node->requires_grad = true;
  return Var(std::move(node));
}

const Array& Var::value() const { return node_of(*this)->value; }
const Array& Var::grad() const { return node_of(*this)->grad; }
bool Var::requires_grad() const { return node_of(*this)->requires_grad; }

Array& Var::mutable_value() {
  auto& n = node_of(*this);
  if (!n->leaf) throw std::logic_error("mutable_value() on a non-leaf node");
  return n->value;
}

void Var::zero_grad() {
  auto& n = node_of(*this);
  if (!n->leaf) throw std::logic_error("zero_grad() on a non-leaf node");
  if (n->requires_grad) n->grad = Array(n->value.shape());
}

// ---------------------------------------------------------------------------
// Elementwise

Var elementwise(ElementwiseKind kind, const Var& a, const Var& b, double constant) {
  switch (kind) {
    case ElementwiseKind::add:
    case ElementwiseKind::sub:
    case ElementwiseKind::mul:
      return binary(kind, a, b);
    case ElementwiseKind::tanh:
      return unary(
          a, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
    case ElementwiseKind::sigmoid:
      return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
    case ElementwiseKind::relu:
      return unary(
          a, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
    case ElementwiseKind::scale:
      return unary(
          a, [constant](double v) { return constant * v; }, [constant](double, double) { return constant; });
  }
  throw std::logic_error("unknown elementwise kind");
}

Var add(const Var& a, const Var& b) { return elementwise(ElementwiseKind::add, a, b); }
Var sub(const Var& a, const Var& b) { return elementwise(ElementwiseKind::sub, a, b); }
Var mul(const Var& a, const Var& b) { return elementwise(ElementwiseKind::mul, a, b); }
Var tanh(const Var& x) { return elementwise(ElementwiseKind::tanh, x); }
Var sigmoid(const Var& x) { return elementwise(ElementwiseKind::sigmoid, x); }
Var relu(const Var& x) { return elementwise(ElementwiseKind::relu, x); }
Var scale(const Var& x, double factor) { return elementwise(ElementwiseKind::scale, x, {}, factor); }

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var softplus(const Var& x) {
  return unary(
      x, [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return stable_sigmoid(v); });
}

Var add_scalar(const Var& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw std::invalid_argument("matmul inner extent mismatch: " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  const auto A = a.value().data();
  const auto B = b.value().data();
  Array out(Shape{m, n});
  auto C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_result(std::move(out), {node_of(a), node_of(b)}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto G = self.grad.data();
    if (pa.requires_grad) {
      // dA = G * B^T
      auto dA = grad_buffer(pa).data();
      const auto Bv = pb.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &G[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &Bv[p * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * G
      auto dB = grad_buffer(pb).data();
      const auto Av = pa.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &G[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double av = Av[i * k + p];
          double* drow = &dB[p * n];
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
      }
    }
  });
}

Var conv1d(const Var& x, const Var& w, std::size_t dilation) {
  require_rank(x, 2, "conv1d input");
  require_rank(w, 3, "conv1d weight");
  const std::size_t cin = x.shape()[0], len = x.shape()[1];
  const std::size_t cout = w.shape()[0], kernel = w.shape()[2];
  if (w.shape()[1] != cin) {
    throw std::invalid_argument("conv1d channel mismatch: input " + shape_string(x.shape()) + ", weight " +
                                shape_string(w.shape()));
  }
  if (kernel % 2 == 0) throw std::invalid_argument("conv1d kernel size must be odd, got " + std::to_string(kernel));
  if (dilation == 0) throw std::invalid_argument("conv1d dilation must be positive");

  const auto pad = static_cast<std::ptrdiff_t>(dilation * (kernel - 1) / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);
  // For tap k the input index is l + shift(k); valid output range is [lo, hi).
  auto shift = [=](std::size_t k) { return static_cast<std::ptrdiff_t>(k * dilation) - pad; };
  auto range = [=](std::ptrdiff_t s) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - s);
    return std::pair{lo, hi};
  };

  const auto X = x.value().data();
  const auto W = w.value().data();
  Array out(Shape{cout, len});
  auto Y = out.data();
  for (std::size_t o = 0; o < cout; ++o) {
    double* yrow = &Y[o * len];
    for (std::size_t i = 0; i < cin; ++i) {
      const double* xrow = &X[i * len];
      for (std::size_t k = 0; k < kernel; ++k) {
        const double wv = W[(o * cin + i) * kernel + k];
        const auto s = shift(k);
        const auto [lo, hi] = range(s);
        for (std::ptrdiff_t l = lo; l < hi; ++l) yrow[l] += wv * xrow[l + s];
      }
    }
  }
  return make_result(std::move(out), {node_of(x), node_of(w)}, [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const auto G = self.grad.data();
    const auto Xv = px.value.data();
    const auto Wv = pw.value.data();
    if (px.requires_grad) {
      auto dX = grad_buffer(px).data();
      for (std::size_t o = 0; o < cout; ++o) {
        const double* grow = &G[o * len];
        for (std::size_t i = 0; i < cin; ++i) {
          double* dxrow = &dX[i * len];
          for (std::size_t k = 0; k < kernel; ++k) {
            const double wv = Wv[(o * cin + i) * kernel + k];
            const auto s = shift(k);
            const auto [lo, hi] = range(s);
            for (std::ptrdiff_t l = lo; l < hi; ++l) dxrow[l + s] += wv * grow[l];
          }
        }
      }
    }
    if (pw.requires_grad) {
      auto dW = grad_buffer(pw).data();
      for (std::size_t o = 0; o < cout; ++o) {
        const double* grow = &G[o * len];
        for (std::size_t i = 0; i < cin; ++i) {
          const double* xrow = &Xv[i * len];
          for (std::size_t k = 0; k < kernel; ++k) {
            const auto s = shift(k);
            const auto [lo, hi] = range(s);
            double acc = 0.0;
            for (std::ptrdiff_t l = lo; l < hi; ++l) acc += grow[l] * xrow[l + s];
            dW[(o * cin + i) * kernel + k] += acc;
          }
        }
      }
    }
  });
}

Var add_channel_bias(const Var& x, const Var& b) {
  require_rank(x, 2, "add_channel_bias");
  const std::size_t channels = x.shape()[0], len = x.shape()[1];
  if (b.value().size() != channels) {
    throw std::invalid_argument("add_channel_bias shape mismatch: " + shape_string(x.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  Array out = x.value();
  auto od = out.data();
  const auto bv = b.value().data();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t l = 0; l < len; ++l) od[c * len + l] += bv[c];
  return make_result(std::move(out), {node_of(x), node_of(b)}, [channels, len](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto g = self.grad.data();
    if (px.requires_grad) {
      auto gx = grad_buffer(px).data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (pb.requires_grad) {
      auto gb = grad_buffer(pb).data();
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (std::size_t l = 0; l < len; ++l) acc += g[c * len + l];
        gb[c] += acc;
      }
    }
  });
}

Var mean_over_length(const Var& x) {
  require_rank(x, 2, "mean_over_length");
  const std::size_t channels = x.shape()[0], len = x.shape()[1];
  Array out(Shape{channels});
  const auto xv = x.value().data();
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t l = 0; l < len; ++l) acc += xv[c * len + l];
    out[c] = acc / static_cast<double>(len);
  }
  return make_result(std::move(out), {node_of(x)}, [channels, len](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t l = 0; l < len; ++l) gx[c * len + l] += g[c] * inv;
  });
}

// ---------------------------------------------------------------------------
// Layout

Var transpose(const Var& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Array out(Shape{c, r});
  const auto xv = x.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) od[j * r + i] = xv[i * c + j];
  return make_result(std::move(out), {node_of(x)}, [r, c](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {node_of(x)}, [](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin >= end || end > rows) {
    throw std::invalid_argument("slice_rows range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") invalid for shape " + shape_string(x.shape()));
  }
  const auto xv = x.value().data();
  std::vector<double> data(xv.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           xv.begin() + static_cast<std::ptrdiff_t>(end * cols));
  return make_result(Array(Shape{end - begin, cols}, std::move(data)), {node_of(x)}, [begin, cols](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin >= end || end > cols) {
    throw std::invalid_argument("slice_cols range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") invalid for shape " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Array out(Shape{rows, w});
  const auto xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = xv[r * cols + begin + c];
  return make_result(std::move(out), {node_of(x)}, [rows, cols, begin, w](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  const std::size_t rows = parts[0].shape().at(0);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.shape()[0] != rows) {
      throw std::invalid_argument("concat_cols row mismatch: " + shape_string(parts[0].shape()) + " vs " +
                                  shape_string(p.shape()));
    }
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
    parents.push_back(node_of(p));
  }
  Array out(Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].value().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + offset + c] = pv[r * widths[k] + c];
    offset += widths[k];
  }
  return make_result(std::move(out), std::move(parents), [rows, total, widths](Node& self) {
    const auto g = self.grad.data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        auto gp = grad_buffer(p).data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += g[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> rows) {
  require_rank(table, 2, "gather_rows");
  const std::size_t n = table.shape()[0], cols = table.shape()[1];
  std::vector<std::size_t> index(rows.begin(), rows.end());
  Array out(Shape{index.size(), cols});
  const auto tv = table.value().data();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= n) {
      throw std::out_of_range("gather_rows index " + std::to_string(index[r]) + " outside table " +
                              shape_string(table.shape()));
    }
    std::copy_n(&tv[index[r] * cols], cols, &out[r * cols]);
  }
  return make_result(std::move(out), {node_of(table)}, [index = std::move(index), cols](Node& self) {
    auto gt = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) gt[index[r] * cols + c] += g[r * cols + c];
  });
}

// ---------------------------------------------------------------------------
// Normalization

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Array out(x.shape());
  const auto xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * cols];
    double* o = &out[r * cols];
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return make_result(std::move(out), {node_of(x)}, [rows, cols](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    const auto y = self.value.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

Var layer_norm_rows(const Var& x, double eps) {
  require_rank(x, 2, "layer_norm_rows");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Array out(x.shape());
  std::vector<double> inv_std(rows);
  const auto xv = x.value().data();
  const double n = static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * cols];
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= n;
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= n;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (in[c] - mu) * inv_std[r];
  }
  return make_result(std::move(out), {node_of(x)}, [rows, cols, inv_std = std::move(inv_std)](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const auto g = self.grad.data();
    const auto y = self.value.data();
    const double n = static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        mean_g += g[r * cols + c];
        mean_gy += g[r * cols + c] * y[r * cols + c];
      }
      mean_g /= n;
      mean_gy /= n;
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += inv_std[r] * (g[r * cols + c] - mean_g - y[r * cols + c] * mean_gy);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return make_result(Array::scalar(total), {node_of(x)}, [](Node& self) {
    auto gx = grad_buffer(*self.parents[0]).data();
    const double g = self.grad[0];
    for (double& v : gx) v += g;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mse(const Var& pred, const Array& target) {
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("mse shape mismatch: " + shape_string(pred.shape()) + " vs " +
                                shape_string(target.shape()));
  }
  const auto pv = pred.value().data();
  const auto tv = target.data();
  const double n = static_cast<double>(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) total += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  return make_result(Array::scalar(total / n), {node_of(pred)}, [target, n](Node& self) {
    Node& p = *self.parents[0];
    auto gp = grad_buffer(p).data();
    const auto v = p.value.data();
    const auto t = target.data();
    const double g = self.grad[0] * 2.0 / n;
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * (v[i] - t[i]);
  });
}

Var l1(const Var& pred, const Array& target) {
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("l1 shape mismatch: " + shape_string(pred.shape()) + " vs " +
                                shape_string(target.shape()));
  }
  return mean(abs(sub(pred, Var::constant(target))));
}

Var bce_with_logits(const Var& logit, double label) {
  if (logit.value().size() != 1) throw std::invalid_argument("bce_with_logits expects a single logit");
  // -[y log s(z) + (1-y) log(1-s(z))] = y softplus(-z) + (1-y) softplus(z)
  Var pos = softplus(scale(logit, -1.0));
  Var neg = softplus(logit);
  if (label == 1.0) return sum(pos);
  if (label == 0.0) return sum(neg);
  return sum(add(scale(pos, label), scale(neg, 1.0 - label)));
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Var& loss) {
  const NodePtr& root = node_of(loss);
  if (root->value.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_string(root->value.shape()));
  }
  if (root->consumed) throw std::logic_error("backward() already ran on this graph; rebuild it with a new forward");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  // The order owns its nodes: parent links are dropped as the sweep goes.
  std::vector<NodePtr> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{root, 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      NodePtr p = n->parents[next++];
      if (p->requires_grad && !p->leaf && seen.insert(p.get()).second) {
        if (p->consumed) throw std::logic_error("backward() reached a node from an already differentiated graph");
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  grad_buffer(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (!n.grad.empty() && n.backward_fn) n.backward_fn(n);
    n.consumed = true;
    n.backward_fn = nullptr;
    n.parents.clear();
    if (&n != root.get()) n.grad = Array();
  }
}

}  // namespace shallowdiff::ad
