#pragma once

// Dense f64 tensors with a reverse-mode gradient tape. The op set is small
// and closed: exactly what a 1-D conv / LSTM / linear-head stack needs.
// Everything is desk scale, so clarity and finite-difference testability win
// over throughput; 64-bit floats keep numeric gradient checks tight.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nids/error.hpp"
#include "nids/rng.hpp"

namespace nids::tc {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] inline void shape_fail(const std::string& op,
                                    const std::string& detail) {
  fail("ShapeMismatch", op + ": " + detail);
}

struct Storage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
};

class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->data.assign(numel(t.s_->shape), 0.0);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.s_->data.begin(), t.s_->data.end(), value);
    return t;
  }

  static Tensor scalar(double value) { return full({1}, value); }

  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false) {
    if (numel(shape) != values.size())
      shape_fail("from_data", "shape " + shape_str(shape) + " vs " +
                                  std::to_string(values.size()) + " values");
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(values);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape[i]; }
  std::size_t size() const { return s_->data.size(); }

  double* data() { return s_->data.data(); }
  const double* data() const { return s_->data.data(); }
  std::vector<double>& values() { return s_->data; }
  const std::vector<double>& values() const { return s_->data; }

  double item() const {
    if (size() != 1) shape_fail("item", "tensor has " + std::to_string(size()) + " elements");
    return s_->data[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool v) { s_->requires_grad = v; }

  void ensure_grad() {
    if (s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), 0.0);
  }
  void zero_grad() {
    ensure_grad();
    std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
  }
  double* grad() { return s_->grad.data(); }
  const double* grad() const { return s_->grad.data(); }
  bool has_grad() const { return s_->grad.size() == s_->data.size(); }

  // Deep copy; the copy is a fresh leaf with no grad buffer.
  Tensor clone() const {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = s_->shape;
    t.s_->data = s_->data;
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  bool all_finite() const {
    for (double v : s_->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Storage* storage() const { return s_.get(); }
  std::shared_ptr<Storage> shared() const { return s_; }

private:
  std::shared_ptr<Storage> s_;
};

// Ordered record of executed primitives. Creation order is topological by
// construction; backward() replays it in reverse. A tape is single-threaded;
// run independent tapes for parallel work.
class Tape {
public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  bool wants(std::initializer_list<const Tensor*> inputs) const {
    if (!recording_) return false;
    for (const Tensor* t : inputs)
      if (t->defined() && t->requires_grad()) return true;
    return false;
  }

  void record(Tensor& out, std::function<void()> back) {
    out.set_requires_grad(true);
    out.ensure_grad();
    made_.insert(out.storage());
    nodes_.push_back(Node{out.shared(), std::move(back)});
  }

  bool produced(const Tensor& t) const {
    return made_.count(t.storage()) != 0;
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad
  // tensor reachable backwards. Gradients add up across repeated uses.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
      fail("NonScalarLoss", "backward needs a single-element loss");
    if (!produced(loss))
      fail("NotOnTape", "loss tensor was not produced by this tape");
    loss.storage()->grad.assign(1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
  }

private:
  struct Node {
    std::shared_ptr<Storage> out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  std::unordered_set<const Storage*> made_;
  bool recording_;
};

namespace detail {

// Right operand broadcasting: identical shape, single element, or a strict
// suffix of the left shape (tiles over the leading batch dimensions).
inline std::size_t broadcast_block(const std::string& op, const Shape& a,
                                   const Shape& b) {
  std::size_t na = numel(a), nb = numel(b);
  if (nb == 1) return 1;
  if (a == b) return na;
  if (b.size() < a.size() &&
      std::equal(b.begin(), b.end(), a.end() - b.size())) {
    return nb;
  }
  shape_fail(op, shape_str(b) + " does not broadcast against " + shape_str(a));
}

inline void ensure_input_grads(const Tensor& a) {
  if (a.requires_grad()) const_cast<Tensor&>(a).ensure_grad();
}

// C (m x n) += op(A) . op(B), all row-major.
inline void mm_accum(const double* a, std::size_t ar, std::size_t ac, bool ta,
                     const double* b, std::size_t br, std::size_t bc, bool tb,
                     double* c) {
  std::size_t m = ta ? ac : ar;
  std::size_t k = ta ? ar : ac;
  std::size_t n = tb ? br : bc;
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      const double* arow = a + i * k;
      for (std::size_t l = 0; l < k; ++l) {
        double av = arow[l];
        const double* brow = b + l * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
        crow[j] += acc;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t l = 0; l < k; ++l) {
      const double* arow = a + l * m;
      const double* brow = b + l * n;
      for (std::size_t i = 0; i < m; ++i) {
        double av = arow[i];
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < k; ++l) acc += a[l * m + i] * b[j * bc + l];
        c[i * n + j] += acc;
      }
  }
}

enum class EwKind { add, sub, mul };

inline Tensor elementwise(Tape& tape, const Tensor& a, const Tensor& b,
                          EwKind kind, const char* name) {
  std::size_t nb = broadcast_block(name, a.shape(), b.shape());
  std::size_t na = a.size();
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t base = 0; base < na; base += nb)
    for (std::size_t j = 0; j < nb; ++j) {
      double x = pa[base + j], y = pb[j];
      po[base + j] = kind == EwKind::add ? x + y
                     : kind == EwKind::sub ? x - y
                                           : x * y;
    }
  if (tape.wants({&a, &b})) {
    ensure_input_grads(a);
    ensure_input_grads(b);
    tape.record(out, [sa = a.shared(), sb = b.shared(), so = out.shared(),
                      nb, kind]() {
      const double* g = so->grad.data();
      std::size_t n = so->data.size();
      if (sa->requires_grad) {
        double* ga = sa->grad.data();
        if (kind == EwKind::mul) {
          const double* pb2 = sb->data.data();
          for (std::size_t base = 0; base < n; base += nb)
            for (std::size_t j = 0; j < nb; ++j)
              ga[base + j] += g[base + j] * pb2[j];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (sb->requires_grad) {
        double* gb = sb->grad.data();
        if (kind == EwKind::mul) {
          const double* pa2 = sa->data.data();
          for (std::size_t base = 0; base < n; base += nb)
            for (std::size_t j = 0; j < nb; ++j)
              gb[j] += g[base + j] * pa2[base + j];
        } else {
          double sign = kind == EwKind::sub ? -1.0 : 1.0;
          for (std::size_t base = 0; base < n; base += nb)
            for (std::size_t j = 0; j < nb; ++j) gb[j] += sign * g[base + j];
        }
      }
    });
  }
  return out;
}

// Unary elementwise where the derivative is a function of (input, output).
template <typename Fwd, typename Bwd>
Tensor unary(Tape& tape, const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  if (tape.wants({&x})) {
    ensure_input_grads(x);
    tape.record(out, [sx = x.shared(), so = out.shared(), bwd]() {
      const double* g = so->grad.data();
      const double* xv = sx->data.data();
      const double* yv = so->data.data();
      double* gx = sx->grad.data();
      std::size_t m = sx->data.size();
      for (std::size_t i = 0; i < m; ++i) gx[i] += g[i] * bwd(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::elementwise(tape, a, b, detail::EwKind::add, "add");
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::elementwise(tape, a, b, detail::EwKind::sub, "sub");
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::elementwise(tape, a, b, detail::EwKind::mul, "mul");
}

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b,
                     bool trans_a = false, bool trans_b = false) {
  if (a.rank() != 2 || b.rank() != 2)
    shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                             " (rank-2 operands required)");
  std::size_t ar = a.dim(0), ac = a.dim(1);
  std::size_t br = b.dim(0), bc = b.dim(1);
  std::size_t m = trans_a ? ac : ar;
  std::size_t ka = trans_a ? ar : ac;
  std::size_t kb = trans_b ? bc : br;
  std::size_t n = trans_b ? br : bc;
  if (ka != kb)
    shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  detail::mm_accum(a.data(), ar, ac, trans_a, b.data(), br, bc, trans_b,
                   out.data());
  if (tape.wants({&a, &b})) {
    detail::ensure_input_grads(a);
    detail::ensure_input_grads(b);
    tape.record(out, [sa = a.shared(), sb = b.shared(), so = out.shared(),
                      ar, ac, br, bc, m, n, trans_a, trans_b]() {
      const double* g = so->grad.data();
      if (sa->requires_grad) {
        // dA: nn -> G.B^T ; nt -> G.B ; tn -> B.G^T ; tt -> B^T.G^T
        if (!trans_a && !trans_b)
          detail::mm_accum(g, m, n, false, sb->data.data(), br, bc, true,
                           sa->grad.data());
        else if (!trans_a && trans_b)
          detail::mm_accum(g, m, n, false, sb->data.data(), br, bc, false,
                           sa->grad.data());
        else if (trans_a && !trans_b)
          detail::mm_accum(sb->data.data(), br, bc, false, g, m, n, true,
                           sa->grad.data());
        else
          detail::mm_accum(sb->data.data(), br, bc, true, g, m, n, true,
                           sa->grad.data());
      }
      if (sb->requires_grad) {
        // dB: nn -> A^T.G ; nt -> G^T.A ; tn -> A.G ; tt -> G^T.A^T
        if (!trans_a && !trans_b)
          detail::mm_accum(sa->data.data(), ar, ac, true, g, m, n, false,
                           sb->grad.data());
        else if (!trans_a && trans_b)
          detail::mm_accum(g, m, n, true, sa->data.data(), ar, ac, false,
                           sb->grad.data());
        else if (trans_a && !trans_b)
          detail::mm_accum(sa->data.data(), ar, ac, false, g, m, n, false,
                           sb->grad.data());
        else
          detail::mm_accum(g, m, n, true, sa->data.data(), ar, ac, true,
                           sb->grad.data());
      }
    });
  }
  return out;
}

enum class Padding { valid, same };

// x: [batch, in_channels, length], kernels: [out_channels, in_channels, k],
// bias: [out_channels] or undefined. Stride fixed at 1.
inline Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& kernels,
                     const Tensor& bias, Padding padding) {
  if (x.rank() != 3 || kernels.rank() != 3)
    shape_fail("conv1d", "x " + shape_str(x.shape()) + ", kernels " +
                             shape_str(kernels.shape()));
  std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  std::size_t cout = kernels.dim(0), kc = kernels.dim(1), kw = kernels.dim(2);
  if (kc != cin)
    shape_fail("conv1d", "kernel channels " + std::to_string(kc) +
                             " vs input channels " + std::to_string(cin));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
    shape_fail("conv1d", "bias " + shape_str(bias.shape()));
  std::size_t pad_left = padding == Padding::same ? (kw - 1) / 2 : 0;
  std::size_t out_len;
  if (padding == Padding::same) {
    out_len = len;
  } else {
    if (kw > len)
      shape_fail("conv1d", "kernel " + std::to_string(kw) +
                               " exceeds length " + std::to_string(len));
    out_len = len - kw + 1;
  }
  Tensor out = Tensor::zeros({batch, cout, out_len});
  const double* px = x.data();
  const double* pk = kernels.data();
  double* po = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* orow = po + (b * cout + co) * out_len;
      if (bias.defined()) {
        double bv = bias.data()[co];
        for (std::size_t t = 0; t < out_len; ++t) orow[t] = bv;
      }
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xrow = px + (b * cin + ci) * len;
        const double* krow = pk + (co * cin + ci) * kw;
        for (std::size_t k = 0; k < kw; ++k) {
          double kv = krow[k];
          // t + k - pad_left must land in [0, len)
          std::size_t t0 = pad_left > k ? pad_left - k : 0;
          std::size_t t1 = k >= len + pad_left
                               ? t0
                               : std::min(out_len, len + pad_left - k);
          std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) -
                               static_cast<std::ptrdiff_t>(pad_left);
          for (std::size_t t = t0; t < t1; ++t)
            orow[t] += kv * xrow[static_cast<std::ptrdiff_t>(t) + off];
        }
      }
    }
  }
  if (tape.wants({&x, &kernels, &bias})) {
    detail::ensure_input_grads(x);
    detail::ensure_input_grads(kernels);
    if (bias.defined()) detail::ensure_input_grads(bias);
    auto sbias = bias.defined() ? bias.shared() : nullptr;
    tape.record(out, [sx = x.shared(), sk = kernels.shared(), sbias,
                      so = out.shared(), batch, cin, len, cout, kw, pad_left,
                      out_len]() {
      const double* g = so->grad.data();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
          const double* grow = g + (b * cout + co) * out_len;
          if (sbias && sbias->requires_grad) {
            double acc = 0.0;
            for (std::size_t t = 0; t < out_len; ++t) acc += grow[t];
            sbias->grad[co] += acc;
          }
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xrow = sx->data.data() + (b * cin + ci) * len;
            const double* krow = sk->data.data() + (co * cin + ci) * kw;
            double* gx = sx->requires_grad
                             ? sx->grad.data() + (b * cin + ci) * len
                             : nullptr;
            double* gk = sk->requires_grad
                             ? sk->grad.data() + (co * cin + ci) * kw
                             : nullptr;
            for (std::size_t k = 0; k < kw; ++k) {
              std::size_t t0 = pad_left > k ? pad_left - k : 0;
              std::size_t t1 = k >= len + pad_left
                                   ? t0
                                   : std::min(out_len, len + pad_left - k);
              std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) -
                                   static_cast<std::ptrdiff_t>(pad_left);
              if (gx) {
                double kv = krow[k];
                for (std::size_t t = t0; t < t1; ++t)
                  gx[static_cast<std::ptrdiff_t>(t) + off] += kv * grow[t];
              }
              if (gk) {
                double acc = 0.0;
                for (std::size_t t = t0; t < t1; ++t)
                  acc += grow[t] * xrow[static_cast<std::ptrdiff_t>(t) + off];
                gk[k] += acc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// x: [batch, channels, length]. Gradient routes to the first maximum.
inline Tensor maxpool1d(Tape& tape, const Tensor& x, std::size_t width,
                        std::size_t stride) {
  if (x.rank() != 3) shape_fail("maxpool1d", shape_str(x.shape()));
  if (width == 0 || stride == 0)
    shape_fail("maxpool1d", "width and stride must be positive");
  std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (width > len)
    shape_fail("maxpool1d", "width " + std::to_string(width) +
                                " exceeds length " + std::to_string(len));
  std::size_t out_len = (len - width) / stride + 1;
  Tensor out = Tensor::zeros({batch, ch, out_len});
  auto argmax = std::make_shared<std::vector<std::size_t>>(batch * ch * out_len);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const double* xrow = px + bc * len;
    double* orow = po + bc * out_len;
    std::size_t* arow = argmax->data() + bc * out_len;
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t start = t * stride;
      double best = xrow[start];
      std::size_t best_i = start;
      for (std::size_t k = 1; k < width; ++k) {
        if (xrow[start + k] > best) {  // strict: first max wins ties
          best = xrow[start + k];
          best_i = start + k;
        }
      }
      orow[t] = best;
      arow[t] = best_i;
    }
  }
  if (tape.wants({&x})) {
    detail::ensure_input_grads(x);
    tape.record(out, [sx = x.shared(), so = out.shared(), argmax, len,
                      out_len]() {
      const double* g = so->grad.data();
      double* gx = sx->grad.data();
      std::size_t rows = so->data.size() / out_len;
      for (std::size_t bc = 0; bc < rows; ++bc)
        for (std::size_t t = 0; t < out_len; ++t)
          gx[bc * len + (*argmax)[bc * out_len + t]] += g[bc * out_len + t];
    });
  }
  return out;
}

inline Tensor relu(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor square(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

inline Tensor max_with_scalar(Tape& tape, const Tensor& x, double s) {
  return detail::unary(
      tape, x, [s](double v) { return v > s ? v : s; },
      [s](double v, double) { return v > s ? 1.0 : 0.0; });
}

// Inverted dropout: kept activations scale by 1/(1-rate) at train time so
// eval needs no rescaling. The mask comes from a counter-based stream on the
// given seed; there is no RNG state to carry.
inline Tensor dropout(Tape& tape, const Tensor& x, double rate, bool train,
                      uint64_t seed) {
  if (!train || rate <= 0.0) {
    return detail::unary(
        tape, x, [](double v) { return v; }, [](double, double) { return 1.0; });
  }
  if (rate >= 1.0) {
    return detail::unary(
        tape, x, [](double) { return 0.0; }, [](double, double) { return 0.0; });
  }
  double keep = 1.0 - rate;
  double scale = 1.0 / keep;
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    bool kept = u64_to_unit(mix_seed(seed, i)) >= rate;
    po[i] = kept ? px[i] * scale : 0.0;
  }
  if (tape.wants({&x})) {
    detail::ensure_input_grads(x);
    tape.record(out, [sx = x.shared(), so = out.shared(), rate, scale,
                      seed]() {
      const double* g = so->grad.data();
      double* gx = sx->grad.data();
      std::size_t m = sx->data.size();
      for (std::size_t i = 0; i < m; ++i)
        if (u64_to_unit(mix_seed(seed, i)) >= rate) gx[i] += g[i] * scale;
    });
  }
  return out;
}

inline Tensor concat(Tape& tape, const std::vector<Tensor>& parts,
                     std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) shape_fail("concat", "axis out of range");
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != ref.size()) shape_fail("concat", "rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d)
      if (d != axis && p.dim(d) != ref[d])
        shape_fail("concat", shape_str(p.shape()) + " vs " + shape_str(ref));
    axis_total += p.dim(axis);
  }
  Shape out_shape = ref;
  out_shape[axis] = axis_total;
  Tensor out = Tensor::zeros(out_shape);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::size_t pa = p.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.data() + o * pa * inner, pa * inner,
                  out.data() + (o * axis_total + offset) * inner);
    offset += pa;
  }
  bool any_grad = false;
  for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
  if (tape.recording() && any_grad) {
    std::vector<std::shared_ptr<Storage>> srcs;
    for (const Tensor& p : parts) {
      detail::ensure_input_grads(p);
      srcs.push_back(p.shared());
    }
    tape.record(out, [srcs, so = out.shared(), outer, inner, axis_total,
                      axis]() {
      const double* g = so->grad.data();
      std::size_t offset2 = 0;
      for (const auto& s : srcs) {
        std::size_t pa = s->shape[axis];
        if (s->requires_grad) {
          for (std::size_t o = 0; o < outer; ++o) {
            const double* gsrc = g + (o * axis_total + offset2) * inner;
            double* gdst = s->grad.data() + o * pa * inner;
            for (std::size_t i = 0; i < pa * inner; ++i) gdst[i] += gsrc[i];
          }
        }
        offset2 += pa;
      }
    });
  }
  return out;
}

inline Tensor reshape(Tape& tape, const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    shape_fail("reshape", shape_str(x.shape()) + " -> " + shape_str(new_shape));
  Tensor out = Tensor::from_data(std::move(new_shape), x.values());
  if (tape.wants({&x})) {
    detail::ensure_input_grads(x);
    tape.record(out, [sx = x.shared(), so = out.shared()]() {
      const double* g = so->grad.data();
      double* gx = sx->grad.data();
      for (std::size_t i = 0; i < sx->data.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

// Contiguous range [start, stop) along one axis; the axis is kept (possibly
// with size 1) so a follow-up reshape can drop it.
inline Tensor slice(Tape& tape, const Tensor& x, std::size_t axis,
                    std::size_t start, std::size_t stop) {
  if (axis >= x.rank()) shape_fail("slice", "axis out of range");
  if (start >= stop || stop > x.dim(axis))
    shape_fail("slice", "range [" + std::to_string(start) + "," +
                            std::to_string(stop) + ") on axis of " +
                            std::to_string(x.dim(axis)));
  Shape out_shape = x.shape();
  out_shape[axis] = stop - start;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  std::size_t span = x.dim(axis);
  std::size_t out_span = stop - start;
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + (o * span + start) * inner, out_span * inner,
                out.data() + o * out_span * inner);
  if (tape.wants({&x})) {
    detail::ensure_input_grads(x);
    tape.record(out, [sx = x.shared(), so = out.shared(), outer, inner, span,
                      out_span, start]() {
      const double* g = so->grad.data();
      double* gx = sx->grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* gs = g + o * out_span * inner;
        double* gd = gx + (o * span + start) * inner;
        for (std::size_t i = 0; i < out_span * inner; ++i) gd[i] += gs[i];
      }
    });
  }
  return out;
}

inline constexpr std::size_t kAllAxes = std::numeric_limits<std::size_t>::max();

namespace detail {

inline Tensor reduce(Tape& tape, const Tensor& x, std::size_t axis,
                     bool mean) {
  const char* name = mean ? "reduce_mean" : "reduce_sum";
  if (axis == kAllAxes) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
    double denom = mean ? static_cast<double>(x.size()) : 1.0;
    Tensor out = Tensor::scalar(acc / denom);
    if (tape.wants({&x})) {
      ensure_input_grads(x);
      tape.record(out, [sx = x.shared(), so = out.shared(), denom]() {
        double g = so->grad[0] / denom;
        double* gx = sx->grad.data();
        for (std::size_t i = 0; i < sx->data.size(); ++i) gx[i] += g;
      });
    }
    return out;
  }
  if (axis >= x.rank()) shape_fail(name, "axis out of range");
  std::size_t outer = 1, inner = 1, n = x.dim(axis);
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d)
    if (d != axis) out_shape.push_back(x.dim(d));
  if (out_shape.empty()) out_shape = {1};
  Tensor out = Tensor::zeros(out_shape);
  double denom = mean ? static_cast<double>(n) : 1.0;
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j) {
      const double* src = px + (o * n + j) * inner;
      double* dst = po + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] / denom;
    }
  if (tape.wants({&x})) {
    ensure_input_grads(x);
    tape.record(out, [sx = x.shared(), so = out.shared(), outer, inner, n,
                      denom]() {
      const double* g = so->grad.data();
      double* gx = sx->grad.data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < n; ++j) {
          double* gd = gx + (o * n + j) * inner;
          const double* gs = g + o * inner;
          for (std::size_t i = 0; i < inner; ++i) gd[i] += gs[i] / denom;
        }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor reduce_sum(Tape& tape, const Tensor& x,
                         std::size_t axis = kAllAxes) {
  return detail::reduce(tape, x, axis, false);
}

inline Tensor reduce_mean(Tape& tape, const Tensor& x,
                          std::size_t axis = kAllAxes) {
  return detail::reduce(tape, x, axis, true);
}

// Max over entries of |analytic - numeric| / max(1, |analytic|, |numeric|)
// with central differences. When max_entries > 0, probes an evenly spaced
// subset instead of every coordinate (full-model checks on wide configs).
inline double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                         const Tensor& x0, double eps,
                         std::size_t max_entries = 0) {
  Tensor x = x0.clone();
  x.set_requires_grad(true);
  Tape tape(true);
  Tensor y = f(tape, x);
  if (!y.all_finite()) fail("NonFiniteOutput", "f(x) is not finite");
  x.zero_grad();
  tape.backward(y);
  std::vector<double> analytic(x.grad(), x.grad() + x.size());

  std::size_t n = x.size();
  std::size_t step = 1;
  if (max_entries > 0 && max_entries < n) step = (n + max_entries - 1) / max_entries;

  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += step) {
    double orig = x.data()[i];
    Tape silent(false);
    x.data()[i] = orig + eps;
    double fp = f(silent, x).item();
    x.data()[i] = orig - eps;
    double fm = f(silent, x).item();
    x.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      fail("NonFiniteOutput", "finite-difference probe is not finite");
    double numeric = (fp - fm) / (2.0 * eps);
    double a = analytic[i];
    double err = std::abs(a - numeric) /
                 std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace nids::tc
