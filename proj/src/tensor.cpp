#include "hmjnd/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "hmjnd/kernels.hpp"
#include "hmjnd/param_store.hpp"

namespace hmjnd {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace detail {

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
}

namespace {
std::atomic<std::uint64_t> g_next_id{1};
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace detail

namespace {

using detail::Node;

[[noreturn]] void shape_error(const std::string& msg) { throw std::invalid_argument(msg); }

void check_defined(const Tensor& t, const char* who) {
  if (!t.defined()) throw std::invalid_argument(std::string(who) + ": undefined tensor");
}

// Builds an op node: values computed by the caller, gradient flows to the
// inputs through backprop. When no input needs gradients the node is a
// detached leaf so inference never grows a graph.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               std::function<void(Node&)> backprop) {
  auto n = detail::new_node(std::move(shape), std::move(values));
  bool needs = false;
  for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  if (needs) {
    n->requires_grad = true;
    for (const auto& t : inputs)
      if (t.defined()) n->parents.push_back(t.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(n);
}

void accumulate(Node& dst, const std::vector<double>& delta) {
  dst.ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) dst.grad[i] += delta[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const auto n = shape_numel(shape);
  if (n < 0) shape_error("tensor shape has negative extent");
  auto node = detail::new_node(std::move(shape), std::vector<double>(n, v));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    shape_error("from_values: " + shape_str(shape) + " does not match value count " +
                std::to_string(values.size()));
  auto node = detail::new_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int Tensor::dim(int i) const { return node_->shape.at(i); }
std::int64_t Tensor::size() const { return static_cast<std::int64_t>(node_->values.size()); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
std::uint64_t Tensor::node_id() const { return node_->id; }

std::span<const double> Tensor::values() const { return node_->values; }
std::span<double> Tensor::mutable_values() { return node_->values; }

std::span<const double> Tensor::grad() const {
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item(): tensor has " + std::to_string(size()) +
                                          " elements, expected 1");
  return node_->values[0];
}

void Tensor::backward() const {
  if (!node_) throw std::logic_error("backward on undefined tensor");
  if (size() != 1) throw std::logic_error("backward requires a scalar loss");
  // Iterative post-order over parents; each node visited exactly once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    if (next < cur->parents.size()) {
      Node* p = cur->parents[next++].get();
      if (p->backprop || p->requires_grad) {
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(cur);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int pad) {
  check_defined(input, "conv2d");
  check_defined(weight, "conv2d");
  check_defined(bias, "conv2d");
  if (input.rank() != 4) shape_error("conv2d: input must be rank 4, got " + shape_str(input.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3))
    shape_error("conv2d: weight must be (cout, cin, k, k), got " + shape_str(weight.shape()));
  if (weight.dim(1) != input.dim(1))
    shape_error("conv2d: input has " + std::to_string(input.dim(1)) +
                " channels but weight expects " + std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
    shape_error("conv2d: bias must be (cout)");
  if (pad < 0 || stride < 1) shape_error("conv2d: need pad >= 0 and stride >= 1");

  const auto d = kernels::conv_dims(input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                                    weight.dim(0), weight.dim(2), stride, pad);
  if (d.oh < 1 || d.ow < 1) shape_error("conv2d: kernel does not fit input");

  std::vector<double> y(static_cast<std::size_t>(d.n) * d.cout * d.oh * d.ow);
  kernels::conv2d_forward(input.values().data(), weight.values().data(), bias.values().data(),
                          y.data(), d);

  return make_op({d.n, d.cout, d.oh, d.ow}, std::move(y), {input, weight, bias},
                 [d](Node& self) {
                   Node& x = *self.parents[0];
                   Node& w = *self.parents[1];
                   Node& b = *self.parents[2];
                   if (x.requires_grad || x.backprop) {
                     std::vector<double> dx(x.values.size());
                     kernels::conv2d_backward_input(self.grad.data(), w.values.data(), dx.data(), d);
                     accumulate(x, dx);
                   }
                   if (w.requires_grad || w.backprop) {
                     std::vector<double> dw(w.values.size()), db(b.values.size());
                     kernels::conv2d_backward_weight(self.grad.data(), x.values.data(), dw.data(),
                                                     db.data(), d);
                     accumulate(w, dw);
                     if (b.requires_grad || b.backprop) accumulate(b, db);
                   } else if (b.requires_grad || b.backprop) {
                     std::vector<double> dw(w.values.size()), db(b.values.size());
                     kernels::conv2d_backward_weight(self.grad.data(), x.values.data(), dw.data(),
                                                     db.data(), d);
                     accumulate(b, db);
                   }
                 });
}

// ---------------------------------------------------------------------------
// fully_connected
// ---------------------------------------------------------------------------

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_defined(input, "fully_connected");
  check_defined(weight, "fully_connected");
  check_defined(bias, "fully_connected");
  if (input.rank() != 2) shape_error("fully_connected: input must be (batch, features)");
  if (weight.rank() != 2) shape_error("fully_connected: weight must be (out, in)");
  if (weight.dim(1) != input.dim(1))
    shape_error("fully_connected: input features " + std::to_string(input.dim(1)) +
                " vs weight in-dim " + std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
    shape_error("fully_connected: bias must be (out)");

  const int bsz = input.dim(0), in = input.dim(1), out = weight.dim(0);
  std::vector<double> y(static_cast<std::size_t>(bsz) * out);
  kernels::bmm(input.values().data(), weight.values().data(), y.data(), 1, bsz, in, out, true);
  for (int r = 0; r < bsz; ++r)
    for (int o = 0; o < out; ++o) y[r * out + o] += bias.values()[o];

  return make_op({bsz, out}, std::move(y), {input, weight, bias}, [bsz, in, out](Node& self) {
    Node& x = *self.parents[0];
    Node& w = *self.parents[1];
    Node& b = *self.parents[2];
    if (x.requires_grad || x.backprop) {
      std::vector<double> dx(x.values.size());
      kernels::bmm(self.grad.data(), w.values.data(), dx.data(), 1, bsz, out, in, false);
      accumulate(x, dx);
    }
    if (w.requires_grad || w.backprop) {
      std::vector<double> dw(w.values.size(), 0.0);
      for (int o = 0; o < out; ++o)
        for (int i = 0; i < in; ++i) {
          double acc = 0.0;
          for (int r = 0; r < bsz; ++r) acc += self.grad[r * out + o] * x.values[r * in + i];
          dw[o * in + i] = acc;
        }
      accumulate(w, dw);
    }
    if (b.requires_grad || b.backprop) {
      std::vector<double> db(b.values.size(), 0.0);
      for (int r = 0; r < bsz; ++r)
        for (int o = 0; o < out; ++o) db[o] += self.grad[r * out + o];
      accumulate(b, db);
    }
  });
}

// ---------------------------------------------------------------------------
// global_avg_pool
// ---------------------------------------------------------------------------

Tensor global_avg_pool(const Tensor& input) {
  check_defined(input, "global_avg_pool");
  if (input.rank() != 4) shape_error("global_avg_pool: input must be rank 4");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h * w == 0) shape_error("global_avg_pool: empty spatial extent");
  std::vector<double> y(static_cast<std::size_t>(n) * c);
  const auto x = input.values();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      double acc = 0.0;
      const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * h * w;
      for (int i = 0; i < h * w; ++i) acc += x[base + i];
      y[ni * c + ci] = acc / (h * w);
    }
  return make_op({n, c}, std::move(y), {input}, [n, c, h, w](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    const double inv = 1.0 / (h * w);
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const double g = self.grad[ni * c + ci] * inv;
        const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * h * w;
        for (int i = 0; i < h * w; ++i) x.grad[base + i] += g;
      }
  });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  check_defined(x, "relu");
  std::vector<double> y(x.values().begin(), x.values().end());
  for (double& v : y) v = v > 0.0 ? v : 0.0;
  return make_op(x.shape(), std::move(y), {x}, [](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (x.values[i] > 0.0) x.grad[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  check_defined(x, "sigmoid");
  std::vector<double> y(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
  return make_op(x.shape(), std::move(y), {x}, [](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.values[i];
      x.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  check_defined(x, "softmax_lastdim");
  if (x.rank() < 1) shape_error("softmax_lastdim: needs rank >= 1");
  const int n = x.dim(x.rank() - 1);
  const std::int64_t rows = x.size() / n;
  std::vector<double> y(x.size());
  kernels::softmax_rows(x.values().data(), y.data(), rows, n);
  return make_op(x.shape(), std::move(y), {x}, [rows, n](Node& self) {
    Node& x = *self.parents[0];
    std::vector<double> dx(x.values.size());
    kernels::softmax_rows_backward(self.values.data(), self.grad.data(), dx.data(), rows, n);
    accumulate(x, dx);
  });
}

Tensor activation(const Tensor& input, Act kind) {
  switch (kind) {
    case Act::Relu: return relu(input);
    case Act::Sigmoid: return sigmoid(input);
    case Act::SoftmaxLastDim: return softmax_lastdim(input);
  }
  throw std::logic_error("activation: bad kind");
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind) {
  check_defined(a, "elementwise");
  check_defined(b, "elementwise");
  const bool same = a.shape() == b.shape();
  // (N,C,H,W) op (N,C): broadcast b over the spatial dims (channel gating).
  const bool bcast = !same && a.rank() == 4 && b.rank() == 2 && a.dim(0) == b.dim(0) &&
                     a.dim(1) == b.dim(1);
  if (!same && !bcast)
    shape_error("elementwise: shapes " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()) + " are not compatible");

  const std::int64_t hw = bcast ? static_cast<std::int64_t>(a.dim(2)) * a.dim(3) : 1;
  std::vector<double> y(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double bvi = bv[bcast ? i / hw : i];
    switch (kind) {
      case EwKind::Add: y[i] = av[i] + bvi; break;
      case EwKind::Sub: y[i] = av[i] - bvi; break;
      case EwKind::Mul: y[i] = av[i] * bvi; break;
    }
  }
  return make_op(a.shape(), std::move(y), {a, b}, [kind, bcast, hw](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad || a.backprop) {
      a.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        double g = self.grad[i];
        if (kind == EwKind::Mul) g *= b.values[bcast ? i / hw : i];
        a.grad[i] += g;
      }
    }
    if (b.requires_grad || b.backprop) {
      b.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const std::size_t bi = bcast ? i / hw : i;
        switch (kind) {
          case EwKind::Add: b.grad[bi] += self.grad[i]; break;
          case EwKind::Sub: b.grad[bi] -= self.grad[i]; break;
          case EwKind::Mul: b.grad[bi] += self.grad[i] * a.values[i]; break;
        }
      }
    }
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Add); }
Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Sub); }
Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Mul); }

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

namespace {
// Generic (outer, F, inner) view: rank-4 normalizes the channel axis,
// everything else the last axis.
struct NormDims {
  std::int64_t outer, inner;
  int f;
};
NormDims norm_dims(const Tensor& x) {
  if (x.rank() == 4)
    return {x.dim(0), static_cast<std::int64_t>(x.dim(2)) * x.dim(3), x.dim(1)};
  const int f = x.dim(x.rank() - 1);
  return {x.size() / f, 1, f};
}
}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_defined(x, "layer_norm");
  check_defined(gamma, "layer_norm");
  check_defined(beta, "layer_norm");
  if (eps <= 0.0) shape_error("layer_norm: eps must be positive");
  const auto nd = norm_dims(x);
  if (gamma.rank() != 1 || gamma.dim(0) != nd.f || beta.rank() != 1 || beta.dim(0) != nd.f)
    shape_error("layer_norm: gamma/beta must be 1-d of extent " + std::to_string(nd.f));

  std::vector<double> y(x.size());
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  for (std::int64_t o = 0; o < nd.outer; ++o)
    for (std::int64_t in = 0; in < nd.inner; ++in) {
      double mu = 0.0;
      for (int f = 0; f < nd.f; ++f) mu += xv[(o * nd.f + f) * nd.inner + in];
      mu /= nd.f;
      double var = 0.0;
      for (int f = 0; f < nd.f; ++f) {
        const double d = xv[(o * nd.f + f) * nd.inner + in] - mu;
        var += d * d;
      }
      var /= nd.f;
      const double s = std::sqrt(var + eps);
      for (int f = 0; f < nd.f; ++f) {
        const std::int64_t idx = (o * nd.f + f) * nd.inner + in;
        y[idx] = (xv[idx] - mu) / s * gv[f] + bv[f];
      }
    }

  return make_op(x.shape(), std::move(y), {x, gamma, beta}, [nd, eps](Node& self) {
    Node& x = *self.parents[0];
    Node& gamma = *self.parents[1];
    Node& beta = *self.parents[2];
    x.ensure_grad();
    gamma.ensure_grad();
    beta.ensure_grad();
    std::vector<double> xhat(nd.f), dxhat(nd.f);
    for (std::int64_t o = 0; o < nd.outer; ++o)
      for (std::int64_t in = 0; in < nd.inner; ++in) {
        double mu = 0.0;
        for (int f = 0; f < nd.f; ++f) mu += x.values[(o * nd.f + f) * nd.inner + in];
        mu /= nd.f;
        double var = 0.0;
        for (int f = 0; f < nd.f; ++f) {
          const double d = x.values[(o * nd.f + f) * nd.inner + in] - mu;
          var += d * d;
        }
        var /= nd.f;
        const double s = std::sqrt(var + eps);
        double m1 = 0.0, m2 = 0.0;
        for (int f = 0; f < nd.f; ++f) {
          const std::int64_t idx = (o * nd.f + f) * nd.inner + in;
          xhat[f] = (x.values[idx] - mu) / s;
          dxhat[f] = self.grad[idx] * gamma.values[f];
          m1 += dxhat[f];
          m2 += dxhat[f] * xhat[f];
          gamma.grad[f] += self.grad[idx] * xhat[f];
          beta.grad[f] += self.grad[idx];
        }
        m1 /= nd.f;
        m2 /= nd.f;
        for (int f = 0; f < nd.f; ++f) {
          const std::int64_t idx = (o * nd.f + f) * nd.inner + in;
          x.grad[idx] += (dxhat[f] - m1 - xhat[f] * m2) / s;
        }
      }
  });
}

// ---------------------------------------------------------------------------
// index-map ops (window partition/merge, head split/merge)
// ---------------------------------------------------------------------------

namespace {

// fwd[i] = source index of output element i (-1 reads zero); inv[j] = output
// index fed by input element j (-1: dropped). fwd must be injective on its
// non-negative entries, which makes the backward a plain copy.
Tensor gather_op(const Tensor& x, Shape out_shape,
                 std::shared_ptr<const std::vector<std::int64_t>> fwd,
                 std::shared_ptr<const std::vector<std::int64_t>> inv) {
  std::vector<double> y(fwd->size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < fwd->size(); ++i) {
    const auto s = (*fwd)[i];
    y[i] = s >= 0 ? xv[s] : 0.0;
  }
  return make_op(std::move(out_shape), std::move(y), {x}, [fwd, inv](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    for (std::size_t j = 0; j < inv->size(); ++j) {
      const auto o = (*inv)[j];
      if (o >= 0) x.grad[j] += self.grad[o];
    }
  });
}

int ceil_mult(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace

Tensor window_partition(const Tensor& x, int window, int shift) {
  check_defined(x, "window_partition");
  if (x.rank() != 4) shape_error("window_partition: input must be rank 4");
  if (window <= 0) shape_error("window_partition: window must be positive");
  if (shift < 0 || shift >= window) shape_error("window_partition: need 0 <= shift < window");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int hp = ceil_mult(h, window), wp = ceil_mult(w, window);
  const int nwh = hp / window, nww = wp / window, nw = nwh * nww;
  const int t = window * window;

  auto fwd = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(n) * nw * t * c);
  auto inv = std::make_shared<std::vector<std::int64_t>>(x.size(), -1);
  for (int ni = 0; ni < n; ++ni)
    for (int wi = 0; wi < nw; ++wi)
      for (int ti = 0; ti < t; ++ti) {
        const int py = (wi / nww) * window + ti / window;
        const int px = (wi % nww) * window + ti % window;
        const int sy = (py + shift) % hp;  // cyclic roll by (-shift, -shift)
        const int sx = (px + shift) % wp;
        for (int ci = 0; ci < c; ++ci) {
          const std::size_t oi =
              ((static_cast<std::size_t>(ni) * nw + wi) * t + ti) * c + ci;
          if (sy < h && sx < w) {
            const std::int64_t si =
                ((static_cast<std::int64_t>(ni) * c + ci) * h + sy) * w + sx;
            (*fwd)[oi] = si;
            (*inv)[si] = static_cast<std::int64_t>(oi);
          } else {
            (*fwd)[oi] = -1;  // zero padding
          }
        }
      }
  return gather_op(x, {n * nw, t, c}, fwd, inv);
}

Tensor window_merge(const Tensor& tokens, int window, int shift, int out_h, int out_w) {
  check_defined(tokens, "window_merge");
  if (tokens.rank() != 3) shape_error("window_merge: input must be (windows, tokens, C)");
  if (window <= 0) shape_error("window_merge: window must be positive");
  if (shift < 0 || shift >= window) shape_error("window_merge: need 0 <= shift < window");
  const int t = window * window;
  if (tokens.dim(1) != t) shape_error("window_merge: token count does not match window");
  const int hp = ceil_mult(out_h, window), wp = ceil_mult(out_w, window);
  const int nwh = hp / window, nww = wp / window, nw = nwh * nww;
  if (tokens.dim(0) % nw != 0)
    shape_error("window_merge: window count does not match target size");
  const int n = tokens.dim(0) / nw;
  const int c = tokens.dim(2);

  auto fwd = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(n) * c * out_h * out_w);
  auto inv = std::make_shared<std::vector<std::int64_t>>(tokens.size(), -1);
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          const int ry = (y - shift % hp + hp) % hp;  // undo the roll
          const int rx = (x - shift % wp + wp) % wp;
          const int wi = (ry / window) * nww + rx / window;
          const int ti = (ry % window) * window + rx % window;
          const std::size_t oi =
              ((static_cast<std::size_t>(ni) * c + ci) * out_h + y) * out_w + x;
          const std::int64_t si =
              ((static_cast<std::int64_t>(ni) * nw + wi) * t + ti) * c + ci;
          (*fwd)[oi] = si;
          (*inv)[si] = static_cast<std::int64_t>(oi);
        }
  return gather_op(tokens, {n, c, out_h, out_w}, fwd, inv);
}

Tensor split_heads(const Tensor& x, int heads) {
  check_defined(x, "split_heads");
  if (x.rank() != 3) shape_error("split_heads: input must be (B, T, C)");
  const int b = x.dim(0), t = x.dim(1), c = x.dim(2);
  if (c % heads != 0)
    shape_error("split_heads: channels " + std::to_string(c) + " not divisible by heads " +
                std::to_string(heads));
  const int d = c / heads;
  auto fwd = std::make_shared<std::vector<std::int64_t>>(x.size());
  auto inv = std::make_shared<std::vector<std::int64_t>>(x.size());
  for (int bi = 0; bi < b; ++bi)
    for (int hd = 0; hd < heads; ++hd)
      for (int ti = 0; ti < t; ++ti)
        for (int j = 0; j < d; ++j) {
          const std::int64_t oi =
              ((static_cast<std::int64_t>(bi) * heads + hd) * t + ti) * d + j;
          const std::int64_t si = (static_cast<std::int64_t>(bi) * t + ti) * c + hd * d + j;
          (*fwd)[oi] = si;
          (*inv)[si] = oi;
        }
  return gather_op(x, {b * heads, t, d}, fwd, inv);
}

Tensor merge_heads(const Tensor& x, int heads) {
  check_defined(x, "merge_heads");
  if (x.rank() != 3) shape_error("merge_heads: input must be (B*h, T, d)");
  if (x.dim(0) % heads != 0) shape_error("merge_heads: batch not divisible by heads");
  const int b = x.dim(0) / heads, t = x.dim(1), d = x.dim(2);
  const int c = d * heads;
  auto fwd = std::make_shared<std::vector<std::int64_t>>(x.size());
  auto inv = std::make_shared<std::vector<std::int64_t>>(x.size());
  for (int bi = 0; bi < b; ++bi)
    for (int ti = 0; ti < t; ++ti)
      for (int hd = 0; hd < heads; ++hd)
        for (int j = 0; j < d; ++j) {
          const std::int64_t oi = (static_cast<std::int64_t>(bi) * t + ti) * c + hd * d + j;
          const std::int64_t si =
              ((static_cast<std::int64_t>(bi) * heads + hd) * t + ti) * d + j;
          (*fwd)[oi] = si;
          (*inv)[si] = oi;
        }
  return gather_op(x, {b, t, c}, fwd, inv);
}

// ---------------------------------------------------------------------------
// bmm and small plumbing ops
// ---------------------------------------------------------------------------

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  check_defined(a, "bmm");
  check_defined(b, "bmm");
  if (a.rank() != 3 || b.rank() != 3) shape_error("bmm: operands must be rank 3");
  if (a.dim(0) != b.dim(0)) shape_error("bmm: batch mismatch");
  const int bt = a.dim(0), m = a.dim(1), kd = a.dim(2);
  const int n = transpose_b ? b.dim(1) : b.dim(2);
  const int bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != kd) shape_error("bmm: inner dimensions disagree");
  std::vector<double> y(static_cast<std::size_t>(bt) * m * n);
  kernels::bmm(a.values().data(), b.values().data(), y.data(), bt, m, kd, n, transpose_b);
  return make_op({bt, m, n}, std::move(y), {a, b}, [bt, m, kd, n, transpose_b](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad || a.backprop) {
      // dA = dC * B^T (plain) or dC * B (transposed-b layout)
      std::vector<double> da(a.values.size());
      kernels::bmm(self.grad.data(), b.values.data(), da.data(), bt, m, n, kd, !transpose_b);
      accumulate(a, da);
    }
    if (b.requires_grad || b.backprop) {
      b.ensure_grad();
      for (int bi = 0; bi < bt; ++bi) {
        const double* dc = self.grad.data() + static_cast<std::size_t>(bi) * m * n;
        const double* av = a.values.data() + static_cast<std::size_t>(bi) * m * kd;
        double* db = b.grad.data() + static_cast<std::size_t>(bi) * kd * n;
        if (!transpose_b) {
          // dB[k][j] += sum_m A[m][k] * dC[m][j]
          for (int k = 0; k < kd; ++k)
            for (int j = 0; j < n; ++j) {
              double acc = 0.0;
              for (int mi = 0; mi < m; ++mi) acc += av[mi * kd + k] * dc[mi * n + j];
              db[k * n + j] += acc;
            }
        } else {
          // b is (n, kd); dB[j][k] += sum_m dC[m][j] * A[m][k]
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < kd; ++k) {
              double acc = 0.0;
              for (int mi = 0; mi < m; ++mi) acc += dc[mi * n + j] * av[mi * kd + k];
              db[j * kd + k] += acc;
            }
        }
      }
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  check_defined(x, "scale");
  std::vector<double> y(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x.values()[i] * c;
  return make_op(x.shape(), std::move(y), {x}, [c](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * c;
  });
}

Tensor reduce_sum(const Tensor& x) {
  check_defined(x, "reduce_sum");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_op({1}, {acc}, {x}, [](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    const double g = self.grad[0];
    for (double& gv : x.grad) gv += g;
  });
}

Tensor abs(const Tensor& x) {
  check_defined(x, "abs");
  std::vector<double> y(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = std::fabs(x.values()[i]);
  return make_op(x.shape(), std::move(y), {x}, [](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = x.values[i];
      if (v > 0.0)
        x.grad[i] += self.grad[i];
      else if (v < 0.0)
        x.grad[i] -= self.grad[i];
    }
  });
}

Tensor clamp01(const Tensor& x) {
  check_defined(x, "clamp01");
  std::vector<double> y(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i)
    y[i] = std::min(1.0, std::max(0.0, x.values()[i]));
  return make_op(x.shape(), std::move(y), {x}, [](Node& self) {
    Node& x = *self.parents[0];
    x.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (x.values[i] > 0.0 && x.values[i] < 1.0) x.grad[i] += self.grad[i];
  });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) shape_error("concat_channels: no inputs");
  const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int ctot = 0;
  for (const auto& x : xs) {
    check_defined(x, "concat_channels");
    if (x.rank() != 4 || x.dim(0) != n || x.dim(2) != h || x.dim(3) != w)
      shape_error("concat_channels: inputs must agree on N/H/W");
    ctot += x.dim(1);
  }
  std::vector<double> y(static_cast<std::size_t>(n) * ctot * h * w);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const int c = x.dim(1);
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const std::size_t src = (static_cast<std::size_t>(ni) * c + ci) * h * w;
        const std::size_t dst = (static_cast<std::size_t>(ni) * ctot + off + ci) * h * w;
        for (int i = 0; i < h * w; ++i) y[dst + i] = x.values()[src + i];
      }
    off += c;
  }
  return make_op({n, ctot, h, w}, std::move(y), xs, [n, h, w, ctot, offsets](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      Node& x = *self.parents[p];
      if (!(x.requires_grad || x.backprop)) continue;
      x.ensure_grad();
      const int c = x.shape[1];
      for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
          const std::size_t src = (static_cast<std::size_t>(ni) * c + ci) * h * w;
          const std::size_t dst =
              (static_cast<std::size_t>(ni) * ctot + offsets[p] + ci) * h * w;
          for (int i = 0; i < h * w; ++i) x.grad[src + i] += self.grad[dst + i];
        }
    }
  });
}

// ---------------------------------------------------------------------------
// windowed cross-attention
// ---------------------------------------------------------------------------

namespace {

// Shifted-window attention mask in Swin's cyclic-shift convention: 0 where the
// pair of tokens is spatially contiguous in the unrolled plane, -1e9 across
// the wrap-around seam. Shape (nW, T, T), later expanded over batch and heads.
std::vector<double> shift_mask(int hp, int wp, int window, int shift) {
  const int nwh = hp / window, nww = wp / window;
  const int t = window * window;
  auto region = [&](int coord, int extent) {
    if (coord < extent - window) return 0;
    if (coord < extent - shift) return 1;
    return 2;
  };
  std::vector<int> id(static_cast<std::size_t>(hp) * wp);
  for (int y = 0; y < hp; ++y)
    for (int x = 0; x < wp; ++x) id[y * wp + x] = region(y, hp) * 3 + region(x, wp);
  std::vector<double> mask(static_cast<std::size_t>(nwh) * nww * t * t, 0.0);
  for (int wy = 0; wy < nwh; ++wy)
    for (int wx = 0; wx < nww; ++wx) {
      const int wi = wy * nww + wx;
      for (int t1 = 0; t1 < t; ++t1)
        for (int t2 = 0; t2 < t; ++t2) {
          const int y1 = wy * window + t1 / window, x1 = wx * window + t1 % window;
          const int y2 = wy * window + t2 / window, x2 = wx * window + t2 % window;
          if (id[y1 * wp + x1] != id[y2 * wp + x2])
            mask[(static_cast<std::size_t>(wi) * t + t1) * t + t2] = -1e9;
        }
    }
  return mask;
}

}  // namespace

Tensor windowed_cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                                int window, int shift, const AttentionParams& p) {
  check_defined(q, "windowed_cross_attention");
  check_defined(k, "windowed_cross_attention");
  check_defined(v, "windowed_cross_attention");
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4)
    shape_error("windowed_cross_attention: q/k/v must be rank 4");
  if (q.shape() != k.shape() || q.shape() != v.shape())
    shape_error("windowed_cross_attention: q/k/v must be spatially aligned");
  const int c = q.dim(1), h = q.dim(2), w = q.dim(3);
  if (heads < 1 || c % heads != 0)
    throw std::invalid_argument("windowed_cross_attention: channels " + std::to_string(c) +
                                " not divisible by heads " + std::to_string(heads));
  if (window <= 0 || shift < 0 || shift >= window)
    throw std::invalid_argument("windowed_cross_attention: bad window/shift");

  auto project = [&](const Tensor& x, const Tensor& wgt, const Tensor& bias) {
    // 1x1 convolution == per-position linear projection
    Shape ws = {c, c, 1, 1};
    if (wgt.shape() != ws) shape_error("windowed_cross_attention: projection must be (C,C,1,1)");
    return conv2d(x, wgt, bias, 1, 0);
  };

  const Tensor qp = window_partition(project(q, p.wq, p.bq), window, shift);
  const Tensor kp = window_partition(project(k, p.wk, p.bk), window, shift);
  const Tensor vp = window_partition(project(v, p.wv, p.bv), window, shift);

  const int d = c / heads;
  Tensor qh = split_heads(qp, heads);
  Tensor kh = split_heads(kp, heads);
  Tensor vh = split_heads(vp, heads);

  Tensor scores = scale(bmm(qh, kh, /*transpose_b=*/true), 1.0 / std::sqrt(double(d)));
  if (shift > 0) {
    const int hp = ceil_mult(h, window), wp_ = ceil_mult(w, window);
    const auto base = shift_mask(hp, wp_, window, shift);
    const int nw = (hp / window) * (wp_ / window);
    const int t = window * window;
    const int batches = scores.dim(0);  // n * nW * heads
    std::vector<double> full(static_cast<std::size_t>(batches) * t * t);
    for (int bi = 0; bi < batches; ++bi) {
      const int wi = (bi / heads) % nw;
      std::copy_n(base.data() + static_cast<std::size_t>(wi) * t * t, t * t,
                  full.data() + static_cast<std::size_t>(bi) * t * t);
    }
    scores = scores + Tensor::from_values(scores.shape(), std::move(full));
  }
  Tensor attn = softmax_lastdim(scores);
  Tensor ctx = merge_heads(bmm(attn, vh), heads);
  Tensor out = window_merge(ctx, window, shift, h, w);
  return project(out, p.wo, p.bo);
}

// ---------------------------------------------------------------------------
// backward entry point
// ---------------------------------------------------------------------------

void backward(const Tensor& loss, ParamStore& params) {
  if (!loss.defined() || loss.size() != 1)
    throw std::logic_error("backward: loss must be a defined scalar");
  params.zero_grads();
  loss.backward();
}

}  // namespace hmjnd
