#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hmjnd {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on demand during backward
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
  bool requires_grad = false;
  std::uint64_t id = 0;

  void ensure_grad();
};

}  // namespace detail

/// N-dimensional array of doubles participating in a reverse-mode gradient
/// graph. Cheap handle; copies share the underlying node. Feature maps use
/// (N, C, H, W) order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int dim(int i) const;
  std::int64_t size() const;
  bool requires_grad() const;
  std::uint64_t node_id() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();  // leaf editing only (params, probes)
  std::span<const double> grad() const;
  double item() const;  // value of a one-element tensor

  /// Reverse pass from a scalar. Visits each reachable node exactly once,
  /// accumulating into .grad of every node with requires_grad set.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

enum class Act { Relu, Sigmoid, SoftmaxLastDim };
enum class EwKind { Add, Sub, Mul };

// --- network primitives -----------------------------------------------------
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int pad);
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor global_avg_pool(const Tensor& input);
Tensor activation(const Tensor& input, Act kind);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
/// Normalizes over the channel axis for rank-4 inputs, over the last axis
/// otherwise. gamma/beta are 1-d of that axis' extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Cuts a (N, C, H, W) map into non-overlapping window x window tiles after a
/// cyclic roll by (-shift, -shift); output is (N*num_windows, window^2, C).
/// Non-divisible H/W are zero-padded up to the next window multiple.
Tensor window_partition(const Tensor& x, int window, int shift);
/// Exact inverse of window_partition for the same (window, shift, H, W).
Tensor window_merge(const Tensor& tokens, int window, int shift, int out_h, int out_w);

struct AttentionParams {
  Tensor wq, bq;  // (C, C), (C)
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;
};

/// Per-window multi-head scaled dot-product attention of projected q against
/// projected k/v. shift > 0 applies the cyclic-shift mask so windows never
/// attend across the wrap-around seam.
Tensor windowed_cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                                int window, int shift, const AttentionParams& p);

// --- plumbing ----------------------------------------------------------------
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor scale(const Tensor& x, double c);
Tensor reduce_sum(const Tensor& x);  // scalar
Tensor abs(const Tensor& x);
Tensor clamp01(const Tensor& x);
Tensor concat_channels(const std::vector<Tensor>& xs);  // rank-4, same N/H/W
Tensor split_heads(const Tensor& x, int heads);   // (B,T,C) -> (B*h, T, C/h)
Tensor merge_heads(const Tensor& x, int heads);   // inverse of split_heads

class ParamStore;
/// Populates grads of every parameter reachable from loss; unreachable
/// parameters get zero grads. loss must be a scalar.
void backward(const Tensor& loss, ParamStore& params);

}  // namespace hmjnd
