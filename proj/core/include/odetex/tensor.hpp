#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "odetex/rng.hpp"

namespace odetex::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // allocated on demand, same length as values
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates d(loss)/d(parent) into parents' grad, given this node's grad.
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

// Reverse-mode tensor. Value semantics over a shared node; values are
// immutable after creation, adjoints accumulate during backward().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor constant(Shape shape, std::vector<float> values);
  static Tensor scalar(float v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float v);
  static Tensor randn(Shape shape, Rng& rng);
  // Leaf that participates in optimization.
  static Tensor param(Shape shape, std::vector<float> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values.size(); }
  const std::vector<float>& values() const { return node_->values; }
  const std::vector<float>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  float item() const;

  // In-place edits for optimizers / loaders; legal only on leaves.
  std::vector<float>& mutable_values() { return node_->values; }
  void zero_grad() { node_->grad.clear(); }

  // Same values, cut from the recorded graph.
  Tensor detach() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Thread-local autodiff recording switch (recording on by default).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
// x^p with d/dx = p x^(p-1); gradient forced to 0 where x <= 0.
Tensor pow_scalar(const Tensor& a, float p);
Tensor sqrt_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor swish(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp(const Tensor& a, float lo, float hi);
Tensor clamp_min(const Tensor& a, float lo);
// Multiply by a differentiable scalar tensor.
Tensor scale_by(const Tensor& a, const Tensor& s);

// Broadcast across channels: m has shape [1, H, W], a has [C, H, W].
Tensor bcast_mul(const Tensor& a, const Tensor& m);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- linear algebra (2-D) ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor slice_rows(const Tensor& a, int r0, int r1);

// ---- image / grid ops ([C, H, W]) ----
Tensor conv2d_circular(const Tensor& input, const Tensor& kernel,
                       const Tensor& bias);
Tensor group_norm(const Tensor& x, int groups, float eps = 1e-5f);
Tensor downsample2x(const Tensor& x);
Tensor upsample2x(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int c0, int c1);
Tensor sum_channels(const Tensor& x);  // -> [1, H, W]
// s, b have shape [C]; out(c, y, x) = s(c) * x(c, y, x) + b(c).
Tensor scale_shift_channels(const Tensor& x, const Tensor& s, const Tensor& b);
// idx[i] is the flat spatial source site for output site i (size out_h*out_w).
Tensor gather_spatial(const Tensor& x, const std::vector<int>& idx, int out_h,
                      int out_w);
Tensor roll2d(const Tensor& x, int dy, int dx);

struct AttentionParams {
  Tensor wq, wk, wv;  // [heads*head_dim, C]
  Tensor wo;          // [C, heads*head_dim]
  Tensor bo;          // [C]
};
// Scaled dot-product self-attention over the H*W spatial sites plus a
// residual connection; no positional encoding.
Tensor self_attention(const Tensor& x, int heads, int head_dim,
                      const AttentionParams& p);

// ---- reductions / reshaping ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Sorts each row ascending; gradients scatter back through the permutation.
Tensor sort_rows(const Tensor& a);

// ---- backward ----
// Seeds loss.grad = 1 and runs reverse topological accumulation.
void backward(const Tensor& loss);
// Number of nodes reachable from t (diagnostic for tape-size bounds).
std::size_t graph_size(const Tensor& t);

}  // namespace odetex::ad
