#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "abda/tensor.hpp"

namespace abda::ad {

// Tape-free reverse-mode autodiff over shared_ptr graph nodes. Values are
// cheap handles; leaves persist across steps (their grads accumulate until
// zero_grad), op nodes die with the last handle.
struct Node;
using Value = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // lazily allocated, same shape as val
  bool requires_grad = false;
  std::vector<Value> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.size() != val.size()) grad = Tensor(val.shape());
  }
  void zero_grad() {
    if (grad.size() == val.size()) grad.fill(0.0);
  }
};

Value leaf(Tensor t, bool requires_grad = true);
Value constant(Tensor t);
Value constant(double v);
Value detach(const Value& v);

// Runs reverse-mode accumulation from a scalar root.
void backward(const Value& root);

// ---- elementwise / broadcasting (same rank; dims equal or 1) ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value neg(const Value& a);
Value add_scalar(const Value& a, double s);
Value mul_scalar(const Value& a, double s);

// ---- unary ----
Value exp(const Value& a);
Value log(const Value& a);          // caller guarantees positivity
Value log_floor(const Value& a, double floor);  // log(max(a, floor))
Value sigmoid(const Value& a);
Value tanh(const Value& a);
Value relu(const Value& a);
Value leaky_relu(const Value& a, double slope = 0.1);
Value softplus(const Value& a);
Value pow_const(const Value& a, double p);
// (|x| + eps)^p, the sparse Lp penalty kernel
Value pow_abs(const Value& a, double p, double eps);
Value square(const Value& a);

// ---- reductions ----
Value sum(const Value& a);   // -> scalar
Value mean(const Value& a);  // -> scalar

// ---- shape / channel ops on rank-3 (C,H,W) ----
Value softmax_channels(const Value& a);  // softmax over dim 0, per pixel
Value weighted_channel_sum(const Value& a, const std::vector<double>& w);  // -> (1,H,W)
Value l2norm_channels(const Value& a, double eps = 1e-8);
Value concat_channels(const Value& a, const Value& b);
Value upsample_bilinear(const Value& a, int factor);
Value reshape(const Value& a, std::vector<int> shape);

// ---- structured ops ----
// conv2d: x (Cin,H,W), w (Cout,Cin,kh,kw), b (Cout); zero padding
Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad);
// backward bilinear sampling with clamp-to-border; flow (2,H,W): ch0=u(dx), ch1=v(dy)
Value bilinear_warp(const Value& x, const Value& flow);
// correlation cost volume: D=(2d+1)^2 channels, out-of-range entries fixed at -1
Value cost_volume(const Value& f, const Value& g, int radius);
// column gather: x (C,H,W), pixel list -> (C,N)
Value gather_pixels(const Value& x, const std::vector<std::pair<int, int>>& yx);
// pairwise_dot: a (C,N), b (C,M) -> (N,M) of column dot products
Value pairwise_dot(const Value& a, const Value& b);

// non-differentiable helper: 1 where the bilinear sample stencil stays in
// bounds, 0 where clamping kicked in
Tensor warp_validity(const Tensor& flow);

}  // namespace abda::ad
