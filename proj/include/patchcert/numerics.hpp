#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "patchcert/tensor.hpp"

namespace patchcert {

/// Multiply-accumulate counter owned by one evaluation context.
///
/// Not shared between threads: each worker keeps its own counter and the
/// caller sums them afterwards.
struct MacCounter {
  std::uint64_t macs = 0;
  void add(std::uint64_t n) noexcept { macs += n; }
};

/// c = a · b for a[m×k], b[k×n]. Adds exactly m·k·n to `counter` when given.
Tensor matmul(const Tensor& a, const Tensor& b, MacCounter* counter = nullptr);

Tensor transpose(const Tensor& a);

/// x + bias, broadcasting bias over every slice of the last dimension.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// x·w + bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias, MacCounter* counter = nullptr);

/// Numerically stable softmax over the last dimension.
Tensor softmax_last_dim(const Tensor& x);

/// Per-slice statistics kept for the layer-norm backward pass.
struct LayerNormCache {
  Tensor normalized;  // pre-affine output
  std::vector<float> inv_std;
  bool empty() const noexcept { return inv_std.empty(); }
};

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps,
                  LayerNormCache* cache = nullptr);

/// Tanh-approximation GELU: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
Tensor gelu(const Tensor& x);
float gelu_scalar(float x) noexcept;

// Backward passes. Each takes the forward inputs (or cache) plus the
// upstream gradient and returns exact gradients.

struct MatmulGrads {
  Tensor da;
  Tensor db;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc);

/// Gradient of a broadcast bias: column sums of dy.
Tensor bias_backward(const Tensor& dy);

/// dx given the softmax output y and upstream dy.
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

struct LayerNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};
/// Throws UsageError when `cache` was never filled by a forward call.
LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma,
                                   const Tensor& dy);

Tensor gelu_backward(const Tensor& x, const Tensor& dy);

struct CrossEntropy {
  double loss = 0.0;
  Tensor dlogits;  // softmax(logits) - onehot(target)
};
/// Softmax cross-entropy of a single logit vector against a class index.
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::size_t target);

/// Central differences (f(x + h·e_i) - f(x - h·e_i)) / 2h for every coordinate.
/// f is evaluated on float tensors but returns double so callers can
/// re-evaluate in 64-bit.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h);

}  // namespace patchcert
