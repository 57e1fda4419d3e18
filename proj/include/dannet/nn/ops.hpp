#pragma once

#include <vector>

#include "dannet/nn/autograd.hpp"

namespace dannet::nn {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

inline int conv_transpose_out_size(int in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

/// weight: Cout x Cin x k x k, bias: Cout x 1 x 1 x 1 (may be undefined).
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g);

/// weight: Cin x Cout x k x k (the adjoint layout of conv2d).
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     ConvGeometry g);

struct BatchNormState {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  float momentum = 0.1f;
  float eps = 1e-5f;
  bool training = true;
};

/// Per-channel normalization over (N, H, W). In training mode uses batch
/// statistics and updates the running estimates.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               const BatchNormState& state);

Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, float factor);

/// Weighted sum of scalar Vars; undefined entries are skipped.
Var weighted_sum(const std::vector<std::pair<float, Var>>& terms);

/// Bilinear resize (align_corners convention) to out_h x out_w.
Var upsample_bilinear(const Var& x, int out_h, int out_w);

Var softmax(const Var& logits);

/// Keeps the listed channels, in order.
Var select_channels(const Var& x, const std::vector<int>& channels);

/// Scalar node whose value and gradient w.r.t. `input` were computed eagerly.
Var loss_node(const Var& input, double value, Tensor grad_wrt_input);

/// Same for losses that depend on two graph inputs.
Var loss_node(const Var& a, const Var& b, double value, Tensor grad_a,
              Tensor grad_b);

}  // namespace dannet::nn
