#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dannet/nn/layers.hpp"

namespace dannet::nn {

/// SGD with classical momentum and optional L2 weight decay on selected
/// parameters: buf = momentum * buf + (g + wd * w); w -= lr * buf.
class Sgd {
 public:
  /// Parameters whose name ends in ".weight" receive weight decay.
  Sgd(std::vector<NamedParam> params, double momentum, double weight_decay);

  void step(double lr);
  void zero_grad();
  std::vector<NamedBuffer> state();
  const std::vector<NamedParam>& params() const { return params_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> momentum_buf_;
  std::vector<bool> decay_;
  double momentum_;
  double weight_decay_;
};

class Adam {
 public:
  Adam(std::vector<NamedParam> params, double beta1, double beta2, double eps = 1e-8);

  void step(double lr);
  void zero_grad();
  std::vector<NamedBuffer> state();
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace dannet::nn
