#pragma once

#include <random>
#include <string>
#include <vector>

#include "dannet/nn/ops.hpp"

namespace dannet::nn {

struct NamedParam {
  std::string name;
  Var var;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Zero-mean normal init with std sqrt(gain / fan_in).
Tensor kaiming_normal(Shape shape, int fan_in, std::mt19937_64& rng,
                      double gain = 2.0);

class Conv2d {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng,
         bool with_bias = true);

  Var operator()(const Var& x) const { return conv2d(x, weight, bias, geo); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
  void zero_init();

  Var weight;
  Var bias;
  ConvGeometry geo;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d(int in, int out, int kernel, int stride, int pad,
                  std::mt19937_64& rng);

  Var operator()(const Var& x) const {
    return conv_transpose2d(x, weight, bias, geo);
  }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;

  Var weight;
  Var bias;
  ConvGeometry geo;
};

class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels);

  Var operator()(const Var& x);
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out);

  Var gamma;
  Var beta;
  Tensor running_mean;
  Tensor running_var;
  bool training = true;
};

/// conv-BN-ReLU-conv-BN plus identity skip, then ReLU.
class ResidualBlock {
 public:
  ResidualBlock(int channels, std::mt19937_64& rng);

  Var operator()(const Var& x);
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out);
  void set_training(bool on);

 private:
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
};

/// Common surface of trainable networks: named parameters and buffers for
/// checkpointing and optimizers, plus a train/eval switch.
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  virtual std::vector<NamedParam> parameters() const = 0;
  virtual std::vector<NamedBuffer> buffers() { return {}; }
  virtual void set_training(bool on) = 0;

  void zero_grad() const;
  std::size_t parameter_count() const;
};

}  // namespace dannet::nn
