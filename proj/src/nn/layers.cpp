#include "dannet/nn/layers.hpp"

#include <cmath>

namespace dannet::nn {

Tensor kaiming_normal(Shape shape, int fan_in, std::mt19937_64& rng, double gain) {
  Tensor t(shape);
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(gain / fan_in)));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng,
               bool with_bias)
    : weight(Var::parameter(kaiming_normal(Shape{out, in, kernel, kernel},
                                           in * kernel * kernel, rng))),
      geo{stride, pad} {
  if (with_bias) bias = Var::parameter(Tensor(Shape{out, 1, 1, 1}));
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

void Conv2d::zero_init() {
  weight.mutable_value().fill(0.0f);
  if (bias.defined()) bias.mutable_value().fill(0.0f);
}

ConvTranspose2d::ConvTranspose2d(int in, int out, int kernel, int stride, int pad,
                                 std::mt19937_64& rng)
    : weight(Var::parameter(kaiming_normal(Shape{in, out, kernel, kernel},
                                           in * kernel * kernel / (stride * stride), rng))),
      bias(Var::parameter(Tensor(Shape{out, 1, 1, 1}))),
      geo{stride, pad} {}

void ConvTranspose2d::collect(const std::string& prefix,
                              std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

BatchNorm2d::BatchNorm2d(int channels)
    : gamma(Var::parameter(Tensor(Shape{channels, 1, 1, 1}, 1.0f))),
      beta(Var::parameter(Tensor(Shape{channels, 1, 1, 1}))),
      running_mean(Shape{channels, 1, 1, 1}),
      running_var(Shape{channels, 1, 1, 1}, 1.0f) {}

Var BatchNorm2d::operator()(const Var& x) {
  return batch_norm(x, gamma, beta,
                    BatchNormState{&running_mean, &running_var, 0.1f, 1e-5f, training});
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix,
                                  std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

ResidualBlock::ResidualBlock(int channels, std::mt19937_64& rng)
    : conv1_(channels, channels, 3, 1, 1, rng, false),
      conv2_(channels, channels, 3, 1, 1, rng, false),
      bn1_(channels),
      bn2_(channels) {}

Var ResidualBlock::operator()(const Var& x) {
  Var h = relu(bn1_(conv1_(x)));
  h = bn2_(conv2_(h));
  return relu(add(h, x));
}

void ResidualBlock::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
}

void ResidualBlock::collect_buffers(const std::string& prefix,
                                    std::vector<NamedBuffer>& out) {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
}

void ResidualBlock::set_training(bool on) {
  bn1_.training = on;
  bn2_.training = on;
}

void Module::zero_grad() const {
  for (auto& p : parameters()) p.var.zero_grad();
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.value().size();
  return n;
}

}  // namespace dannet::nn
