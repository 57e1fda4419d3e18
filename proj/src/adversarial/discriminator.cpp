#include "dannet/adversarial/discriminator.hpp"

#include "dannet/nn/ops.hpp"

namespace dannet::adversarial {
namespace {

template <typename T>
LossWithGrad<T> mean_square_to(const BasicTensor<T>& x, double target, double weight) {
  LossWithGrad<T> out{0.0, BasicTensor<T>(x.shape())};
  const double n = static_cast<double>(x.size());
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - target;
    sum += d * d;
    out.grad[i] = static_cast<T>(weight * 2.0 * d / n);
  }
  out.value = weight * sum / n;
  return out;
}

}  // namespace

Discriminator::Discriminator(int in_channels, int width, std::mt19937_64& rng)
    : in_channels_(in_channels),
      layers_{nn::Conv2d(in_channels, width, 4, 2, 1, rng),
              nn::Conv2d(width, 2 * width, 4, 2, 1, rng),
              nn::Conv2d(2 * width, 4 * width, 4, 1, 1, rng),
              nn::Conv2d(4 * width, 4 * width, 4, 1, 1, rng),
              nn::Conv2d(4 * width, 1, 4, 1, 1, rng)} {}

nn::Var Discriminator::forward(const nn::Var& probs) const {
  if (probs.shape().c != in_channels_) {
    throw ShapeError("discriminator: expected " + std::to_string(in_channels_) +
                     " channels, got " + std::to_string(probs.shape().c));
  }
  nn::Var h = probs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = nn::leaky_relu(h, kLeakySlope);
  }
  return h;
}

std::vector<nn::NamedParam> Discriminator::parameters() const {
  std::vector<nn::NamedParam> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(name_ + ".conv" + std::to_string(i), out);
  }
  return out;
}

int Discriminator::output_size(int in) {
  int s = in;
  for (int stride : {2, 2, 1, 1, 1}) s = nn::conv_out_size(s, 4, stride, 1);
  return s;
}

Tensor disc_forward(const Discriminator& d, const LikelihoodMap& p) {
  return d.forward(nn::Var::constant(p.data)).value();
}

template <typename T>
PairLoss<T> gen_adv_loss(const BasicTensor<T>& d_day, const BasicTensor<T>& d_night, double r) {
  auto a = mean_square_to(d_day, r, 1.0);
  auto b = mean_square_to(d_night, r, 1.0);
  return {a.value + b.value, std::move(a.grad), std::move(b.grad)};
}

template <typename T>
PairLoss<T> disc_loss(const BasicTensor<T>& d_src, const BasicTensor<T>& d_tgt, double r,
                      double f) {
  auto a = mean_square_to(d_src, r, 0.5);
  auto b = mean_square_to(d_tgt, f, 0.5);
  return {a.value + b.value, std::move(a.grad), std::move(b.grad)};
}

nn::Var gen_adv_loss(const nn::Var& d_day, const nn::Var& d_night, double r) {
  auto res = gen_adv_loss(d_day.value(), d_night.value(), r);
  return nn::loss_node(d_day, d_night, res.value, std::move(res.grad_a), std::move(res.grad_b));
}

nn::Var disc_loss(const nn::Var& d_src, const nn::Var& d_tgt, double r, double f) {
  auto res = disc_loss(d_src.value(), d_tgt.value(), r, f);
  return nn::loss_node(d_src, d_tgt, res.value, std::move(res.grad_a), std::move(res.grad_b));
}

template PairLoss<float> gen_adv_loss(const BasicTensor<float>&, const BasicTensor<float>&, double);
template PairLoss<double> gen_adv_loss(const BasicTensor<double>&, const BasicTensor<double>&, double);
template PairLoss<float> disc_loss(const BasicTensor<float>&, const BasicTensor<float>&, double, double);
template PairLoss<double> disc_loss(const BasicTensor<double>&, const BasicTensor<double>&, double, double);

}  // namespace dannet::adversarial
