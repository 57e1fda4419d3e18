#include "dannet/relight/relight_net.hpp"

#include <algorithm>

namespace dannet::relight {

RelightNet::RelightNet(int width, std::mt19937_64& rng, bool zero_residual)
    : width_(width),
      enc_{nn::Conv2d(3, width, 3, 1, 1, rng, false),
           nn::Conv2d(width, 2 * width, 3, 2, 1, rng, false),
           nn::Conv2d(2 * width, 4 * width, 3, 2, 1, rng, false),
           nn::Conv2d(4 * width, 4 * width, 3, 1, 1, rng, false)},
      enc_bn_{nn::BatchNorm2d(width), nn::BatchNorm2d(2 * width),
              nn::BatchNorm2d(4 * width), nn::BatchNorm2d(4 * width)},
      res_{nn::ResidualBlock(4 * width, rng), nn::ResidualBlock(4 * width, rng),
           nn::ResidualBlock(4 * width, rng)},
      dec_{nn::ConvTranspose2d(4 * width, 2 * width, 4, 2, 1, rng),
           nn::ConvTranspose2d(2 * width, width, 4, 2, 1, rng)},
      dec_bn_{nn::BatchNorm2d(2 * width), nn::BatchNorm2d(width)},
      out_(width, 3, 3, 1, 1, rng) {
  if (zero_residual) out_.zero_init();
}

nn::Var RelightNet::forward(const nn::Var& image) {
  const Shape s = image.shape();
  if (s.c != 3) throw ShapeError("relight: expected 3 channels, got " + std::to_string(s.c));
  if (s.h < kMinSize || s.w < kMinSize || s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("relight: spatial size " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " must be a multiple of 4 and at least " +
                     std::to_string(kMinSize));
  }
  nn::Var h = image;
  for (std::size_t i = 0; i < enc_.size(); ++i) h = nn::relu(enc_bn_[i](enc_[i](h)));
  for (auto& block : res_) h = block(h);
  for (std::size_t i = 0; i < dec_.size(); ++i) h = nn::relu(dec_bn_[i](dec_[i](h)));
  return nn::add(image, out_(h));
}

std::vector<nn::NamedParam> RelightNet::parameters() const {
  std::vector<nn::NamedParam> out;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    enc_[i].collect("relight.enc" + std::to_string(i), out);
    enc_bn_[i].collect("relight.enc_bn" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < res_.size(); ++i) res_[i].collect("relight.res" + std::to_string(i), out);
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    dec_[i].collect("relight.dec" + std::to_string(i), out);
    dec_bn_[i].collect("relight.dec_bn" + std::to_string(i), out);
  }
  out_.collect("relight.out", out);
  return out;
}

std::vector<nn::NamedBuffer> RelightNet::buffers() {
  std::vector<nn::NamedBuffer> out;
  for (std::size_t i = 0; i < enc_bn_.size(); ++i) enc_bn_[i].collect_buffers("relight.enc_bn" + std::to_string(i), out);
  for (std::size_t i = 0; i < res_.size(); ++i) res_[i].collect_buffers("relight.res" + std::to_string(i), out);
  for (std::size_t i = 0; i < dec_bn_.size(); ++i) dec_bn_[i].collect_buffers("relight.dec_bn" + std::to_string(i), out);
  return out;
}

void RelightNet::set_training(bool on) {
  for (auto& bn : enc_bn_) bn.training = on;
  for (auto& block : res_) block.set_training(on);
  for (auto& bn : dec_bn_) bn.training = on;
}

ImageBatch relight_forward(RelightNet& net, const ImageBatch& images) {
  nn::Var r = net.forward(nn::Var::constant(images.data));
  return ImageBatch{r.value(), images.domain};
}

Tensor clamp_unit(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace dannet::relight
