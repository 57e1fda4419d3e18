#include "dannet/segmentation/seg_net.hpp"

namespace dannet::segmentation {

SmallSegNet::SmallSegNet(int num_classes, int width, std::mt19937_64& rng)
    : num_classes_(num_classes),
      enc_{nn::Conv2d(3, width, 3, 1, 1, rng, false),
           nn::Conv2d(width, 2 * width, 3, 2, 1, rng, false),
           nn::Conv2d(2 * width, 2 * width, 3, 1, 1, rng, false),
           nn::Conv2d(2 * width, 4 * width, 3, 2, 1, rng, false),
           nn::Conv2d(4 * width, 4 * width, 3, 1, 1, rng, false)},
      enc_bn_{nn::BatchNorm2d(width), nn::BatchNorm2d(2 * width),
              nn::BatchNorm2d(2 * width), nn::BatchNorm2d(4 * width),
              nn::BatchNorm2d(4 * width)},
      res_{nn::ResidualBlock(4 * width, rng), nn::ResidualBlock(4 * width, rng),
           nn::ResidualBlock(4 * width, rng)},
      classifier_(4 * width, num_classes, 1, 1, 0, rng) {
  if (num_classes < 2) throw ShapeError("segmentation: need at least two classes");
}

nn::Var SmallSegNet::forward(const nn::Var& images) {
  const Shape s = images.shape();
  if (s.c != 3) throw ShapeError("segmentation: expected 3 channels, got " + std::to_string(s.c));
  if (s.h < 4 || s.w < 4) throw ShapeError("segmentation: input smaller than 4x4");
  nn::Var h = images;
  for (std::size_t i = 0; i < enc_.size(); ++i) h = nn::relu(enc_bn_[i](enc_[i](h)));
  for (auto& block : res_) h = block(h);
  return nn::upsample_bilinear(classifier_(h), s.h, s.w);
}

std::vector<nn::NamedParam> SmallSegNet::parameters() const {
  std::vector<nn::NamedParam> out;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    enc_[i].collect("seg.enc" + std::to_string(i), out);
    enc_bn_[i].collect("seg.enc_bn" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < res_.size(); ++i) res_[i].collect("seg.res" + std::to_string(i), out);
  classifier_.collect("seg.classifier", out);
  return out;
}

std::vector<nn::NamedBuffer> SmallSegNet::buffers() {
  std::vector<nn::NamedBuffer> out;
  for (std::size_t i = 0; i < enc_bn_.size(); ++i) enc_bn_[i].collect_buffers("seg.enc_bn" + std::to_string(i), out);
  for (std::size_t i = 0; i < res_.size(); ++i) res_[i].collect_buffers("seg.res" + std::to_string(i), out);
  return out;
}

void SmallSegNet::set_training(bool on) {
  for (auto& bn : enc_bn_) bn.training = on;
  for (auto& block : res_) block.set_training(on);
}

LikelihoodMap seg_forward(SegModel& net, const ImageBatch& images) {
  nn::Var logits = net.forward(nn::Var::constant(images.data));
  return LikelihoodMap{logits.value(), MapKind::logits};
}

LikelihoodMap to_probabilities(const LikelihoodMap& logits) {
  if (logits.kind == MapKind::probabilities) return logits;
  return LikelihoodMap{softmax_channels(logits.data), MapKind::probabilities};
}

}  // namespace dannet::segmentation
