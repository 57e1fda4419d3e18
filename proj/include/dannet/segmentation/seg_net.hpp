#pragma once

#include <array>
#include <random>

#include "dannet/core/types.hpp"
#include "dannet/nn/layers.hpp"

namespace dannet::segmentation {

/// Anything mapping B x 3 x H x W images to B x K x H x W logits. Larger
/// backbones plug in by implementing this interface.
class SegModel : public nn::Module {
 public:
  virtual nn::Var forward(const nn::Var& images) = 0;
  virtual int num_classes() const = 0;
};

/// Desk-scale backbone: five 3x3 conv+BN+ReLU layers (two stride 2), three
/// residual blocks at 1/4 resolution, a 1x1 classifier and bilinear upsampling
/// back to the input size.
class SmallSegNet : public SegModel {
 public:
  SmallSegNet(int num_classes, int width, std::mt19937_64& rng);

  nn::Var forward(const nn::Var& images) override;
  int num_classes() const override { return num_classes_; }

  std::vector<nn::NamedParam> parameters() const override;
  std::vector<nn::NamedBuffer> buffers() override;
  void set_training(bool on) override;

 private:
  int num_classes_;
  std::array<nn::Conv2d, 5> enc_;
  std::array<nn::BatchNorm2d, 5> enc_bn_;
  std::array<nn::ResidualBlock, 3> res_;
  nn::Conv2d classifier_;
};

/// Inference-only forward returning logits.
LikelihoodMap seg_forward(SegModel& net, const ImageBatch& images);

/// Softmax view of a logit map.
LikelihoodMap to_probabilities(const LikelihoodMap& logits);

}  // namespace dannet::segmentation
