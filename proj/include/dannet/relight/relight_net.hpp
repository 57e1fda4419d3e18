#pragma once

#include <array>
#include <random>

#include "dannet/core/types.hpp"
#include "dannet/nn/layers.hpp"

namespace dannet::relight {

/// Residual image-to-image network shared by all three domains.
///
/// Layout for base width w: conv 3->w (s1), w->2w (s2), 2w->4w (s2),
/// 4w->4w (s1), each with BN+ReLU; three 4w residual blocks; transposed convs
/// 4w->2w->w (s2, BN+ReLU); a final 3x3 conv w->3 whose output is added to the
/// input. The final conv starts at zero so a fresh network is the identity.
class RelightNet : public nn::Module {
 public:
  static constexpr int kMinSize = 8;

  RelightNet(int width, std::mt19937_64& rng, bool zero_residual = true);

  /// R = I + residual(I); not clamped.
  nn::Var forward(const nn::Var& image);

  std::vector<nn::NamedParam> parameters() const override;
  std::vector<nn::NamedBuffer> buffers() override;
  void set_training(bool on) override;

  int width() const { return width_; }

 private:
  int width_;
  std::array<nn::Conv2d, 4> enc_;
  std::array<nn::BatchNorm2d, 4> enc_bn_;
  std::array<nn::ResidualBlock, 3> res_;
  std::array<nn::ConvTranspose2d, 2> dec_;
  std::array<nn::BatchNorm2d, 2> dec_bn_;
  nn::Conv2d out_;
};

/// Inference-only forward; the result keeps the input's domain tag.
ImageBatch relight_forward(RelightNet& net, const ImageBatch& images);

/// Clamps to [0,1] for export.
Tensor clamp_unit(const Tensor& t);

}  // namespace dannet::relight
