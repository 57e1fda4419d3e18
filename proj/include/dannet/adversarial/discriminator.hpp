#pragma once

#include <array>
#include <random>

#include "dannet/core/loss.hpp"
#include "dannet/core/types.hpp"
#include "dannet/nn/layers.hpp"

namespace dannet::adversarial {

/// Fully convolutional output-space discriminator: five 4x4 convs with
/// channels {w, 2w, 4w, 4w, 1} (w = 64 in the reference setting), strides
/// {2, 2, 1, 1, 1}, padding 1 and leaky ReLU (slope 0.2) between layers.
class Discriminator : public nn::Module {
 public:
  static constexpr float kLeakySlope = 0.2f;

  Discriminator(int in_channels, int width, std::mt19937_64& rng);

  nn::Var forward(const nn::Var& probs) const;

  std::vector<nn::NamedParam> parameters() const override;
  void set_training(bool) override {}

  /// Renames parameters under a distinct prefix (e.g. "disc_d").
  void set_name(std::string name) { name_ = std::move(name); }
  int in_channels() const { return in_channels_; }

  /// Output side length for a square input of side `in`.
  static int output_size(int in);

 private:
  int in_channels_;
  std::string name_ = "disc";
  std::array<nn::Conv2d, 5> layers_;
};

Tensor disc_forward(const Discriminator& d, const LikelihoodMap& p);

/// mean((d_day - r)^2) + mean((d_night - r)^2); gradients w.r.t. both grids.
template <typename T>
struct PairLoss {
  double value = 0;
  BasicTensor<T> grad_a;
  BasicTensor<T> grad_b;
};

template <typename T>
PairLoss<T> gen_adv_loss(const BasicTensor<T>& d_day, const BasicTensor<T>& d_night, double r);

/// 1/2 mean((d_src - r)^2) + 1/2 mean((d_tgt - f)^2).
template <typename T>
PairLoss<T> disc_loss(const BasicTensor<T>& d_src, const BasicTensor<T>& d_tgt, double r,
                      double f);

nn::Var gen_adv_loss(const nn::Var& d_day, const nn::Var& d_night, double r);
nn::Var disc_loss(const nn::Var& d_src, const nn::Var& d_tgt, double r, double f);

}  // namespace dannet::adversarial
