#pragma once

#include "dannet/core/loss.hpp"
#include "dannet/core/types.hpp"
#include "dannet/nn/autograd.hpp"

namespace dannet::relight {

struct LightWeights {
  double tv = 10.0;
  double exp = 1.0;
  double ssim = 1.0;
};

struct LightLossTerms {
  double l_tv = 0;
  double l_exp = 0;
  double l_ssim = 0;
  double l_light = 0;
};

LightLossTerms combine(double l_tv, double l_exp, double l_ssim, LightWeights alpha);

/// Mean squared forward difference of (I - R) along x and y, summed over both
/// directions and normalized by the element count of I. Gradient is w.r.t. R.
template <typename T>
LossWithGrad<T> tv_loss(const BasicTensor<T>& input, const BasicTensor<T>& relit);

/// Mean absolute deviation of non-overlapping `pool` x `pool` channel means of
/// R from the target exposure E.
template <typename T>
LossWithGrad<T> exposure_loss(const BasicTensor<T>& relit, double target, int pool = 32);

/// Half the mean of (1 - SSIM) over all valid 3x3 windows and channels.
template <typename T>
LossWithGrad<T> ssim_loss(const BasicTensor<T>& input, const BasicTensor<T>& relit);

template <typename T>
struct LightLossResult {
  LightLossTerms terms;
  BasicTensor<T> grad;
};

template <typename T>
LightLossResult<T> light_loss(const BasicTensor<T>& input, const BasicTensor<T>& relit,
                              double target, LightWeights alpha = {});

/// Graph version: returns l_light as a scalar node differentiable through R.
nn::Var light_loss(const Tensor& input, const nn::Var& relit, double target,
                   LightWeights alpha, LightLossTerms* terms);

/// Mean intensity over every pixel and channel: the per-iteration exposure
/// target taken from the night batch.
double mean_intensity(const Tensor& images);

}  // namespace dannet::relight
