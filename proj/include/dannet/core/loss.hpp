#pragma once

#include "dannet/core/tensor.hpp"

namespace dannet {

/// A scalar loss together with its gradient w.r.t. the differentiated input.
template <typename T>
struct LossWithGrad {
  double value = 0;
  BasicTensor<T> grad;
};

}  // namespace dannet
