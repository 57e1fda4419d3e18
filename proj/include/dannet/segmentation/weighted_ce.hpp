#pragma once

#include <span>

#include "dannet/core/loss.hpp"
#include "dannet/core/types.hpp"
#include "dannet/nn/autograd.hpp"

namespace dannet::segmentation {

/// Class-weighted cross-entropy, normalized by (valid pixels x K):
///   -1/(N K) * sum_i w[gt(i)] * log P[gt(i), i]
/// computed through a max-subtracted log-softmax. Gradient is w.r.t. the
/// logits. Throws DegenerateInputError when every pixel is ignored.
template <typename T>
LossWithGrad<T> weighted_ce_logits(const BasicTensor<T>& logits, const LabelBatch& gt,
                                   std::span<const double> weights,
                                   int ignore_index = kIgnoreIndex);

/// Same loss on a probability map, with a 1e-12 floor inside the log.
/// Gradient is w.r.t. the probabilities.
template <typename T>
LossWithGrad<T> weighted_ce_probs(const BasicTensor<T>& probs, const LabelBatch& gt,
                                  std::span<const double> weights,
                                  int ignore_index = kIgnoreIndex);

double weighted_ce(const LikelihoodMap& p, const LabelBatch& gt,
                   std::span<const double> weights, int ignore_index = kIgnoreIndex);

nn::Var weighted_ce(const nn::Var& logits, const LabelBatch& gt,
                    std::span<const double> weights, int ignore_index = kIgnoreIndex);

}  // namespace dannet::segmentation
