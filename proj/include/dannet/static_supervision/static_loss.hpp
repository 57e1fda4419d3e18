#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dannet/core/config.hpp"
#include "dannet/core/loss.hpp"
#include "dannet/core/types.hpp"
#include "dannet/nn/autograd.hpp"
#include "dannet/reweight/reweight.hpp"

namespace dannet::static_supervision {

/// Day-derived supervision for the paired night image. `slots` holds indices
/// into the static-category list (0..Ks-1) or the ignore index; it is plain
/// data and never part of a gradient graph.
struct PseudoLabel {
  LabelBatch slots;
  std::vector<int> static_classes;
  int ignore_index = kIgnoreIndex;

  /// Same labels expressed as global class ids.
  LabelBatch to_class_ids() const;
};

/// Re-weighted argmax of the day prediction over the static channels only.
/// Pixels with valid[i] == 0 (crop padding) become ignore.
PseudoLabel make_pseudo_label(const LikelihoodMap& p_day, const reweight::ClassWeights& w,
                              const LabelSet& labels,
                              std::span<const std::uint8_t> valid = {});

/// Channel slice of a full-K probability map to the static categories,
/// without renormalization.
template <typename T>
BasicTensor<T> restrict_static(const BasicTensor<T>& probs, const std::vector<int>& static_classes);

template <typename T>
struct LocalMatch {
  BasicTensor<T> p;           ///< B x 1 x H x W
  std::vector<int> matched;   ///< slot that attains p(i); -1 where ignored
};

/// p(i) = max over static slots c present in the 3x3 pseudo-label window around
/// i (truncated at borders) of P_S(c, i). Ties go to the smaller slot.
template <typename T>
LocalMatch<T> local_match_prob(const BasicTensor<T>& p_static, const PseudoLabel& f);

/// -1/N sum_i m(i) log max(p(i), 1e-12) with m(i) = (1 - P_S(c*(i), i))^gamma
/// (pixel modulation) or (1 - p(i))^gamma (matched modulation). Gradient is
/// w.r.t. the static probability slice.
template <typename T>
LossWithGrad<T> static_loss(const BasicTensor<T>& p_static, const PseudoLabel& f, double gamma,
                            StaticModulation modulation = StaticModulation::pixel);

/// Plain cross-entropy on the pseudo class, no window.
template <typename T>
LossWithGrad<T> static_ce_loss(const BasicTensor<T>& p_static, const PseudoLabel& f);

/// Standard focal loss on the pseudo class, no window.
template <typename T>
LossWithGrad<T> static_focal_loss(const BasicTensor<T>& p_static, const PseudoLabel& f,
                                  double gamma);

/// Graph version dispatching on the configured variant; `none` is not valid here.
nn::Var static_loss(const nn::Var& p_static, const PseudoLabel& f, StaticLossKind kind,
                    double gamma, StaticModulation modulation);

}  // namespace dannet::static_supervision
