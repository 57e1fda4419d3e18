#pragma once

#include <span>
#include <vector>

#include "dannet/core/types.hpp"

namespace dannet::reweight {

/// Normalized per-class multipliers applied to probability channels.
struct ClassWeights {
  std::vector<double> w;
  double std_used = 0;
  double avg_used = 0;

  int size() const { return static_cast<int>(w.size()); }
  static ClassWeights uniform(int k, double value = 1.0);
};

/// w'_k = -log(a_k). Requires every proportion positive and a summing to 1.
std::vector<double> raw_class_weights(std::span<const double> proportions);

/// z-scores w' with its population std, then rescales to the requested std and
/// mean. A constant w' maps to avg everywhere.
ClassWeights normalize_weights(std::span<const double> raw, double std, double avg);

/// Floors proportions of classes absent from the whole source split at 1e-8
/// (logging a warning) so -log stays finite.
std::vector<double> floor_absent(std::span<const double> proportions, double floor = 1e-8);

/// F(i) = argmax_k w_k P(k, i); ties resolve to the smallest class index.
LabelBatch reweighted_argmax(const LikelihoodMap& p, const ClassWeights& w);

/// Weights used at evaluation time; std <= 0 disables re-weighting.
ClassWeights eval_weights(std::span<const double> raw, double std, double avg);

}  // namespace dannet::reweight
