#include "dannet/reweight/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace dannet::reweight {

ClassWeights ClassWeights::uniform(int k, double value) {
  return ClassWeights{std::vector<double>(k, value), 0.0, value};
}

std::vector<double> raw_class_weights(std::span<const double> proportions) {
  if (proportions.empty()) throw ShapeError("raw_class_weights: empty proportion vector");
  double total = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    if (!(proportions[k] > 0)) {
      throw DegenerateInputError("raw_class_weights: category " + std::to_string(k) +
                                 " has proportion <= 0");
    }
    total += proportions[k];
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw DegenerateInputError("raw_class_weights: proportions sum to " + std::to_string(total));
  }
  std::vector<double> out(proportions.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = -std::log(proportions[k]);
  return out;
}

ClassWeights normalize_weights(std::span<const double> raw, double std, double avg) {
  if (!(std > 0)) throw ConfigError("normalize_weights: std must be positive");
  const double n = static_cast<double>(raw.size());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double var = 0;
  for (double v : raw) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / n);
  ClassWeights out{std::vector<double>(raw.size(), avg), std, avg};
  // rounding in the mean can leave a tiny nonzero sigma for constant input
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (raw.empty() || *lo == *hi || sigma == 0) return out;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    out.w[k] = (raw[k] - mean) / sigma * std + avg;
  }
  return out;
}

std::vector<double> floor_absent(std::span<const double> proportions, double floor) {
  std::vector<double> out(proportions.begin(), proportions.end());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k] <= 0) {
      spdlog::warn("category {} absent from the source split; proportion floored to {}", k, floor);
      out[k] = floor;
    }
  }
  return out;
}

LabelBatch reweighted_argmax(const LikelihoodMap& p, const ClassWeights& w) {
  const Shape s = p.data.shape();
  if (w.size() != s.c) throw ShapeError("reweighted_argmax: weight count differs from channels");
  LabelBatch out(s.n, s.h, s.w, 0);
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    const float* v = p.data.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      double best_score = w.w[0] * v[i];
      for (int k = 1; k < s.c; ++k) {
        const double score = w.w[k] * v[k * plane + i];
        if (score > best_score) {
          best_score = score;
          best = k;
        }
      }
      out.data[b * plane + i] = best;
    }
  }
  return out;
}

ClassWeights eval_weights(std::span<const double> raw, double std, double avg) {
  if (std <= 0) return ClassWeights::uniform(static_cast<int>(raw.size()), avg > 0 ? avg : 1.0);
  return normalize_weights(raw, std, avg);
}

}  // namespace dannet::reweight
