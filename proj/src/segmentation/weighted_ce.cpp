#include "dannet/segmentation/weighted_ce.hpp"

#include <algorithm>
#include <cmath>

#include "dannet/nn/ops.hpp"

namespace dannet::segmentation {
namespace {

void check_inputs(const Shape& s, const LabelBatch& gt, std::size_t n_weights) {
  if (gt.n != s.n || gt.h != s.h || gt.w != s.w) {
    throw ShapeError("weighted_ce: label grid does not match prediction " + s.str());
  }
  if (n_weights != static_cast<std::size_t>(s.c)) {
    throw ShapeError("weighted_ce: weight vector length differs from class count");
  }
}

}  // namespace

template <typename T>
LossWithGrad<T> weighted_ce_logits(const BasicTensor<T>& logits, const LabelBatch& gt,
                                   std::span<const double> weights, int ignore_index) {
  const Shape s = logits.shape();
  check_inputs(s, gt, weights.size());
  const std::size_t plane = s.plane();
  LossWithGrad<T> out{0.0, BasicTensor<T>(s)};
  double sum = 0;
  std::size_t valid = 0;
  std::vector<double> prob(s.c);
  for (int b = 0; b < s.n; ++b) {
    const T* z = logits.plane(b, 0);
    T* g = out.grad.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const int label = gt.data[b * plane + i];
      if (label == ignore_index) continue;
      if (label < 0 || label >= s.c) throw ShapeError("weighted_ce: label out of range");
      ++valid;
      double mx = z[i];
      for (int k = 1; k < s.c; ++k) mx = std::max(mx, static_cast<double>(z[k * plane + i]));
      double denom = 0;
      for (int k = 0; k < s.c; ++k) {
        prob[k] = std::exp(z[k * plane + i] - mx);
        denom += prob[k];
      }
      const double log_p = (z[label * plane + i] - mx) - std::log(denom);
      const double w = weights[label];
      sum -= w * log_p;
      for (int k = 0; k < s.c; ++k) {
        const double p = prob[k] / denom;
        g[k * plane + i] = static_cast<T>(w * (p - (k == label ? 1.0 : 0.0)));
      }
    }
  }
  if (valid == 0) throw DegenerateInputError("weighted_ce: every pixel is ignored");
  const double norm = static_cast<double>(valid) * s.c;
  for (auto& v : out.grad.values()) v = static_cast<T>(v / norm);
  out.value = sum / norm;
  return out;
}

template <typename T>
LossWithGrad<T> weighted_ce_probs(const BasicTensor<T>& probs, const LabelBatch& gt,
                                  std::span<const double> weights, int ignore_index) {
  const Shape s = probs.shape();
  check_inputs(s, gt, weights.size());
  const std::size_t plane = s.plane();
  LossWithGrad<T> out{0.0, BasicTensor<T>(s)};
  double sum = 0;
  std::size_t valid = 0;
  std::vector<std::pair<std::size_t, double>> touched;
  for (int b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int label = gt.data[b * plane + i];
      if (label == ignore_index) continue;
      if (label < 0 || label >= s.c) throw ShapeError("weighted_ce: label out of range");
      ++valid;
      const std::size_t idx = probs.offset(b, label, 0, 0) + i;
      const double p = probs[idx];
      sum -= weights[label] * std::log(std::max(p, 1e-12));
      if (p > 1e-12) touched.emplace_back(idx, -weights[label] / p);
    }
  }
  if (valid == 0) throw DegenerateInputError("weighted_ce: every pixel is ignored");
  const double norm = static_cast<double>(valid) * s.c;
  for (const auto& [idx, g] : touched) out.grad[idx] = static_cast<T>(g / norm);
  out.value = sum / norm;
  return out;
}

double weighted_ce(const LikelihoodMap& p, const LabelBatch& gt,
                   std::span<const double> weights, int ignore_index) {
  if (p.kind == MapKind::logits) {
    return weighted_ce_logits(p.data, gt, weights, ignore_index).value;
  }
  return weighted_ce_probs(p.data, gt, weights, ignore_index).value;
}

nn::Var weighted_ce(const nn::Var& logits, const LabelBatch& gt,
                    std::span<const double> weights, int ignore_index) {
  auto res = weighted_ce_logits(logits.value(), gt, weights, ignore_index);
  return nn::loss_node(logits, res.value, std::move(res.grad));
}

template LossWithGrad<float> weighted_ce_logits(const BasicTensor<float>&, const LabelBatch&,
                                                std::span<const double>, int);
template LossWithGrad<double> weighted_ce_logits(const BasicTensor<double>&, const LabelBatch&,
                                                 std::span<const double>, int);
template LossWithGrad<float> weighted_ce_probs(const BasicTensor<float>&, const LabelBatch&,
                                               std::span<const double>, int);
template LossWithGrad<double> weighted_ce_probs(const BasicTensor<double>&, const LabelBatch&,
                                                std::span<const double>, int);

}  // namespace dannet::segmentation
