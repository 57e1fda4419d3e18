#include "dannet/static_supervision/static_loss.hpp"

#include <algorithm>
#include <cmath>

#include "dannet/nn/ops.hpp"

namespace dannet::static_supervision {
namespace {

constexpr double kProbFloor = 1e-12;

void check_aligned(const Shape& s, const PseudoLabel& f) {
  if (f.slots.n != s.n || f.slots.h != s.h || f.slots.w != s.w) {
    throw ShapeError("static supervision: pseudo label does not match prediction " + s.str());
  }
  if (static_cast<int>(f.static_classes.size()) != s.c) {
    throw ShapeError("static supervision: prediction is not restricted to the static channels");
  }
}

// d/dq of (1 - q)^gamma.
double modulation_slope(double q, double gamma) {
  if (gamma == 0) return 0;
  const double base = 1.0 - q;
  if (base <= 0) return 0;
  return -gamma * std::pow(base, gamma - 1.0);
}

}  // namespace

LabelBatch PseudoLabel::to_class_ids() const {
  LabelBatch out = slots;
  for (auto& v : out.data) {
    if (v != ignore_index) v = static_classes[v];
  }
  return out;
}

PseudoLabel make_pseudo_label(const LikelihoodMap& p_day, const reweight::ClassWeights& w,
                              const LabelSet& labels, std::span<const std::uint8_t> valid) {
  const Shape s = p_day.data.shape();
  if (s.c != labels.size() || w.size() != labels.size()) {
    throw ShapeError("make_pseudo_label: prediction, weights and label set disagree on K");
  }
  const auto& statics = labels.static_classes();
  if (statics.empty()) throw ShapeError("make_pseudo_label: label set has no static category");
  if (!valid.empty() && valid.size() != static_cast<std::size_t>(s.n) * s.plane()) {
    throw ShapeError("make_pseudo_label: validity mask size mismatch");
  }
  PseudoLabel out{LabelBatch(s.n, s.h, s.w, labels.ignore_index()), statics,
                  labels.ignore_index()};
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    const float* v = p_day.data.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = b * plane + i;
      if (!valid.empty() && !valid[idx]) continue;
      int best = 0;
      double best_score = w.w[statics[0]] * v[statics[0] * plane + i];
      for (std::size_t j = 1; j < statics.size(); ++j) {
        const double score = w.w[statics[j]] * v[statics[j] * plane + i];
        if (score > best_score) {
          best_score = score;
          best = static_cast<int>(j);
        }
      }
      out.slots.data[idx] = best;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> restrict_static(const BasicTensor<T>& probs, const std::vector<int>& static_classes) {
  const Shape s = probs.shape();
  BasicTensor<T> out(Shape{s.n, static_cast<int>(static_classes.size()), s.h, s.w});
  for (int b = 0; b < s.n; ++b) {
    for (std::size_t j = 0; j < static_classes.size(); ++j) {
      std::copy_n(probs.plane(b, static_classes[j]), s.plane(),
                  out.plane(b, static_cast<int>(j)));
    }
  }
  return out;
}

template <typename T>
LocalMatch<T> local_match_prob(const BasicTensor<T>& p_static, const PseudoLabel& f) {
  const Shape s = p_static.shape();
  check_aligned(s, f);
  LocalMatch<T> out{BasicTensor<T>(Shape{s.n, 1, s.h, s.w}),
                    std::vector<int>(static_cast<std::size_t>(s.n) * s.plane(), -1)};
  const std::size_t plane = s.plane();
  std::vector<char> present(s.c);
  for (int b = 0; b < s.n; ++b) {
    const T* p = p_static.plane(b, 0);
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
        if (f.slots.at(b, y, x) == f.ignore_index) continue;
        std::fill(present.begin(), present.end(), 0);
        for (int yy = std::max(0, y - 1); yy <= std::min(s.h - 1, y + 1); ++yy) {
          for (int xx = std::max(0, x - 1); xx <= std::min(s.w - 1, x + 1); ++xx) {
            const int c = f.slots.at(b, yy, xx);
            if (c != f.ignore_index) present[c] = 1;
          }
        }
        int best = -1;
        T best_p = 0;
        for (int c = 0; c < s.c; ++c) {
          if (!present[c]) continue;
          const T v = p[c * plane + i];
          if (best < 0 || v > best_p) {
            best = c;
            best_p = v;
          }
        }
        out.p(b, 0, y, x) = best_p;
        out.matched[b * plane + i] = best;
      }
    }
  }
  return out;
}

template <typename T>
LossWithGrad<T> static_loss(const BasicTensor<T>& p_static, const PseudoLabel& f, double gamma,
                            StaticModulation modulation) {
  const Shape s = p_static.shape();
  const LocalMatch<T> m = local_match_prob(p_static, f);
  const std::size_t plane = s.plane();
  LossWithGrad<T> out{0.0, BasicTensor<T>(s)};
  double sum = 0;
  std::size_t valid = 0;
  for (int b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = b * plane + i;
      const int target = f.slots.data[idx];
      if (target == f.ignore_index) continue;
      ++valid;
      const int matched = m.matched[idx];
      const double p = m.p[idx];
      const double log_p = std::log(std::max(p, kProbFloor));
      const double dlog_dp = p > kProbFloor ? 1.0 / p : 0.0;
      const std::size_t at_matched = p_static.offset(b, matched, 0, 0) + i;
      if (modulation == StaticModulation::pixel) {
        const std::size_t at_target = p_static.offset(b, target, 0, 0) + i;
        const double q = p_static[at_target];
        const double mod = std::pow(std::max(0.0, 1.0 - q), gamma);
        sum -= mod * log_p;
        out.grad[at_target] -= static_cast<T>(modulation_slope(q, gamma) * log_p);
        out.grad[at_matched] -= static_cast<T>(mod * dlog_dp);
      } else {
        const double mod = std::pow(std::max(0.0, 1.0 - p), gamma);
        sum -= mod * log_p;
        out.grad[at_matched] -=
            static_cast<T>(modulation_slope(p, gamma) * log_p + mod * dlog_dp);
      }
    }
  }
  if (valid == 0) throw DegenerateInputError("static_loss: no pixel carries a valid pseudo label");
  for (auto& g : out.grad.values()) g = static_cast<T>(g / static_cast<double>(valid));
  out.value = sum / static_cast<double>(valid);
  return out;
}

template <typename T>
LossWithGrad<T> static_focal_loss(const BasicTensor<T>& p_static, const PseudoLabel& f,
                                  double gamma) {
  const Shape s = p_static.shape();
  check_aligned(s, f);
  const std::size_t plane = s.plane();
  LossWithGrad<T> out{0.0, BasicTensor<T>(s)};
  double sum = 0;
  std::size_t valid = 0;
  for (int b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int target = f.slots.data[b * plane + i];
      if (target == f.ignore_index) continue;
      ++valid;
      const std::size_t at = p_static.offset(b, target, 0, 0) + i;
      const double q = p_static[at];
      const double log_q = std::log(std::max(q, kProbFloor));
      const double mod = std::pow(std::max(0.0, 1.0 - q), gamma);
      sum -= mod * log_q;
      out.grad[at] = static_cast<T>(-(modulation_slope(q, gamma) * log_q +
                                      mod * (q > kProbFloor ? 1.0 / q : 0.0)));
    }
  }
  if (valid == 0) throw DegenerateInputError("static_loss: no pixel carries a valid pseudo label");
  for (auto& g : out.grad.values()) g = static_cast<T>(g / static_cast<double>(valid));
  out.value = sum / static_cast<double>(valid);
  return out;
}

template <typename T>
LossWithGrad<T> static_ce_loss(const BasicTensor<T>& p_static, const PseudoLabel& f) {
  return static_focal_loss(p_static, f, 0.0);
}

nn::Var static_loss(const nn::Var& p_static, const PseudoLabel& f, StaticLossKind kind,
                    double gamma, StaticModulation modulation) {
  LossWithGrad<float> res;
  switch (kind) {
    case StaticLossKind::windowed:
      res = static_loss(p_static.value(), f, gamma, modulation);
      break;
    case StaticLossKind::ce:
      res = static_ce_loss(p_static.value(), f);
      break;
    case StaticLossKind::focal:
      res = static_focal_loss(p_static.value(), f, gamma);
      break;
    case StaticLossKind::none:
      throw ConfigError("static_loss: variant 'none' has no loss value");
  }
  return nn::loss_node(p_static, res.value, std::move(res.grad));
}

#define DANNET_INSTANTIATE(T)                                                              \
  template BasicTensor<T> restrict_static(const BasicTensor<T>&, const std::vector<int>&); \
  template LocalMatch<T> local_match_prob(const BasicTensor<T>&, const PseudoLabel&);      \
  template LossWithGrad<T> static_loss(const BasicTensor<T>&, const PseudoLabel&, double,  \
                                       StaticModulation);                                  \
  template LossWithGrad<T> static_ce_loss(const BasicTensor<T>&, const PseudoLabel&);      \
  template LossWithGrad<T> static_focal_loss(const BasicTensor<T>&, const PseudoLabel&, double);
DANNET_INSTANTIATE(float)
DANNET_INSTANTIATE(double)
#undef DANNET_INSTANTIATE

}  // namespace dannet::static_supervision
