#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dannet/core/tensor.hpp"

namespace dannet {

inline constexpr int kIgnoreIndex = 255;

enum class Domain { source, target_day, target_night };

std::string_view to_string(Domain d);

/// Ordered category taxonomy with the static-object designation used by the
/// pseudo supervision.
class LabelSet {
 public:
  LabelSet(std::vector<std::string> names, std::vector<bool> static_mask,
           int ignore_index = kIgnoreIndex);

  /// The 19 Cityscapes train categories; 10 of them are static.
  static LabelSet cityscapes();
  /// Seven-category taxonomy used by the synthetic scene generator.
  static LabelSet synthetic();
  /// Resolves "cityscapes" or "synthetic".
  static LabelSet by_name(std::string_view name);

  int size() const { return static_cast<int>(names_.size()); }
  int ignore_index() const { return ignore_index_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int k) const { return names_.at(k); }
  bool is_static(int k) const { return static_mask_.at(k); }
  const std::vector<bool>& static_mask() const { return static_mask_; }
  /// Global class ids of the static categories, ascending.
  const std::vector<int>& static_classes() const { return static_classes_; }
  int index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::vector<bool> static_mask_;
  std::vector<int> static_classes_;
  int ignore_index_;
};

/// Images in [0,1], B x 3 x H x W.
struct ImageBatch {
  Tensor data;
  Domain domain = Domain::source;
};

/// Integer class map, B x H x W, values in [0,K) or the ignore index.
struct LabelBatch {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::int32_t> data;

  LabelBatch() = default;
  LabelBatch(int n_, int h_, int w_, std::int32_t fill = kIgnoreIndex)
      : n(n_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::int32_t& at(int b, int y, int x) {
    return data[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  std::int32_t at(int b, int y, int x) const {
    return data[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  bool operator==(const LabelBatch&) const = default;
};

enum class MapKind { logits, probabilities };

struct LikelihoodMap {
  Tensor data;
  MapKind kind = MapKind::logits;
};

/// Channel-wise softmax with max subtraction.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits);

/// Checks the probability-map invariant (non-negative, sums to 1 +- tol).
bool is_probability_map(const Tensor& p, double tol = 1e-5);

}  // namespace dannet
