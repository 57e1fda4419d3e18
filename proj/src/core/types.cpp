#include "dannet/core/types.hpp"

#include <algorithm>
#include <cmath>

namespace dannet {

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::source: return "source";
    case Domain::target_day: return "target_day";
    case Domain::target_night: return "target_night";
  }
  return "?";
}

LabelSet::LabelSet(std::vector<std::string> names, std::vector<bool> static_mask,
                   int ignore_index)
    : names_(std::move(names)),
      static_mask_(std::move(static_mask)),
      ignore_index_(ignore_index) {
  const int k = static_cast<int>(names_.size());
  if (k < 2) throw ShapeError("label set needs at least two categories");
  if (static_mask_.size() != names_.size()) {
    throw ShapeError("static mask length differs from category count");
  }
  if (ignore_index_ >= 0 && ignore_index_ < k) {
    throw ShapeError("ignore index collides with a category id");
  }
  for (int i = 0; i < k; ++i) {
    if (static_mask_[i]) static_classes_.push_back(i);
  }
}

LabelSet LabelSet::cityscapes() {
  std::vector<std::string> names = {
      "road",  "sidewalk",   "building", "wall",  "fence",
      "pole",  "traffic light", "traffic sign", "vegetation", "terrain",
      "sky",   "person",     "rider",    "car",   "truck",
      "bus",   "train",      "motorcycle", "bicycle"};
  std::vector<bool> is_static(names.size(), false);
  for (int k : {0, 1, 3, 4, 5, 6, 7, 8, 9, 10}) is_static[k] = true;
  return LabelSet(std::move(names), std::move(is_static));
}

LabelSet LabelSet::synthetic() {
  std::vector<std::string> names = {"road", "sidewalk", "building", "vegetation",
                                    "sky",  "car",      "pole"};
  // Day/night pairs share one label map, so every structure except the car
  // keeps its place between the two renderings.
  std::vector<bool> is_static = {true, true, true, true, true, false, true};
  return LabelSet(std::move(names), std::move(is_static));
}

LabelSet LabelSet::by_name(std::string_view name) {
  if (name == "cityscapes") return cityscapes();
  if (name == "synthetic") return synthetic();
  throw ConfigError("taxonomy: unknown label set '" + std::string(name) + "'");
}

int LabelSet::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits) {
  const Shape s = logits.shape();
  BasicTensor<T> out(s);
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    const T* in = logits.plane(b, 0);
    T* dst = out.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = in[i];
      for (int k = 1; k < s.c; ++k) mx = std::max(mx, in[k * plane + i]);
      T sum = 0;
      for (int k = 0; k < s.c; ++k) {
        const T e = std::exp(in[k * plane + i] - mx);
        dst[k * plane + i] = e;
        sum += e;
      }
      for (int k = 0; k < s.c; ++k) dst[k * plane + i] /= sum;
    }
  }
  return out;
}

template BasicTensor<float> softmax_channels(const BasicTensor<float>&);
template BasicTensor<double> softmax_channels(const BasicTensor<double>&);

bool is_probability_map(const Tensor& p, double tol) {
  const Shape s = p.shape();
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    const float* v = p.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      double sum = 0;
      for (int k = 0; k < s.c; ++k) {
        if (v[k * plane + i] < 0) return false;
        sum += v[k * plane + i];
      }
      if (std::abs(sum - 1.0) > tol) return false;
    }
  }
  return true;
}

}  // namespace dannet
