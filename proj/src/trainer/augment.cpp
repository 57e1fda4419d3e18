#include "dannet/trainer/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dannet/core/error.hpp"

namespace dannet::trainer {

CropGeometry draw_geometry(int h, int w, int crop, std::pair<double, double> scale_range,
                           bool allow_flip, std::mt19937_64& rng) {
  if (crop <= 0 || crop % 32 != 0) throw ConfigError("augment: crop not divisible by 32");
  if (!(scale_range.first > 0 && scale_range.first <= scale_range.second &&
        scale_range.second <= 2)) {
    throw ConfigError("augment: scale range must satisfy 0 < min <= max <= 2");
  }
  CropGeometry g;
  g.crop = crop;
  g.scale = std::uniform_real_distribution<double>(scale_range.first, scale_range.second)(rng);
  g.scaled_h = std::max(1, static_cast<int>(std::lround(h * g.scale)));
  g.scaled_w = std::max(1, static_cast<int>(std::lround(w * g.scale)));
  auto offset = [&](int extent) {
    const int slack = extent - crop;
    return std::uniform_int_distribution<int>(std::min(0, slack), std::max(0, slack))(rng);
  };
  g.off_y = offset(g.scaled_h);
  g.off_x = offset(g.scaled_w);
  g.flip = allow_flip && std::bernoulli_distribution(0.5)(rng);
  return g;
}

Augmented apply_geometry(const Tensor& image, const LabelBatch* label, const CropGeometry& g) {
  const Shape s = image.shape();
  if (s.n != 1) throw ShapeError("augment: expects a single image");
  if (label && (label->h != s.h || label->w != s.w)) {
    throw ShapeError("augment: label size differs from image");
  }
  const int crop = g.crop;
  Augmented out{Tensor(Shape{1, s.c, crop, crop}),
                label ? LabelBatch(1, crop, crop) : LabelBatch(),
                std::vector<std::uint8_t>(static_cast<std::size_t>(crop) * crop, 0)};
  const double sy = static_cast<double>(s.h) / g.scaled_h;
  const double sx = static_cast<double>(s.w) / g.scaled_w;
  for (int y = 0; y < crop; ++y) {
    const int ry = y + g.off_y;
    if (ry < 0 || ry >= g.scaled_h) continue;
    // half-pixel centres
    const double fy = std::clamp((ry + 0.5) * sy - 0.5, 0.0, s.h - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, s.h - 1);
    const double wy = fy - y0;
    const int ny = std::clamp(static_cast<int>((ry + 0.5) * sy), 0, s.h - 1);
    for (int x = 0; x < crop; ++x) {
      const int rx = x + g.off_x;
      if (rx < 0 || rx >= g.scaled_w) continue;
      const int ox = g.flip ? crop - 1 - x : x;
      const double fx = std::clamp((rx + 0.5) * sx - 0.5, 0.0, s.w - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, s.w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < s.c; ++c) {
        const double v = (1 - wy) * ((1 - wx) * image(0, c, y0, x0) + wx * image(0, c, y0, x1)) +
                         wy * ((1 - wx) * image(0, c, y1, x0) + wx * image(0, c, y1, x1));
        out.image(0, c, y, ox) = static_cast<float>(v);
      }
      if (label) {
        const int nx = std::clamp(static_cast<int>((rx + 0.5) * sx), 0, s.w - 1);
        out.label.at(0, y, ox) = label->at(0, ny, nx);
      }
      out.valid[static_cast<std::size_t>(y) * crop + ox] = 1;
    }
  }
  return out;
}

Augmented augment_sample(const Tensor& image, const LabelBatch* label, int crop,
                         std::pair<double, double> scale_range, bool flip,
                         std::mt19937_64& rng) {
  const Shape s = image.shape();
  return apply_geometry(image, label, draw_geometry(s.h, s.w, crop, scale_range, flip, rng));
}

Tensor flip_horizontal(const Tensor& t) {
  const Shape s = t.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) out(n, c, y, s.w - 1 - x) = t(n, c, y, x);
  return out;
}

LabelBatch flip_horizontal(const LabelBatch& l) {
  LabelBatch out(l.n, l.h, l.w);
  for (int n = 0; n < l.n; ++n)
    for (int y = 0; y < l.h; ++y)
      for (int x = 0; x < l.w; ++x) out.at(n, y, l.w - 1 - x) = l.at(n, y, x);
  return out;
}

Sampler::Sampler(std::size_t n) : order_(n), cursor_(n) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::size_t Sampler::next(std::mt19937_64& rng) {
  if (order_.empty()) throw DataError("sampler: empty dataset");
  if (cursor_ >= order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
  }
  return order_[cursor_++];
}

std::vector<std::size_t> Sampler::next_batch(std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = next(rng);
  return out;
}

std::vector<double> Sampler::state() const {
  std::vector<double> s(order_.begin(), order_.end());
  s.push_back(static_cast<double>(cursor_));
  return s;
}

void Sampler::restore(const std::vector<double>& state) {
  if (state.empty()) throw DataError("sampler: empty state");
  order_.assign(state.begin(), state.end() - 1);
  cursor_ = static_cast<std::size_t>(state.back());
}

}  // namespace dannet::trainer
