#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "dannet/core/types.hpp"

namespace dannet::trainer {

/// One draw of the random scale / crop / flip. Offsets are into the rescaled
/// image; a negative offset places the image inside a padded crop.
struct CropGeometry {
  double scale = 1.0;
  int scaled_h = 0;
  int scaled_w = 0;
  int off_y = 0;
  int off_x = 0;
  bool flip = false;
  int crop = 0;
};

CropGeometry draw_geometry(int h, int w, int crop, std::pair<double, double> scale_range,
                           bool allow_flip, std::mt19937_64& rng);

struct Augmented {
  Tensor image;                     ///< 1 x 3 x crop x crop, zero padded
  LabelBatch label;                 ///< ignore padded; empty when no label was given
  std::vector<std::uint8_t> valid;  ///< 1 where the crop covers the image
};

/// Bilinear resampling for the image, nearest neighbour for the label.
Augmented apply_geometry(const Tensor& image, const LabelBatch* label, const CropGeometry& g);

Augmented augment_sample(const Tensor& image, const LabelBatch* label, int crop,
                         std::pair<double, double> scale_range, bool flip,
                         std::mt19937_64& rng);

Tensor flip_horizontal(const Tensor& t);
LabelBatch flip_horizontal(const LabelBatch& l);

/// Endless shuffled pass over n items; reshuffles after every epoch.
class Sampler {
 public:
  Sampler() = default;
  explicit Sampler(std::size_t n);

  std::size_t next(std::mt19937_64& rng);
  std::vector<std::size_t> next_batch(std::size_t count, std::mt19937_64& rng);

  std::size_t size() const { return order_.size(); }
  /// order followed by the cursor, for checkpoints
  std::vector<double> state() const;
  void restore(const std::vector<double>& state);

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace dannet::trainer
