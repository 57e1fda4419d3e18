#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dannet/core/types.hpp"

namespace dannet::data {

/// 8-bit interleaved raster as stored on disk.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;  ///< 1 (labels) or 3 (RGB)
  std::vector<std::uint8_t> pixels;

  bool operator==(const Raster&) const = default;
};

Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);

/// RGB raster -> 1 x 3 x H x W tensor in [0,1].
Tensor raster_to_tensor(const Raster& r);
/// Tensor plane `b` -> RGB raster, clamped to [0,1] and scaled to [0,255].
Raster tensor_to_raster(const Tensor& t, int b = 0);

/// Single-channel class map -> 1 x H x W label batch.
LabelBatch raster_to_labels(const Raster& r);
Raster labels_to_raster(const LabelBatch& l, int b = 0);

}  // namespace dannet::data
