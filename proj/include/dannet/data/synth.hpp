#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>

#include "dannet/core/types.hpp"

namespace dannet::data {

/// Photometric day->night transform plus the coarse misalignment.
struct NightParams {
  double gain = 0.3;
  double gamma = 1.5;
  std::array<double, 3> tint = {0.85, 0.95, 1.15};
  double noise_std = 0.03;
  int max_shift = 3;
};

enum class SceneStyle { source_day, target_day };

struct Scene {
  Tensor image;  ///< 1 x 3 x S x S, already quantized to 8-bit levels
  LabelBatch label;
};

/// Procedural street scene over the synthetic taxonomy (road, sidewalk,
/// building, vegetation, sky, car, pole). Poles are size/32 pixels wide and stay
/// a rare class.
Scene render_scene(std::mt19937_64& rng, int size, SceneStyle style);

/// Night rendering of an 8-bit day image: shift by (dx, dy) with edge
/// replication, then v' = gain * tint_c * v^gamma + N(0, noise_std), clamped
/// and re-quantized.
Tensor render_night(const Tensor& day, const NightParams& p, int dx, int dy,
                    std::mt19937_64& rng);

/// The noiseless part of render_night for one value; used to invert pairs.
double night_response(double v, const NightParams& p, int channel);

/// Shifts a label map by (dx, dy) with edge replication.
LabelBatch shift_labels(const LabelBatch& l, int dx, int dy);

struct SynthOptions {
  std::uint64_t seed = 0;
  int n_scenes = 200;
  int size = 64;
  NightParams night;
  int n_val = 0;  ///< night-val scenes; 0 means max(1, n_scenes / 4)
};

/// Writes under `root`:
///   source/{images,labels}/       labeled day scenes
///   target_day/images/            unlabeled day renderings
///   target_night/images/          paired night renderings
///   pairs.tsv                     night_name <TAB> day_name
///   target_shifts.tsv             pair id, dx, dy
///   night_val/{images,labels}/    held-out labeled night scenes
void synth_generate(const SynthOptions& opts, const std::filesystem::path& root);

}  // namespace dannet::data
