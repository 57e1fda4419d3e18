#include "dannet/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "dannet/core/error.hpp"
#include "dannet/data/image_io.hpp"

namespace dannet::data {
namespace fs = std::filesystem;
namespace {

enum Cls { kRoad = 0, kSidewalk, kBuilding, kVegetation, kSky, kCar, kPole };

using Rgb = std::array<double, 3>;

struct Canvas {
  int size;
  std::vector<Rgb> color;
  std::vector<int> label;

  explicit Canvas(int s) : size(s), color(static_cast<std::size_t>(s) * s), label(color.size(), kSky) {}
  void set(int y, int x, int cls, Rgb c) {
    if (y < 0 || y >= size || x < 0 || x >= size) return;
    color[y * size + x] = c;
    label[y * size + x] = cls;
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Rgb scale(Rgb c, double f) { return {c[0] * f, c[1] * f, c[2] * f}; }

float quantize(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
}

}  // namespace

Scene render_scene(std::mt19937_64& rng, int size, SceneStyle style) {
  Canvas cv(size);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double s = size;
  const int horizon = static_cast<int>(s * uniform(rng, 0.35, 0.5));

  // sky: vertical gradient
  for (int y = 0; y < horizon; ++y) {
    const double t = static_cast<double>(y) / std::max(1, horizon);
    for (int x = 0; x < size; ++x) cv.set(y, x, kSky, {0.50 + 0.2 * t, 0.70 + 0.1 * t, 0.95});
  }

  // buildings standing on the horizon, with gaps
  for (int x = 0; x < size;) {
    const int w = uniform_int(rng, size / 8, size / 4);
    if (uniform(rng, 0, 1) < 0.25) {
      x += w / 2 + 1;
      continue;
    }
    const int h = uniform_int(rng, size / 8, size / 3);
    const Rgb wall = {uniform(rng, 0.45, 0.65), uniform(rng, 0.30, 0.40), uniform(rng, 0.25, 0.35)};
    for (int y = std::max(0, horizon - h); y < horizon; ++y) {
      for (int xx = x; xx < std::min(size, x + w); ++xx) {
        const bool window = ((y - horizon) % 4 + 4) % 4 == 1 && (xx - x) % 3 == 1;
        cv.set(y, xx, kBuilding, window ? scale(wall, 0.45) : wall);
      }
    }
    x += w;
  }

  // tree crowns near the horizon
  const int trees = uniform_int(rng, 1, 3);
  for (int t = 0; t < trees; ++t) {
    const double r = s * uniform(rng, 0.08, 0.15);
    const double cx = s * uniform(rng, 0.0, 1.0);
    const double cy = horizon - r * uniform(rng, 0.2, 0.8);
    for (int y = static_cast<int>(cy - r); y <= static_cast<int>(cy + r); ++y) {
      for (int x = static_cast<int>(cx - r); x <= static_cast<int>(cx + r); ++x) {
        if (y >= horizon) continue;
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) {
          cv.set(y, x, kVegetation, {0.18, 0.50, 0.18});
        }
      }
    }
  }

  // ground: road trapezoid, sidewalks, verge
  const double vx = s * uniform(rng, 0.4, 0.6);
  const double left = s * uniform(rng, 0.0, 0.2);
  const double right = s * uniform(rng, 0.8, 1.0);
  const double walk = uniform(rng, 0.18, 0.3);
  for (int y = horizon; y < size; ++y) {
    const double t = (y - horizon + 1.0) / (s - horizon);
    const double rl = vx + (left - vx) * t, rr = vx + (right - vx) * t;
    const double sw = s * walk * t;
    for (int x = 0; x < size; ++x) {
      if (x >= rl && x <= rr) {
        const bool marking = std::abs(x - vx - (0.5 * (left + right) - vx) * t) < 0.6 &&
                             (y / 3) % 2 == 0;
        cv.set(y, x, kRoad, marking ? Rgb{0.85, 0.85, 0.80} : Rgb{0.42, 0.42, 0.45});
      } else if (x >= rl - sw && x <= rr + sw) {
        const bool joint = (x % 4 == 0) || (y % 4 == 0);
        cv.set(y, x, kSidewalk, joint ? Rgb{0.58, 0.52, 0.45} : Rgb{0.72, 0.64, 0.56});
      } else {
        cv.set(y, x, kVegetation, {0.25, 0.55, 0.20});
      }
    }
  }

  // cars on the road
  const int cars = uniform_int(rng, 0, 2);
  for (int c = 0; c < cars; ++c) {
    const int base = static_cast<int>(horizon + (s - horizon) * uniform(rng, 0.35, 0.95));
    const double t = (base - horizon + 1.0) / (s - horizon);
    const int w = std::max(3, static_cast<int>(s * 0.3 * t));
    const int h = std::max(2, static_cast<int>(w * 0.6));
    const double rl = vx + (left - vx) * t, rr = vx + (right - vx) * t;
    const int x0 = static_cast<int>(uniform(rng, rl, std::max(rl + 1, rr - w)));
    static const Rgb paints[] = {{0.80, 0.12, 0.10}, {0.12, 0.25, 0.75}, {0.85, 0.75, 0.10},
                                 {0.90, 0.90, 0.92}};
    const Rgb paint = paints[uniform_int(rng, 0, 3)];
    for (int y = base - h; y < base; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        const bool glass = (y - (base - h)) < h / 3 && x > x0 && x < x0 + w - 1;
        cv.set(y, x, kCar, glass ? Rgb{0.15, 0.18, 0.22} : paint);
      }
    }
  }

  // poles: s/32 pixels wide, rare
  static const int pole_counts[] = {0, 1, 1, 2};
  const int poles = pole_counts[uniform_int(rng, 0, 3)];
  for (int p = 0; p < poles; ++p) {
    const int base = static_cast<int>(horizon + (s - horizon) * uniform(rng, 0.2, 0.7));
    const double t = (base - horizon + 1.0) / (s - horizon);
    const double rl = vx + (left - vx) * t, rr = vx + (right - vx) * t;
    const double sw = s * walk * t;
    const int x = static_cast<int>(uniform(rng, 0, 1) < 0.5 ? rl - sw * 0.5 : rr + sw * 0.5);
    const int h = static_cast<int>(s * (0.15 + 0.15 * t));
    const int pw = std::max(1, static_cast<int>(s) / 32);
    for (int y = base - h; y < base; ++y) {
      for (int dx = 0; dx < pw; ++dx) cv.set(y, x + dx, kPole, {0.88, 0.88, 0.92});
    }
  }

  // photometry: style, shading and sensor noise
  const Rgb style_gain = style == SceneStyle::source_day ? Rgb{1.0, 1.0, 1.0}
                                                         : Rgb{1.04, 0.98, 0.92};
  const double exposure = uniform(rng, 0.9, 1.1);
  Scene out{Tensor(Shape{1, 3, size, size}), LabelBatch(1, size, size)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      const int cls = cv.label[i];
      const double texture = cls == kVegetation ? 0.07 : 0.02;
      const double shade = 1.0 + texture * noise(rng);
      for (int c = 0; c < 3; ++c) {
        out.image(0, c, y, x) = quantize(cv.color[i][c] * shade * exposure * style_gain[c] +
                                         0.01 * noise(rng));
      }
      out.label.data[i] = cls;
    }
  }
  return out;
}

double night_response(double v, const NightParams& p, int channel) {
  return p.gain * p.tint[channel] * std::pow(std::max(v, 0.0), p.gamma);
}

Tensor render_night(const Tensor& day, const NightParams& p, int dx, int dy,
                    std::mt19937_64& rng) {
  const Shape s = day.shape();
  std::normal_distribution<double> noise(0.0, p.noise_std);
  Tensor out(s);
  for (int b = 0; b < s.n; ++b) {
    for (int y = 0; y < s.h; ++y) {
      const int sy = std::clamp(y - dy, 0, s.h - 1);
      for (int x = 0; x < s.w; ++x) {
        const int sx = std::clamp(x - dx, 0, s.w - 1);
        for (int c = 0; c < s.c; ++c) {
          out(b, c, y, x) = quantize(night_response(day(b, c, sy, sx), p, c) + noise(rng));
        }
      }
    }
  }
  return out;
}

LabelBatch shift_labels(const LabelBatch& l, int dx, int dy) {
  LabelBatch out(l.n, l.h, l.w);
  for (int b = 0; b < l.n; ++b) {
    for (int y = 0; y < l.h; ++y) {
      for (int x = 0; x < l.w; ++x) {
        out.at(b, y, x) = l.at(b, std::clamp(y - dy, 0, l.h - 1), std::clamp(x - dx, 0, l.w - 1));
      }
    }
  }
  return out;
}

void synth_generate(const SynthOptions& opts, const fs::path& root) {
  if (opts.size <= 0 || opts.size % 32 != 0) {
    throw ConfigError("synth size must be a positive multiple of 32");
  }
  if (opts.n_scenes < 1) throw ConfigError("synth needs at least one scene");
  const int n_val = opts.n_val > 0 ? opts.n_val : std::max(1, opts.n_scenes / 4);
  std::mt19937_64 rng(opts.seed);
  auto name = [](int i) { return fmt::format("{:05d}.png", i); };
  auto shift = [&] { return uniform_int(rng, -opts.night.max_shift, opts.night.max_shift); };

  for (int i = 0; i < opts.n_scenes; ++i) {
    Scene sc = render_scene(rng, opts.size, SceneStyle::source_day);
    write_png(root / "source/images" / name(i), tensor_to_raster(sc.image));
    write_png(root / "source/labels" / name(i), labels_to_raster(sc.label));
  }

  std::ofstream pairs(root / "pairs.tsv");
  std::ofstream shifts(root / "target_shifts.tsv");
  shifts << "pair\tdx\tdy\n";
  for (int i = 0; i < opts.n_scenes; ++i) {
    Scene sc = render_scene(rng, opts.size, SceneStyle::target_day);
    const int dx = shift(), dy = shift();
    Tensor night = render_night(sc.image, opts.night, dx, dy, rng);
    write_png(root / "target_day/images" / name(i), tensor_to_raster(sc.image));
    write_png(root / "target_night/images" / name(i), tensor_to_raster(night));
    pairs << name(i) << '\t' << name(i) << '\n';
    shifts << fs::path(name(i)).stem().string() << '\t' << dx << '\t' << dy << '\n';
  }

  for (int i = 0; i < n_val; ++i) {
    Scene sc = render_scene(rng, opts.size, SceneStyle::target_day);
    const int dx = shift(), dy = shift();
    Tensor night = render_night(sc.image, opts.night, dx, dy, rng);
    write_png(root / "night_val/images" / name(i), tensor_to_raster(night));
    write_png(root / "night_val/labels" / name(i), labels_to_raster(shift_labels(sc.label, dx, dy)));
  }
}

}  // namespace dannet::data
