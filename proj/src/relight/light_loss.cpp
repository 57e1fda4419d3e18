#include "dannet/relight/light_loss.hpp"

#include <cmath>

#include "dannet/nn/ops.hpp"

namespace dannet::relight {

LightLossTerms combine(double l_tv, double l_exp, double l_ssim, LightWeights alpha) {
  return {l_tv, l_exp, l_ssim, alpha.tv * l_tv + alpha.exp * l_exp + alpha.ssim * l_ssim};
}

template <typename T>
LossWithGrad<T> tv_loss(const BasicTensor<T>& input, const BasicTensor<T>& relit) {
  require_same_shape(input.shape(), relit.shape(), "tv_loss");
  const Shape s = input.shape();
  LossWithGrad<T> out{0.0, BasicTensor<T>(s)};
  const double n = static_cast<double>(s.numel());
  double sum = 0;
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* i = input.plane(b, c);
      const T* r = relit.plane(b, c);
      T* g = out.grad.plane(b, c);
      auto diff = [&](int y, int x) { return static_cast<double>(i[y * s.w + x]) - r[y * s.w + x]; };
      // d(loss)/dR = -d(loss)/dD with D = I - R.
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x + 1 < s.w; ++x) {
          const double d = diff(y, x + 1) - diff(y, x);
          sum += d * d;
          g[y * s.w + x + 1] -= static_cast<T>(2 * d / n);
          g[y * s.w + x] += static_cast<T>(2 * d / n);
        }
      }
      for (int y = 0; y + 1 < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const double d = diff(y + 1, x) - diff(y, x);
          sum += d * d;
          g[(y + 1) * s.w + x] -= static_cast<T>(2 * d / n);
          g[y * s.w + x] += static_cast<T>(2 * d / n);
        }
      }
    }
  }
  out.value = sum / n;
  return out;
}

template <typename T>
LossWithGrad<T> exposure_loss(const BasicTensor<T>& relit, double target, int pool) {
  const Shape s = relit.shape();
  if (pool < 1 || s.h % pool != 0 || s.w % pool != 0) {
    throw ShapeError("exposure_loss: size " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " not divisible by " + std::to_string(pool));
  }
  const int ph = s.h / pool, pw = s.w / pool;
  const double cells = static_cast<double>(s.n) * s.c * ph * pw;
  const double area = static_cast<double>(pool) * pool;
  LossWithGrad<T> out{0.0, BasicTensor<T>(s)};
  double sum = 0;
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* r = relit.plane(b, c);
      T* g = out.grad.plane(b, c);
      for (int cy = 0; cy < ph; ++cy) {
        for (int cx = 0; cx < pw; ++cx) {
          double m = 0;
          for (int y = cy * pool; y < (cy + 1) * pool; ++y) {
            for (int x = cx * pool; x < (cx + 1) * pool; ++x) m += r[y * s.w + x] - target;
          }
          // accumulating deviations keeps an exact zero when the cell is at E
          const double dev = m / area;
          sum += std::abs(dev);
          const double sign = dev > 0 ? 1.0 : (dev < 0 ? -1.0 : 0.0);
          const T gv = static_cast<T>(sign / (cells * area));
          for (int y = cy * pool; y < (cy + 1) * pool; ++y) {
            for (int x = cx * pool; x < (cx + 1) * pool; ++x) g[y * s.w + x] = gv;
          }
        }
      }
    }
  }
  out.value = sum / cells;
  return out;
}

template <typename T>
LossWithGrad<T> ssim_loss(const BasicTensor<T>& input, const BasicTensor<T>& relit) {
  require_same_shape(input.shape(), relit.shape(), "ssim_loss");
  const Shape s = input.shape();
  if (s.h < 3 || s.w < 3) throw ShapeError("ssim_loss: H and W must be at least 3");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const double n = static_cast<double>(s.n) * s.c * (s.h - 2) * (s.w - 2);
  const double scale = -1.0 / (2.0 * n);
  LossWithGrad<T> out{0.0, BasicTensor<T>(s)};
  double sum = 0;
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* xi = input.plane(b, c);
      const T* yi = relit.plane(b, c);
      T* g = out.grad.plane(b, c);
      for (int cy = 1; cy + 1 < s.h; ++cy) {
        for (int cx = 1; cx + 1 < s.w; ++cx) {
          double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const double x = xi[(cy + dy) * s.w + cx + dx];
              const double y = yi[(cy + dy) * s.w + cx + dx];
              mx += x;
              my += y;
              mxx += x * x;
              myy += y * y;
              mxy += x * y;
            }
          }
          mx /= 9; my /= 9; mxx /= 9; myy /= 9; mxy /= 9;
          const double a1 = 2 * mx * my + c1;
          const double a2 = 2 * (mxy - mx * my) + c2;
          const double b1 = mx * mx + my * my + c1;
          const double b2 = (mxx - mx * mx) + (myy - my * my) + c2;
          const double den = b1 * b2;
          const double ssim = a1 * a2 / den;
          sum += 1.0 - ssim;

          const double d_my = (2 * mx * a2 - 2 * mx * a1) / den -
                              ssim * (2 * my * b2 - 2 * my * b1) / den;
          const double d_mxy = 2 * a1 / den;
          const double d_myy = -ssim / b2;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int q = (cy + dy) * s.w + cx + dx;
              const double gq = (d_my + d_mxy * xi[q] + d_myy * 2.0 * yi[q]) / 9.0;
              g[q] += static_cast<T>(scale * gq);
            }
          }
        }
      }
    }
  }
  out.value = sum / (2.0 * n);
  return out;
}

template <typename T>
LightLossResult<T> light_loss(const BasicTensor<T>& input, const BasicTensor<T>& relit,
                              double target, LightWeights alpha) {
  auto tv = tv_loss(input, relit);
  auto ex = exposure_loss(relit, target);
  auto ss = ssim_loss(input, relit);
  LightLossResult<T> out{combine(tv.value, ex.value, ss.value, alpha),
                         BasicTensor<T>(relit.shape())};
  for (std::size_t i = 0; i < out.grad.size(); ++i) {
    out.grad[i] = static_cast<T>(alpha.tv * tv.grad[i] + alpha.exp * ex.grad[i] +
                                 alpha.ssim * ss.grad[i]);
  }
  return out;
}

nn::Var light_loss(const Tensor& input, const nn::Var& relit, double target,
                   LightWeights alpha, LightLossTerms* terms) {
  auto res = light_loss<float>(input, relit.value(), target, alpha);
  if (terms) *terms = res.terms;
  return nn::loss_node(relit, res.terms.l_light, std::move(res.grad));
}

double mean_intensity(const Tensor& images) {
  double sum = 0;
  for (float v : images.values()) sum += v;
  return images.size() ? sum / static_cast<double>(images.size()) : 0.0;
}

#define DANNET_INSTANTIATE(T)                                                          \
  template LossWithGrad<T> tv_loss(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template LossWithGrad<T> exposure_loss(const BasicTensor<T>&, double, int);         \
  template LossWithGrad<T> ssim_loss(const BasicTensor<T>&, const BasicTensor<T>&);   \
  template LightLossResult<T> light_loss(const BasicTensor<T>&, const BasicTensor<T>&, \
                                         double, LightWeights);
DANNET_INSTANTIATE(float)
DANNET_INSTANTIATE(double)
#undef DANNET_INSTANTIATE

}  // namespace dannet::relight
