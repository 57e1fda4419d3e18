#include "dannet/nn/ops.hpp"

#include "dannet/core/types.hpp"

#include <cmath>
#include <memory>

#include <Eigen/Core>

namespace dannet::nn {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Window {
  int channels, in_h, in_w, kernel, stride, pad, out_h, out_w;
  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_h * out_w; }
};

void im2col(const float* img, const Window& g, float* cols) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          float* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1) {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
            }
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const Window& g, float* img) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row =
            cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const float* src = row + static_cast<std::size_t>(oy) * g.out_w;
          float* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Window& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry geo) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: square kernels only");
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) +
                     " channels, weight expects " + std::to_string(ws.c));
  }
  Window g{xs.c, xs.h, xs.w, ws.h, geo.stride, geo.pad, 0, 0};
  g.out_h = conv_out_size(xs.h, g.kernel, g.stride, g.pad);
  g.out_w = conv_out_size(xs.w, g.kernel, g.stride, g.pad);
  if (g.out_h < 1 || g.out_w < 1) {
    throw ShapeError("conv2d: input " + xs.str() + " smaller than kernel");
  }
  const int cout = ws.n;
  Tensor y(Shape{xs.n, cout, g.out_h, g.out_w});
  const bool pointwise = is_pointwise(g);
  const std::size_t col_size = static_cast<std::size_t>(g.rows()) * g.cols();
  auto cols = std::make_shared<std::vector<float>>(pointwise ? 0 : col_size * xs.n);

  ConstMapMat w(weight.value().data(), cout, g.rows());
  for (int b = 0; b < xs.n; ++b) {
    const float* src = x.value().plane(b, 0);
    if (!pointwise) {
      im2col(src, g, cols->data() + b * col_size);
      src = cols->data() + b * col_size;
    }
    MapMat out(y.plane(b, 0), cout, g.cols());
    out.noalias() = w * ConstMapMat(src, g.rows(), g.cols());
    if (bias.defined()) {
      const float* bv = bias.value().data();
      for (int o = 0; o < cout; ++o) out.row(o).array() += bv[o];
    }
  }

  return Var::make(std::move(y), {x, weight, bias},
                   [x, weight, bias, g, cols, pointwise, cout,
                    col_size](const Tensor& gy) mutable {
                     const int n = x.shape().n;
                     ConstMapMat w(weight.value().data(), cout, g.rows());
                     std::vector<float> dcols(col_size);
                     for (int b = 0; b < n; ++b) {
                       ConstMapMat dy(gy.plane(b, 0), cout, g.cols());
                       const float* src = pointwise ? x.value().plane(b, 0)
                                                    : cols->data() + b * col_size;
                       if (weight.requires_grad()) {
                         MapMat dw(weight.grad_buffer().data(), cout, g.rows());
                         dw.noalias() += dy * ConstMapMat(src, g.rows(), g.cols()).transpose();
                       }
                       if (bias.defined() && bias.requires_grad()) {
                         float* db = bias.grad_buffer().data();
                         // Sequential sum: Eigen's reduction order depends on pointer alignment.
                         for (int o = 0; o < cout; ++o) {
                           const float* row = gy.plane(b, o);
                           float acc = 0;
                           for (int i = 0; i < g.cols(); ++i) acc += row[i];
                           db[o] += acc;
                         }
                       }
                       if (x.requires_grad()) {
                         float* dx = x.grad_buffer().plane(b, 0);
                         if (pointwise) {
                           MapMat(dx, g.rows(), g.cols()).noalias() += w.transpose() * dy;
                         } else {
                           MapMat(dcols.data(), g.rows(), g.cols()).noalias() = w.transpose() * dy;
                           col2im(dcols.data(), g, dx);
                         }
                       }
                     }
                   });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     ConvGeometry geo) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv_transpose2d: square kernels only");
  if (xs.c != ws.n) throw ShapeError("conv_transpose2d: channel mismatch");
  const int cout = ws.c;
  const int out_h = conv_transpose_out_size(xs.h, ws.h, geo.stride, geo.pad);
  const int out_w = conv_transpose_out_size(xs.w, ws.w, geo.stride, geo.pad);
  if (out_h < 1 || out_w < 1) throw ShapeError("conv_transpose2d: empty output");
  // The output image plays the role of the conv input.
  Window g{cout, out_h, out_w, ws.h, geo.stride, geo.pad, xs.h, xs.w};
  const int cin = xs.c;
  Tensor y(Shape{xs.n, cout, out_h, out_w});
  std::vector<float> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstMapMat w(weight.value().data(), cin, g.rows());
  for (int b = 0; b < xs.n; ++b) {
    MapMat(cols.data(), g.rows(), g.cols()).noalias() =
        w.transpose() * ConstMapMat(x.value().plane(b, 0), cin, g.cols());
    col2im(cols.data(), g, y.plane(b, 0));
    if (bias.defined()) {
      for (int o = 0; o < cout; ++o) {
        float* p = y.plane(b, o);
        const float bv = bias.value()[o];
        for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += bv;
      }
    }
  }
  return Var::make(std::move(y), {x, weight, bias},
                   [x, weight, bias, g, cin, cout](const Tensor& gy) mutable {
                     const int n = x.shape().n;
                     ConstMapMat w(weight.value().data(), cin, g.rows());
                     std::vector<float> dcols(static_cast<std::size_t>(g.rows()) * g.cols());
                     for (int b = 0; b < n; ++b) {
                       im2col(gy.plane(b, 0), g, dcols.data());
                       ConstMapMat dc(dcols.data(), g.rows(), g.cols());
                       if (x.requires_grad()) {
                         MapMat(x.grad_buffer().plane(b, 0), cin, g.cols()).noalias() += w * dc;
                       }
                       if (weight.requires_grad()) {
                         MapMat(weight.grad_buffer().data(), cin, g.rows()).noalias() +=
                             ConstMapMat(x.value().plane(b, 0), cin, g.cols()) * dc.transpose();
                       }
                       if (bias.defined() && bias.requires_grad()) {
                         float* db = bias.grad_buffer().data();
                         const std::size_t plane = gy.shape().plane();
                         for (int o = 0; o < cout; ++o) {
                           const float* p = gy.plane(b, o);
                           double s = 0;
                           for (std::size_t i = 0; i < plane; ++i) s += p[i];
                           db[o] += static_cast<float>(s);
                         }
                       }
                     }
                   });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               const BatchNormState& st) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  std::vector<float> mean(s.c), invstd(s.c);
  if (st.training) {
    if (count < 2) throw ShapeError("batch_norm: need more than one value per channel");
    for (int c = 0; c < s.c; ++c) {
      double sum = 0, sq = 0;
      for (int b = 0; b < s.n; ++b) {
        const float* p = x.value().plane(b, c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      const double m = sum / count;
      const double var = std::max(0.0, sq / count - m * m);
      mean[c] = static_cast<float>(m);
      invstd[c] = static_cast<float>(1.0 / std::sqrt(var + st.eps));
      if (st.running_mean) {
        float& rm = (*st.running_mean)[c];
        float& rv = (*st.running_var)[c];
        rm = (1 - st.momentum) * rm + st.momentum * static_cast<float>(m);
        rv = (1 - st.momentum) * rv +
             st.momentum * static_cast<float>(var * count / (count - 1));
      }
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[c] = (*st.running_mean)[c];
      invstd[c] = 1.0f / std::sqrt((*st.running_var)[c] + st.eps);
    }
  }

  Tensor y(s);
  auto xhat = std::make_shared<Tensor>(s);
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x.value().plane(b, c);
      float* h = xhat->plane(b, c);
      float* o = y.plane(b, c);
      const float gm = gamma.value()[c], bt = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = (p[i] - mean[c]) * invstd[c];
        o[i] = gm * h[i] + bt;
      }
    }
  }
  const bool training = st.training;
  return Var::make(std::move(y), {x, gamma, beta},
                   [x, gamma, beta, xhat, invstd, training, count](const Tensor& gy) mutable {
                     const Shape s = x.shape();
                     const std::size_t plane = s.plane();
                     for (int c = 0; c < s.c; ++c) {
                       double sum_dy = 0, sum_dy_xhat = 0;
                       for (int b = 0; b < s.n; ++b) {
                         const float* d = gy.plane(b, c);
                         const float* h = xhat->plane(b, c);
                         for (std::size_t i = 0; i < plane; ++i) {
                           sum_dy += d[i];
                           sum_dy_xhat += static_cast<double>(d[i]) * h[i];
                         }
                       }
                       if (gamma.requires_grad()) gamma.grad_buffer()[c] += static_cast<float>(sum_dy_xhat);
                       if (beta.requires_grad()) beta.grad_buffer()[c] += static_cast<float>(sum_dy);
                       if (!x.requires_grad()) continue;
                       const float gm = gamma.value()[c];
                       Tensor& dx = x.grad_buffer();
                       if (training) {
                         const float a = static_cast<float>(sum_dy / count);
                         const float bcoef = static_cast<float>(sum_dy_xhat / count);
                         for (int b = 0; b < s.n; ++b) {
                           const float* d = gy.plane(b, c);
                           const float* h = xhat->plane(b, c);
                           float* o = dx.plane(b, c);
                           for (std::size_t i = 0; i < plane; ++i) {
                             o[i] += gm * invstd[c] * (d[i] - a - h[i] * bcoef);
                           }
                         }
                       } else {
                         for (int b = 0; b < s.n; ++b) {
                           const float* d = gy.plane(b, c);
                           float* o = dx.plane(b, c);
                           for (std::size_t i = 0; i < plane; ++i) o[i] += gm * invstd[c] * d[i];
                         }
                       }
                     }
                   });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0f); }

Var leaky_relu(const Var& x, float slope) {
  Tensor y(x.shape());
  const float* in = x.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[i] > 0 ? in[i] : slope * in[i];
  return Var::make(std::move(y), {x}, [x, slope](const Tensor& g) mutable {
    Tensor& dx = x.grad_buffer();
    const float* in = x.value().data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += in[i] > 0 ? g[i] : slope * g[i];
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return Var::make(std::move(y), {a, b}, [a, b](const Tensor& g) mutable {
    accumulate(a, g);
    accumulate(b, g);
  });
}

Var scale(const Var& x, float factor) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * x.value()[i];
  return Var::make(std::move(y), {x}, [x, factor](const Tensor& g) mutable {
    Tensor& dx = x.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * g[i];
  });
}

Var weighted_sum(const std::vector<std::pair<float, Var>>& terms) {
  double total = 0;
  std::vector<Var> inputs;
  std::vector<float> coeffs;
  for (const auto& [c, v] : terms) {
    if (!v.defined()) continue;
    if (v.value().size() != 1) throw ShapeError("weighted_sum: scalar terms only");
    total += static_cast<double>(c) * v.value()[0];
    inputs.push_back(v);
    coeffs.push_back(c);
  }
  Tensor y(Shape{}, static_cast<float>(total));
  return Var::make(std::move(y), inputs, [inputs, coeffs](const Tensor& g) mutable {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      accumulate(inputs[i], Tensor(Shape{}, coeffs[i] * g[0]));
    }
  });
}

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
  const Shape s = x.shape();
  if (s.h == out_h && s.w == out_w) return x;
  struct Tap {
    int i0, i1;
    float f;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double ratio = out > 1 ? static_cast<double>(in - 1) / (out - 1) : 0.0;
    for (int o = 0; o < out; ++o) {
      const double src = o * ratio;
      const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
      const int i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, static_cast<float>(src - i0)};
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(s.h, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(s.w, out_w));
  Tensor y(Shape{s.n, s.c, out_h, out_w});
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const float* in = x.value().plane(b, c);
      float* o = y.plane(b, c);
      for (int oy = 0; oy < out_h; ++oy) {
        const Tap& a = (*ty)[oy];
        const float* r0 = in + a.i0 * s.w;
        const float* r1 = in + a.i1 * s.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap& t = (*tx)[ox];
          const float top = r0[t.i0] + t.f * (r0[t.i1] - r0[t.i0]);
          const float bot = r1[t.i0] + t.f * (r1[t.i1] - r1[t.i0]);
          o[oy * out_w + ox] = top + a.f * (bot - top);
        }
      }
    }
  }
  return Var::make(std::move(y), {x}, [x, ty, tx, out_h, out_w](const Tensor& g) mutable {
    const Shape s = x.shape();
    Tensor& dx = x.grad_buffer();
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        const float* go = g.plane(b, c);
        float* d = dx.plane(b, c);
        for (int oy = 0; oy < out_h; ++oy) {
          const Tap& a = (*ty)[oy];
          for (int ox = 0; ox < out_w; ++ox) {
            const Tap& t = (*tx)[ox];
            const float v = go[oy * out_w + ox];
            d[a.i0 * s.w + t.i0] += v * (1 - a.f) * (1 - t.f);
            d[a.i0 * s.w + t.i1] += v * (1 - a.f) * t.f;
            d[a.i1 * s.w + t.i0] += v * a.f * (1 - t.f);
            d[a.i1 * s.w + t.i1] += v * a.f * t.f;
          }
        }
      }
    }
  });
}

Var softmax(const Var& logits) {
  Tensor p = dannet::softmax_channels(logits.value());
  auto probs = std::make_shared<Tensor>(p);
  return Var::make(std::move(p), {logits}, [logits, probs](const Tensor& g) mutable {
    const Shape s = probs->shape();
    const std::size_t plane = s.plane();
    Tensor& dz = logits.grad_buffer();
    for (int b = 0; b < s.n; ++b) {
      const float* pp = probs->plane(b, 0);
      const float* gg = g.plane(b, 0);
      float* d = dz.plane(b, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        float dot = 0;
        for (int k = 0; k < s.c; ++k) dot += gg[k * plane + i] * pp[k * plane + i];
        for (int k = 0; k < s.c; ++k) {
          d[k * plane + i] += pp[k * plane + i] * (gg[k * plane + i] - dot);
        }
      }
    }
  });
}

Var select_channels(const Var& x, const std::vector<int>& channels) {
  const Shape s = x.shape();
  for (int c : channels) {
    if (c < 0 || c >= s.c) throw ShapeError("select_channels: channel out of range");
  }
  const int k = static_cast<int>(channels.size());
  Tensor y(Shape{s.n, k, s.h, s.w});
  for (int b = 0; b < s.n; ++b) {
    for (int j = 0; j < k; ++j) {
      std::copy_n(x.value().plane(b, channels[j]), s.plane(), y.plane(b, j));
    }
  }
  return Var::make(std::move(y), {x}, [x, channels](const Tensor& g) mutable {
    Tensor& dx = x.grad_buffer();
    const Shape s = x.shape();
    for (int b = 0; b < s.n; ++b) {
      for (std::size_t j = 0; j < channels.size(); ++j) {
        const float* src = g.plane(b, static_cast<int>(j));
        float* dst = dx.plane(b, channels[j]);
        for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += src[i];
      }
    }
  });
}

Var loss_node(const Var& input, double value, Tensor grad_wrt_input) {
  auto grad = std::make_shared<Tensor>(std::move(grad_wrt_input));
  return Var::make(Tensor(Shape{}, static_cast<float>(value)), {input},
                   [input, grad](const Tensor& g) mutable {
                     Tensor scaled(grad->shape());
                     for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = g[0] * (*grad)[i];
                     accumulate(input, scaled);
                   });
}

Var loss_node(const Var& a, const Var& b, double value, Tensor grad_a, Tensor grad_b) {
  auto ga = std::make_shared<Tensor>(std::move(grad_a));
  auto gb = std::make_shared<Tensor>(std::move(grad_b));
  return Var::make(Tensor(Shape{}, static_cast<float>(value)), {a, b},
                   [a, b, ga, gb](const Tensor& g) mutable {
                     auto push = [&](const Var& v, const Tensor& src) {
                       if (!v.requires_grad()) return;
                       Tensor scaled(src.shape());
                       for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = g[0] * src[i];
                       accumulate(v, scaled);
                     };
                     push(a, *ga);
                     push(b, *gb);
                   });
}

}  // namespace dannet::nn
