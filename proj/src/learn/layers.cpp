#include "blocktower/learn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace blocktower::learn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Fixed summation order; Eigen's reductions peel by address alignment.
template <typename T>
T ordered_sum(const T* x, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

template <typename T>
void im2col(const ConvShape& s, const T* in, T* col) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const int k = s.kernel;
  for (int c = 0; c < s.in_c; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * s.in_h * s.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= s.in_h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * s.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            dst[ox] = (ix >= 0 && ix < s.in_w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvShape& s, const T* col, T* in) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const int k = s.kernel;
  std::fill(in, in + static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, T(0));
  for (int c = 0; c < s.in_c; ++c) {
    T* plane = in + static_cast<std::size_t>(c) * s.in_h * s.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * s.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix >= 0 && ix < s.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Rows (c, a, b) of a 2x2 window whose top-left tap sits at offset (oy, ox).
template <typename T>
void im2col2x2(const T* in, int channels, int h, int w, int oy, int ox, T* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = in + c * hw;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        T* row = col + (static_cast<std::size_t>(c * 2 + a) * 2 + b) * hw;
        for (int i = 0; i < h; ++i) {
          const int iy = i + oy + a;
          T* dst = row + static_cast<std::size_t>(i) * w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int j = 0; j < w; ++j) {
            const int ix = j + ox + b;
            dst[j] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im2x2_add(const T* col, int channels, int h, int w, int oy, int ox, T* in) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* plane = in + c * hw;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const T* row = col + (static_cast<std::size_t>(c * 2 + a) * 2 + b) * hw;
        for (int i = 0; i < h; ++i) {
          const int iy = i + oy + a;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(i) * w;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int j = 0; j < w; ++j) {
            const int ix = j + ox + b;
            if (ix >= 0 && ix < w) dst[ix] += src[j];
          }
        }
      }
    }
  }
}

// Output phase p of a 2x upsample + 3x3 conv sees two low-resolution taps:
// phase 0 folds original taps {0} and {1,2}; phase 1 folds {0,1} and {2}.
// Conversely each original tap feeds exactly two (phase, folded tap) pairs.
constexpr int kFeeds[3][2][2] = {{{0, 0}, {1, 0}}, {{0, 1}, {1, 0}}, {{0, 1}, {1, 1}}};

// weff holds four (out_c, in_c * 4) matrices, phase-major (py * 2 + px).
template <typename T>
void fold_weights(const ConvShape& s, const T* weight, T* weff) {
  const std::size_t k4 = static_cast<std::size_t>(s.in_c) * 4;
  const std::size_t phase_stride = static_cast<std::size_t>(s.out_c) * k4;
  for (int o = 0; o < s.out_c; ++o) {
    for (int c = 0; c < s.in_c; ++c) {
      const T* w = weight + (static_cast<std::size_t>(o) * s.in_c + c) * 9;
      // r[py][a][kx]: rows folded for phase py.
      T r[2][2][3];
      for (int kx = 0; kx < 3; ++kx) {
        r[0][0][kx] = w[kx];
        r[0][1][kx] = w[3 + kx] + w[6 + kx];
        r[1][0][kx] = w[kx] + w[3 + kx];
        r[1][1][kx] = w[6 + kx];
      }
      for (int py = 0; py < 2; ++py) {
        for (int a = 0; a < 2; ++a) {
          const T* q = r[py][a];
          const T f[2][2] = {{q[0], q[1] + q[2]}, {q[0] + q[1], q[2]}};
          for (int px = 0; px < 2; ++px) {
            T* dst = weff + (py * 2 + px) * phase_stride + o * k4 + (c * 2 + a) * 2;
            dst[0] = f[px][0];
            dst[1] = f[px][1];
          }
        }
      }
    }
  }
}

template <typename T>
void unfold_grad(const ConvShape& s, const T* dweff, T* dweight) {
  const std::size_t k4 = static_cast<std::size_t>(s.in_c) * 4;
  const std::size_t phase_stride = static_cast<std::size_t>(s.out_c) * k4;
  for (int o = 0; o < s.out_c; ++o) {
    for (int c = 0; c < s.in_c; ++c) {
      T* dw = dweight + (static_cast<std::size_t>(o) * s.in_c + c) * 9;
      const std::size_t base = o * k4 + c * 4;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          T acc = 0;
          for (const auto& fy : kFeeds[ky])
            for (const auto& fx : kFeeds[kx])
              acc += dweff[(fy[0] * 2 + fx[0]) * phase_stride + base + fy[1] * 2 + fx[1]];
          dw[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void upconv3x3_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out,
                       std::vector<T>& scratch) {
  const int h = s.in_h;
  const int w = s.in_w;
  const auto hw = static_cast<Eigen::Index>(h) * w;
  const auto k4 = static_cast<Eigen::Index>(s.in_c) * 4;
  const std::size_t n_weff = static_cast<std::size_t>(s.out_c) * k4;
  const std::size_t n_col = static_cast<std::size_t>(k4 * hw);
  scratch.resize(4 * n_weff + n_col + static_cast<std::size_t>(s.out_c) * hw);
  T* weff = scratch.data();
  T* col = weff + 4 * n_weff;
  T* phase = col + n_col;
  const int ow = 2 * w;
  fold_weights(s, weight, weff);
  for (int py = 0; py < 2; ++py) {
    for (int px = 0; px < 2; ++px) {
      im2col2x2(in, s.in_c, h, w, py - 1, px - 1, col);
      MapMat<T>(phase, s.out_c, hw).noalias() =
          ConstMapMat<T>(weff + (py * 2 + px) * n_weff, s.out_c, k4) * ConstMapMat<T>(col, k4, hw);
      for (int o = 0; o < s.out_c; ++o) {
        const T* src = phase + o * hw;
        T* dst = out + static_cast<std::size_t>(o) * 4 * hw;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            dst[static_cast<std::size_t>(2 * i + py) * ow + 2 * j + px] = src[i * w + j] + bias[o];
      }
    }
  }
}

template <typename T>
void upconv3x3_backward(const ConvShape& s, const T* in, const T* weight, const T* dout, T* dweight,
                        T* dbias, T* din, std::vector<T>& scratch) {
  const int h = s.in_h;
  const int w = s.in_w;
  const auto hw = static_cast<Eigen::Index>(h) * w;
  const auto k4 = static_cast<Eigen::Index>(s.in_c) * 4;
  const std::size_t n_weff = static_cast<std::size_t>(s.out_c) * k4;
  const std::size_t n_col = static_cast<std::size_t>(k4 * hw);
  scratch.resize(8 * n_weff + n_col + static_cast<std::size_t>(s.out_c) * hw);
  T* weff = scratch.data();
  T* dweff = weff + 4 * n_weff;
  T* col = dweff + 4 * n_weff;
  T* phase = col + n_col;
  const int ow = 2 * w;
  if (din != nullptr) {
    std::fill(din, din + static_cast<std::size_t>(s.in_c) * hw, T(0));
    fold_weights(s, weight, weff);
  }
  for (int py = 0; py < 2; ++py) {
    for (int px = 0; px < 2; ++px) {
      const int ph = py * 2 + px;
      for (int o = 0; o < s.out_c; ++o) {
        const T* src = dout + static_cast<std::size_t>(o) * 4 * hw;
        T* dst = phase + o * hw;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) dst[i * w + j] = src[static_cast<std::size_t>(2 * i + py) * ow + 2 * j + px];
      }
      ConstMapMat<T> d(phase, s.out_c, hw);
      for (int o = 0; o < s.out_c; ++o) dbias[o] += ordered_sum(phase + o * hw, static_cast<std::size_t>(hw));
      im2col2x2(in, s.in_c, h, w, py - 1, px - 1, col);
      MapMat<T>(dweff + ph * n_weff, s.out_c, k4).noalias() = d * ConstMapMat<T>(col, k4, hw).transpose();
      if (din == nullptr) continue;
      MapMat<T>(col, k4, hw).noalias() = ConstMapMat<T>(weff + ph * n_weff, s.out_c, k4).transpose() * d;
      col2im2x2_add(col, s.in_c, h, w, py - 1, px - 1, din);
    }
  }
  unfold_grad(s, dweff, dweight);
}

template <typename T>
void conv2d_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out,
                    std::vector<T>& col) {
  const auto rows = static_cast<Eigen::Index>(s.col_rows());
  const auto pixels = static_cast<Eigen::Index>(s.out_pixels());
  col.resize(static_cast<std::size_t>(rows * pixels));
  im2col(s, in, col.data());
  ConstMapMat<T> w(weight, s.out_c, rows);
  ConstMapMat<T> c(col.data(), rows, pixels);
  MapMat<T> o(out, s.out_c, pixels);
  o.noalias() = w * c;
  for (int oc = 0; oc < s.out_c; ++oc) o.row(oc).array() += bias[oc];
}

template <typename T>
void conv2d_backward(const ConvShape& s, const T* in, const T* weight, const T* dout, T* dweight,
                     T* dbias, T* din, std::vector<T>& col) {
  const auto rows = static_cast<Eigen::Index>(s.col_rows());
  const auto pixels = static_cast<Eigen::Index>(s.out_pixels());
  col.resize(static_cast<std::size_t>(rows * pixels));
  im2col(s, in, col.data());
  ConstMapMat<T> d(dout, s.out_c, pixels);
  {
    ConstMapMat<T> c(col.data(), rows, pixels);
    MapMat<T> dw(dweight, s.out_c, rows);
    dw.noalias() += d * c.transpose();
  }
  for (int oc = 0; oc < s.out_c; ++oc)
    dbias[oc] += ordered_sum(dout + static_cast<std::size_t>(oc) * pixels, static_cast<std::size_t>(pixels));
  if (din == nullptr) return;
  ConstMapMat<T> w(weight, s.out_c, rows);
  MapMat<T> dc(col.data(), rows, pixels);
  dc.noalias() = w.transpose() * d;
  col2im(s, col.data(), din);
}

template <typename T>
void relu_forward(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* out, T* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(out[i] > T(0))) grad[i] = T(0);
}

template <typename T>
void upsample2x_forward(const T* in, int c, int h, int w, T* out) {
  const int ow = 2 * w;
  for (int ch = 0; ch < c; ++ch) {
    const T* src = in + static_cast<std::size_t>(ch) * h * w;
    T* dst = out + static_cast<std::size_t>(ch) * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      T* r0 = dst + static_cast<std::size_t>(2 * y) * ow;
      T* r1 = r0 + ow;
      for (int x = 0; x < w; ++x) {
        const T v = src[static_cast<std::size_t>(y) * w + x];
        r0[2 * x] = v;
        r0[2 * x + 1] = v;
        r1[2 * x] = v;
        r1[2 * x + 1] = v;
      }
    }
  }
}

template <typename T>
void upsample2x_backward(const T* dout, int c, int h, int w, T* din) {
  const int ow = 2 * w;
  for (int ch = 0; ch < c; ++ch) {
    const T* src = dout + static_cast<std::size_t>(ch) * 4 * h * w;
    T* dst = din + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      const T* r0 = src + static_cast<std::size_t>(2 * y) * ow;
      const T* r1 = r0 + ow;
      for (int x = 0; x < w; ++x)
        dst[static_cast<std::size_t>(y) * w + x] = (r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]);
    }
  }
}

template <typename T>
void global_avg_pool_forward(const T* in, int c, int hw, T* out) {
  for (int ch = 0; ch < c; ++ch) {
    const T* p = in + static_cast<std::size_t>(ch) * hw;
    T sum = 0;
    for (int i = 0; i < hw; ++i) sum += p[i];
    out[ch] = sum / static_cast<T>(hw);
  }
}

template <typename T>
void global_avg_pool_backward(const T* dout, int c, int hw, T* din) {
  for (int ch = 0; ch < c; ++ch) {
    const T g = dout[ch] / static_cast<T>(hw);
    std::fill(din + static_cast<std::size_t>(ch) * hw, din + static_cast<std::size_t>(ch + 1) * hw, g);
  }
}

template <typename T>
void linear_forward(const T* in, int n_in, const T* weight, const T* bias, int n_out, T* out) {
  for (int o = 0; o < n_out; ++o) {
    const T* w = weight + static_cast<std::size_t>(o) * n_in;
    T acc = bias[o];
    for (int i = 0; i < n_in; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
}

template <typename T>
void linear_backward(const T* in, int n_in, const T* weight, const T* dout, int n_out, T* dweight,
                     T* dbias, T* din) {
  if (din != nullptr) std::fill(din, din + n_in, T(0));
  for (int o = 0; o < n_out; ++o) {
    const T g = dout[o];
    dbias[o] += g;
    T* dw = dweight + static_cast<std::size_t>(o) * n_in;
    const T* w = weight + static_cast<std::size_t>(o) * n_in;
    for (int i = 0; i < n_in; ++i) {
      dw[i] += g * in[i];
      if (din != nullptr) din[i] += g * w[i];
    }
  }
}

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
T bce_with_logit(T z, bool label, T* dz) {
  // log(1 + exp(z)) - y z, evaluated without overflow.
  const T softplus = std::max(z, T(0)) + std::log1p(std::exp(-std::fabs(z)));
  if (dz != nullptr) *dz = sigmoid(z) - (label ? T(1) : T(0));
  return softplus - (label ? z : T(0));
}

template <typename T>
T softmax_cross_entropy(const T* logits, int classes, int pixels, const uint8_t* labels, T* probs,
                        T* dlogits, T scale) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowArr = Eigen::Array<T, 1, Eigen::Dynamic>;
  Eigen::Map<const Arr> z(logits, classes, pixels);
  Eigen::Map<Arr> p(probs, classes, pixels);
  const RowArr mx = z.colwise().maxCoeff();
  p = (z.rowwise() - mx).exp();
  const RowArr sum = p.colwise().sum();
  p.rowwise() /= sum;
  if (labels == nullptr) return T(0);
  // -log softmax = logsumexp - logit
  const RowArr lse = sum.log() + mx;
  double total = 0.0;
  for (int i = 0; i < pixels; ++i)
    total += static_cast<double>(lse(i) - z(labels[i], i));
  if (dlogits != nullptr) {
    Eigen::Map<Arr> d(dlogits, classes, pixels);
    const T g = scale / static_cast<T>(pixels);
    d = p * g;
    for (int i = 0; i < pixels; ++i) d(labels[i], i) -= g;
  }
  return static_cast<T>(total / pixels);
}

#define BT_INSTANTIATE(T)                                                                         \
  template void conv2d_forward<T>(const ConvShape&, const T*, const T*, const T*, T*,            \
                                  std::vector<T>&);                                              \
  template void conv2d_backward<T>(const ConvShape&, const T*, const T*, const T*, T*, T*, T*,   \
                                   std::vector<T>&);                                             \
  template void relu_forward<T>(T*, std::size_t);                                                \
  template void relu_backward<T>(const T*, T*, std::size_t);                                     \
  template void upsample2x_forward<T>(const T*, int, int, int, T*);                              \
  template void upsample2x_backward<T>(const T*, int, int, int, T*);                             \
  template void upconv3x3_forward<T>(const ConvShape&, const T*, const T*, const T*, T*,         \
                                     std::vector<T>&);                                           \
  template void upconv3x3_backward<T>(const ConvShape&, const T*, const T*, const T*, T*, T*, T*, \
                                      std::vector<T>&);                                          \
  template void global_avg_pool_forward<T>(const T*, int, int, T*);                              \
  template void global_avg_pool_backward<T>(const T*, int, int, T*);                             \
  template void linear_forward<T>(const T*, int, const T*, const T*, int, T*);                   \
  template void linear_backward<T>(const T*, int, const T*, const T*, int, T*, T*, T*);          \
  template T sigmoid<T>(T);                                                                      \
  template T bce_with_logit<T>(T, bool, T*);                                                     \
  template T softmax_cross_entropy<T>(const T*, int, int, const uint8_t*, T*, T*, T);

BT_INSTANTIATE(float)
BT_INSTANTIATE(double)

#undef BT_INSTANTIATE

}  // namespace blocktower::learn
