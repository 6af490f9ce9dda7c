#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

// Single-sample kernels on planar (C, H, W) buffers. Backward kernels
// accumulate (+=) into parameter gradients and overwrite input gradients.
namespace blocktower::learn {

struct ConvShape {
  int in_c = 0;
  int out_c = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int in_h = 0;
  int in_w = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_c) * in_c * kernel * kernel;
  }
  std::size_t col_rows() const { return static_cast<std::size_t>(in_c) * kernel * kernel; }
  std::size_t out_pixels() const { return static_cast<std::size_t>(out_h()) * out_w(); }
};

// weight: (out_c, in_c, k, k); `col` is scratch and grows as needed.
template <typename T>
void conv2d_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out,
                    std::vector<T>& col);

// `din` may be null when the input gradient is not needed.
template <typename T>
void conv2d_backward(const ConvShape& s, const T* in, const T* weight, const T* dout, T* dweight,
                     T* dbias, T* din, std::vector<T>& col);

template <typename T>
void relu_forward(T* x, std::size_t n);

// Zeroes gradient entries whose forward output was not positive.
template <typename T>
void relu_backward(const T* out, T* grad, std::size_t n);

// Nearest-neighbour 2x upsampling of (c, h, w) to (c, 2h, 2w).
template <typename T>
void upsample2x_forward(const T* in, int c, int h, int w, T* out);

template <typename T>
void upsample2x_backward(const T* dout, int c, int h, int w, T* din);

// Nearest 2x upsample followed by a 3x3 conv (stride 1, pad 1), computed
// directly on the low-resolution input: each of the four output phases is a
// 2x2 conv with summed taps. `s` describes the low-resolution input (kernel,
// stride and pad are ignored); output is (out_c, 2 in_h, 2 in_w). Weight
// layout matches conv2d_forward with kernel 3.
template <typename T>
void upconv3x3_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out,
                       std::vector<T>& scratch);

template <typename T>
void upconv3x3_backward(const ConvShape& s, const T* in, const T* weight, const T* dout, T* dweight,
                        T* dbias, T* din, std::vector<T>& scratch);

template <typename T>
void global_avg_pool_forward(const T* in, int c, int hw, T* out);

template <typename T>
void global_avg_pool_backward(const T* dout, int c, int hw, T* din);

// weight: (n_out, n_in).
template <typename T>
void linear_forward(const T* in, int n_in, const T* weight, const T* bias, int n_out, T* out);

template <typename T>
void linear_backward(const T* in, int n_in, const T* weight, const T* dout, int n_out, T* dweight,
                     T* dbias, T* din);

template <typename T>
T sigmoid(T z);

// Binary cross-entropy on a logit; returns the loss and writes d loss/d z.
template <typename T>
T bce_with_logit(T z, bool label, T* dz);

// Per-pixel softmax over planar (classes, pixels) logits. Writes
// probabilities to `probs` (may alias nothing else). When `labels` is
// non-null returns the mean cross-entropy over pixels and, if `dlogits` is
// non-null, writes scale * d(mean CE)/d logits.
template <typename T>
T softmax_cross_entropy(const T* logits, int classes, int pixels, const uint8_t* labels, T* probs,
                        T* dlogits, T scale);

}  // namespace blocktower::learn
