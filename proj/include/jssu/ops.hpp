#pragma once

#include <vector>

#include "jssu/tensor.hpp"

// Differentiable primitives. Images are [H, W, C] row-major; convolution
// kernels are [k, k, Cin, Cout]; pixel matrices are [N, d].
namespace jssu {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
/// a * s where s is a single-element tensor (learned step sizes).
template <typename T> Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
/// ½‖a‖².
template <typename T> Tensor<T> half_squared_norm(const Tensor<T>& a);
/// Mean absolute difference (the l1 training loss).
template <typename T> Tensor<T> mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Concatenation along the last axis of equally shaped [H, W, *] images.
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
/// Adds a per-channel bias to the last axis.
template <typename T> Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& bias);

/// Zero-padded 2-D convolution. Output side is floor((n + 2 pad - k) / stride) + 1.
/// `bias` may be an undefined tensor.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                 int pad);

/// Adjoint of conv2d(., kernel, stride, pad = k / 2) applied to an image of
/// side n * stride. `kernel` is the forward kernel [k, k, Cin, Cout]; the input
/// here has Cout channels and the result has Cin channels and side n * stride.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride);

/// Keys cubic convolution (a = -0.5), half-pixel centers, clamped borders.
template <typename T> Tensor<T> bicubic_resize(const Tensor<T>& input, int out_h, int out_w);
/// Output sides are round(n * scale), at least 1.
template <typename T> Tensor<T> bicubic_resize(const Tensor<T>& input, double scale);

template <typename T> Tensor<T> softmax(const Tensor<T>& input, int axis);

/// x[N, din] * w[din, dout] + b[dout]; b may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& rows);
/// Places part m's rows at rows[m]; rows not referenced are zero.
template <typename T>
Tensor<T> scatter_rows(const std::vector<Tensor<T>>& parts, const std::vector<std::vector<int>>& rows,
                       int total_rows);

/// Adaptive average pooling to 1x1: [H, W, C] -> [C].
template <typename T> Tensor<T> channel_mean(const Tensor<T>& x);
/// x[H, W, C] scaled per channel by g[C].
template <typename T> Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& g);

/// Circular shift: out[(y + dy) mod H, (x + dx) mod W] = in[y, x].
template <typename T> Tensor<T> roll(const Tensor<T>& x, int dy, int dx);

/// [H, W, C] -> [H, W, C * P * P]; entry ((py * P + px) * C + c) holds the
/// neighbour at offset (py - P/2, px - P/2), zero outside the image.
template <typename T> Tensor<T> patch_image(const Tensor<T>& x, int patch);

/// Selected neighbours and softmax weights of the windowed top-k attention.
struct AttentionSelection {
    int height = 0;
    int width = 0;
    int topk = 0;
    std::vector<int> count;     // kept neighbours per pixel
    std::vector<int> index;     // [pixel * topk + i], raster index of neighbour
    std::vector<double> weight; // [pixel * topk + i]
};

/// For each pixel, scores <q_j, k_l> / sqrt(e) over the in-image window
/// neighbours l, keeps the `topk` largest (lower raster index wins ties),
/// softmaxes them and returns the weighted sum of v_l.
template <typename T>
Tensor<T> windowed_topk_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int window,
                                  int topk);

template <typename T>
AttentionSelection attention_selection(const Tensor<T>& q, const Tensor<T>& k, int window, int topk);

}  // namespace jssu
