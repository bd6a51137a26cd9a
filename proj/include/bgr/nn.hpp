#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Layer kernels with hand-written backward passes. Activations are stored
// channel-major (C, N, H, W) so a whole batch of one channel is contiguous and
// every convolution becomes a single GEMM per chunk of samples.

namespace bgr::nn {

struct Tensor {
    int c = 0;
    int n = 0;
    int h = 0;
    int w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int channels, int batch, int height, int width, float fill = 0.f)
        : c(channels), n(batch), h(height), w(width),
          v(static_cast<std::size_t>(channels) * batch * height * width, fill) {}

    void reshape(int channels, int batch, int height, int width) {
        c = channels;
        n = batch;
        h = height;
        w = width;
        v.assign(static_cast<std::size_t>(c) * n * h * w, 0.f);
    }
    std::size_t image() const { return static_cast<std::size_t>(h) * w; }
    std::size_t plane() const { return static_cast<std::size_t>(n) * h * w; }
    float* channel(int ch) { return v.data() + ch * plane(); }
    const float* channel(int ch) const { return v.data() + ch * plane(); }
    float& at(int ch, int b, int i, int j) { return v[ch * plane() + b * image() + static_cast<std::size_t>(i) * w + j]; }
    float at(int ch, int b, int i, int j) const {
        return v[ch * plane() + b * image() + static_cast<std::size_t>(i) * w + j];
    }
};

struct ConvGeometry {
    int kernel = 5;
    int stride = 3;
    int padding = 2;

    /// floor((size + 2 pad - kernel) / stride) + 1
    int conv_output(int size) const {
        const int span = size + 2 * padding - kernel;
        return span < 0 ? 0 : span / stride + 1;
    }
    /// (size - 1) stride - 2 pad + kernel, before any output adjustment.
    int transposed_output(int size) const { return (size - 1) * stride - 2 * padding + kernel; }

    friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

// Convolution. Weight layout (cout, cin, k, k); output must be preshaped to
// (cout, n, conv_output(h), conv_output(w)).
void conv_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias,
                  ConvGeometry g, Tensor& out);
/// Accumulates into dweight/dbias; din may be null.
void conv_backward(const Tensor& in, std::span<const float> weight, ConvGeometry g, const Tensor& dout,
                   std::span<float> dweight, std::span<float> dbias, Tensor* din);

// Transposed convolution. Weight layout (cin, cout, k, k). The output is
// preshaped to any target size; output pixel o receives input pixel i through
// tap t when o = i*stride - padding + t, so a target larger than the natural
// size pads the bottom/right and a smaller one crops it.
void tconv_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias,
                   ConvGeometry g, Tensor& out);
void tconv_backward(const Tensor& in, std::span<const float> weight, ConvGeometry g, const Tensor& dout,
                    std::span<float> dweight, std::span<float> dbias, Tensor* din);

struct GroupNormCache {
    std::vector<float> rstd;  // (n, groups)
};

inline constexpr float kGroupNormEps = 1e-5f;

void group_norm_forward(const Tensor& x, int groups, std::span<const float> gamma, std::span<const float> beta,
                        Tensor& xhat, Tensor& y, GroupNormCache& cache);
void group_norm_backward(const Tensor& xhat, int groups, std::span<const float> gamma, const GroupNormCache& cache,
                         const Tensor& dy, std::span<float> dgamma, std::span<float> dbeta, Tensor& dx);

/// CELU with alpha = 1, in place on `a`, reading pre-activations from `y`.
void celu_forward(const Tensor& y, Tensor& a);
/// dy = da * celu'(y), written into `da`.
void celu_backward(const Tensor& y, Tensor& da);

void sigmoid_forward(const Tensor& z, Tensor& a);
/// dz = da * a (1 - a), written into `da`.
void sigmoid_backward(const Tensor& a, Tensor& da);

}  // namespace bgr::nn
