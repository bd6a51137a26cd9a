#pragma once

#include <bgr/image.hpp>

#include <cstddef>
#include <span>
#include <vector>

// Bootstrap-weighted reconstruction loss and background-noise loss.
//
// Per-pixel rasters (l, m, smoothed m, weights) are stored as (n, h, w) in
// double precision. Gradients treat the bootstrap weights and the noise
// target as constants.

namespace bgr::loss {

/// Strided read-only view of a (n, c, h, w) float batch, whatever the memory order.
struct BatchView {
    const float* data = nullptr;
    int n = 0, c = 0, h = 0, w = 0;
    std::size_t channel_stride = 0;
    std::size_t batch_stride = 0;

    float at(int b, int ch, int i, int j) const {
        return data[ch * channel_stride + b * batch_stride + static_cast<std::size_t>(i) * w + j];
    }
    static BatchView nchw(const float* data, int n, int c, int h, int w);
    static BatchView cnhw(const float* data, int n, int c, int h, int w);
    /// One channel of a channel-major (C, n, h, w) buffer.
    static BatchView cnhw_channel(const float* data, int channel, int n, int h, int w);
};

struct LossParams {
    double tau1 = 0.25;  // soft threshold
    double beta = 6.0;   // weight decay rate
    int r = 75;          // smoothing divisor
    /// Squared-error reconstruction with unit weights (ablation).
    bool l2 = false;
    /// Unit weights (ablation), keeps the L1 loss.
    bool no_bootstrap = false;

    void validate() const;
};

struct LossBundle {
    int n = 0, h = 0, w = 0;
    std::vector<double> l;
    std::vector<double> m;
    std::vector<double> m_smooth;
    std::vector<double> weight;
    double reconstruction = 0.0;
    double noise = 0.0;
    double total = 0.0;
};

struct LossGradient {
    std::vector<double> background;  // (n, 3, h, w)
    std::vector<double> noise;       // (n, h, w)
};

/// l = sum over channels of |xhat - x|.
std::vector<double> pixel_l1(const BatchView& background, const BatchView& frames);
/// m = tanh(l / tau1).
std::vector<double> soft_mask(std::span<const double> l, double tau1);
/// Half-width k = floor(width / r).
int smoothing_radius(int width, int r);
/// (2k+1)^2 box mean per image with replicate borders.
std::vector<double> smooth_mask(std::span<const double> m, int n, int h, int w, int r);
/// w = exp(-beta * m_smooth).
std::vector<double> bootstrap_weights(std::span<const double> m_smooth, double beta);
/// Mean of weight * l over all pixels.
double reconstruction_loss(std::span<const double> l, std::span<const double> weight);
/// Mean of weight * |lhat - l| over all pixels, divided by 3.
double noise_loss(const BatchView& noise_estimate, std::span<const double> l, std::span<const double> weight);

LossBundle total_loss(const BatchView& background, const BatchView& noise_estimate, const BatchView& frames,
                      const LossParams& params);

/// Gradient of bundle.total with weights and noise target held constant.
LossGradient loss_gradient(const LossBundle& bundle, const BatchView& background, const BatchView& noise_estimate,
                           const BatchView& frames, const LossParams& params);

/// The loss as a function of (background, noise estimate) with the weights and
/// noise target frozen at given values; its exact gradient is loss_gradient().
double detached_loss(const BatchView& background, const BatchView& noise_estimate, const BatchView& frames,
                     std::span<const double> frozen_weight, std::span<const double> frozen_target,
                     const LossParams& params);

}  // namespace bgr::loss
