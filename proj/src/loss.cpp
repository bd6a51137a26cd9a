#include <bgr/loss.hpp>

#include <algorithm>
#include <cmath>

namespace bgr::loss {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw Error(what);
}

void check_pair(const BatchView& a, const BatchView& b) {
    require(a.n == b.n && a.c == b.c && a.h == b.h && a.w == b.w, "loss inputs differ in shape");
    require(a.c == 3, "loss expects 3-channel images");
}

std::size_t pixel(const BatchView& v, int b, int i, int j) {
    return (static_cast<std::size_t>(b) * v.h + i) * v.w + j;
}

}  // namespace

BatchView BatchView::nchw(const float* data, int n, int c, int h, int w) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    return {data, n, c, h, w, hw, hw * c};
}

BatchView BatchView::cnhw(const float* data, int n, int c, int h, int w) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    return {data, n, c, h, w, hw * n, hw};
}

BatchView BatchView::cnhw_channel(const float* data, int channel, int n, int h, int w) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    return {data + channel * hw * n, n, 1, h, w, hw * n, hw};
}

void LossParams::validate() const {
    require(tau1 > 0.0, "tau1 must be positive");
    require(beta >= 0.0, "beta must be non-negative");
    require(r >= 1, "r must be >= 1");
}

std::vector<double> pixel_l1(const BatchView& background, const BatchView& frames) {
    check_pair(background, frames);
    std::vector<double> l(static_cast<std::size_t>(frames.n) * frames.h * frames.w, 0.0);
    for (int b = 0; b < frames.n; ++b)
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < frames.h; ++i)
                for (int j = 0; j < frames.w; ++j)
                    l[pixel(frames, b, i, j)] +=
                        std::abs(static_cast<double>(background.at(b, c, i, j)) - frames.at(b, c, i, j));
    return l;
}

std::vector<double> soft_mask(std::span<const double> l, double tau1) {
    require(tau1 > 0.0, "tau1 must be positive");
    std::vector<double> m(l.size());
    std::transform(l.begin(), l.end(), m.begin(), [tau1](double v) { return std::tanh(v / tau1); });
    return m;
}

int smoothing_radius(int width, int r) {
    require(r >= 1, "r must be >= 1");
    return width / r;
}

std::vector<double> smooth_mask(std::span<const double> m, int n, int h, int w, int r) {
    require(m.size() == static_cast<std::size_t>(n) * h * w, "mask size mismatch");
    const int k = smoothing_radius(w, r);
    std::vector<double> out(m.begin(), m.end());
    if (k == 0) return out;
    const double count = (2.0 * k + 1.0) * (2.0 * k + 1.0);
    std::vector<double> rows(static_cast<std::size_t>(h) * w);
    for (int b = 0; b < n; ++b) {
        const double* src = m.data() + static_cast<std::size_t>(b) * h * w;
        // Horizontal then vertical sums; clamping each axis equals replicate padding in 2D.
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double s = 0.0;
                for (int p = -k; p <= k; ++p) s += src[static_cast<std::size_t>(i) * w + std::clamp(j + p, 0, w - 1)];
                rows[static_cast<std::size_t>(i) * w + j] = s;
            }
        }
        double* dst = out.data() + static_cast<std::size_t>(b) * h * w;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double s = 0.0;
                for (int p = -k; p <= k; ++p) s += rows[static_cast<std::size_t>(std::clamp(i + p, 0, h - 1)) * w + j];
                dst[static_cast<std::size_t>(i) * w + j] = s / count;
            }
        }
    }
    return out;
}

std::vector<double> bootstrap_weights(std::span<const double> m_smooth, double beta) {
    std::vector<double> w(m_smooth.size());
    std::transform(m_smooth.begin(), m_smooth.end(), w.begin(), [beta](double v) { return std::exp(-beta * v); });
    return w;
}

double reconstruction_loss(std::span<const double> l, std::span<const double> weight) {
    require(l.size() == weight.size() && !l.empty(), "reconstruction loss shape mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < l.size(); ++k) s += weight[k] * l[k];
    return s / static_cast<double>(l.size());
}

double noise_loss(const BatchView& noise_estimate, std::span<const double> l, std::span<const double> weight) {
    const std::size_t count = static_cast<std::size_t>(noise_estimate.n) * noise_estimate.h * noise_estimate.w;
    require(noise_estimate.c >= 1 && l.size() == count && weight.size() == count, "noise loss shape mismatch");
    double s = 0.0;
    for (int b = 0; b < noise_estimate.n; ++b)
        for (int i = 0; i < noise_estimate.h; ++i)
            for (int j = 0; j < noise_estimate.w; ++j) {
                const std::size_t k = pixel(noise_estimate, b, i, j);
                s += weight[k] * std::abs(noise_estimate.at(b, 0, i, j) - l[k]);
            }
    return s / (3.0 * static_cast<double>(count));
}

LossBundle total_loss(const BatchView& background, const BatchView& noise_estimate, const BatchView& frames,
                      const LossParams& params) {
    params.validate();
    require(noise_estimate.n == frames.n && noise_estimate.h == frames.h && noise_estimate.w == frames.w,
            "noise estimate shape mismatch");
    LossBundle out;
    out.n = frames.n;
    out.h = frames.h;
    out.w = frames.w;
    out.l = pixel_l1(background, frames);
    out.m = soft_mask(out.l, params.tau1);
    out.m_smooth = smooth_mask(out.m, out.n, out.h, out.w, params.r);
    if (params.l2 || params.no_bootstrap)
        out.weight.assign(out.l.size(), 1.0);
    else
        out.weight = bootstrap_weights(out.m_smooth, params.beta);

    if (params.l2) {
        double s = 0.0;
        for (int b = 0; b < frames.n; ++b)
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < frames.h; ++i)
                    for (int j = 0; j < frames.w; ++j) {
                        double d = static_cast<double>(background.at(b, c, i, j)) - frames.at(b, c, i, j);
                        s += d * d;
                    }
        out.reconstruction = s / static_cast<double>(out.l.size());
    } else {
        out.reconstruction = reconstruction_loss(out.l, out.weight);
    }
    out.noise = noise_loss(noise_estimate, out.l, out.weight);
    out.total = out.reconstruction + out.noise;
    return out;
}

LossGradient loss_gradient(const LossBundle& bundle, const BatchView& background, const BatchView& noise_estimate,
                           const BatchView& frames, const LossParams& params) {
    const int n = bundle.n, h = bundle.h, w = bundle.w;
    const double count = static_cast<double>(n) * h * w;
    LossGradient g;
    g.background.assign(static_cast<std::size_t>(n) * 3 * h * w, 0.0);
    g.noise.assign(static_cast<std::size_t>(n) * h * w, 0.0);
    for (int b = 0; b < n; ++b) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const std::size_t k = (static_cast<std::size_t>(b) * h + i) * w + j;
                const double wt = bundle.weight[k];
                for (int c = 0; c < 3; ++c) {
                    const double d = static_cast<double>(background.at(b, c, i, j)) - frames.at(b, c, i, j);
                    const std::size_t kc = ((static_cast<std::size_t>(b) * 3 + c) * h + i) * w + j;
                    if (params.l2)
                        g.background[kc] = 2.0 * d / count;
                    else
                        g.background[kc] = wt * static_cast<double>((d > 0) - (d < 0)) / count;
                }
                const double e = noise_estimate.at(b, 0, i, j) - bundle.l[k];
                g.noise[k] = wt * static_cast<double>((e > 0) - (e < 0)) / (3.0 * count);
            }
        }
    }
    return g;
}

double detached_loss(const BatchView& background, const BatchView& noise_estimate, const BatchView& frames,
                     std::span<const double> frozen_weight, std::span<const double> frozen_target,
                     const LossParams& params) {
    auto l = pixel_l1(background, frames);
    double rec = 0.0;
    if (params.l2) {
        for (int b = 0; b < frames.n; ++b)
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < frames.h; ++i)
                    for (int j = 0; j < frames.w; ++j) {
                        double d = static_cast<double>(background.at(b, c, i, j)) - frames.at(b, c, i, j);
                        rec += d * d;
                    }
        rec /= static_cast<double>(l.size());
    } else {
        rec = reconstruction_loss(l, frozen_weight);
    }
    return rec + noise_loss(noise_estimate, frozen_target, frozen_weight);
}

}  // namespace bgr::loss
