#include <bgr/segmenter.hpp>

#include <algorithm>
#include <cmath>

namespace bgr::seg {

namespace {

void check_size(int size) {
    if (size < 1 || size % 2 == 0) throw Error("structuring element size must be odd and positive");
}

// Count of foreground pixels in the window [j-r, j+r] of a line, clipped to the line.
// `all` selects erosion (every tap inside and set) instead of dilation (any tap set).
void line_pass(const std::uint8_t* src, std::uint8_t* dst, int len, std::ptrdiff_t step, int radius, bool all,
               std::vector<int>& prefix) {
    prefix.assign(len + 1, 0);
    for (int t = 0; t < len; ++t) prefix[t + 1] = prefix[t] + (src[t * step] ? 1 : 0);
    for (int t = 0; t < len; ++t) {
        const int lo = t - radius, hi = t + radius;
        const int count = prefix[std::min(hi, len - 1) + 1] - prefix[std::max(lo, 0)];
        if (all)
            dst[t * step] = (lo >= 0 && hi < len && count == 2 * radius + 1) ? 1 : 0;
        else
            dst[t * step] = count > 0 ? 1 : 0;
    }
}

BinaryMask separable(const BinaryMask& mask, int size, bool all) {
    check_size(size);
    const int r = size / 2;
    BinaryMask rows(mask.h, mask.w), out(mask.h, mask.w);
    std::vector<int> prefix;
    for (int i = 0; i < mask.h; ++i)
        line_pass(&mask.data[static_cast<std::size_t>(i) * mask.w], &rows.data[static_cast<std::size_t>(i) * mask.w],
                  mask.w, 1, r, all, prefix);
    for (int j = 0; j < mask.w; ++j)
        line_pass(&rows.data[j], &out.data[j], mask.h, mask.w, r, all, prefix);
    return out;
}

}  // namespace

double illumination(const Frame& background) {
    double s = 0.0;
    for (float v : background.data) s += std::abs(static_cast<double>(v));
    return background.data.empty() ? 0.0 : s / static_cast<double>(background.data.size());
}

DoubleRaster threshold_map(double illumination, const FloatRaster& noise, const ThresholdParams& params) {
    DoubleRaster tau(noise.h, noise.w);
    const double base = params.alpha1 * illumination;
    for (std::size_t k = 0; k < noise.size(); ++k) tau.data[k] = base + params.alpha2 * noise.data[k];
    return tau;
}

BinaryMask raw_mask(const DoubleRaster& error, const DoubleRaster& threshold) {
    if (!error.same_shape(threshold.h, threshold.w)) throw Error("error and threshold differ in shape");
    BinaryMask m(error.h, error.w);
    for (std::size_t k = 0; k < error.size(); ++k) m.data[k] = error.data[k] > threshold.data[k] ? 1 : 0;
    return m;
}

BinaryMask dilate(const BinaryMask& mask, int size) { return separable(mask, size, false); }
BinaryMask erode(const BinaryMask& mask, int size) { return separable(mask, size, true); }
BinaryMask close(const BinaryMask& mask, int size) { return erode(dilate(mask, size), size); }
BinaryMask open(const BinaryMask& mask, int size) { return dilate(erode(mask, size), size); }

BinaryMask morph_close_open(const BinaryMask& mask) { return open(close(mask, kClosingSize), kOpeningSize); }

DoubleRaster l1_error(const Frame& background, const Frame& frame) {
    if (background.h != frame.h || background.w != frame.w) throw Error("background and frame differ in size");
    DoubleRaster l(frame.h, frame.w);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < frame.h; ++i)
            for (int j = 0; j < frame.w; ++j)
                l.at(i, j) += std::abs(static_cast<double>(background.at(c, i, j)) - frame.at(c, i, j));
    return l;
}

SegmentationResult segment_frame(const Frame& frame, Frame background, FloatRaster noise,
                                 const ThresholdParams& params) {
    if (!noise.same_shape(frame.h, frame.w)) throw Error("noise map and frame differ in size");
    SegmentationResult r;
    r.error = l1_error(background, frame);
    r.threshold = threshold_map(illumination(background), noise, params);
    r.raw = raw_mask(r.error, r.threshold);
    r.mask = params.postprocess ? morph_close_open(r.raw) : r.raw;
    r.background = std::move(background);
    r.noise = std::move(noise);
    return r;
}

std::vector<SegmentationResult> segment_sequence(const arch::Autoencoder& model, std::span<const Frame> frames,
                                                 const ThresholdParams& params, std::size_t batch) {
    std::vector<SegmentationResult> out;
    out.reserve(frames.size());
    batch = std::max<std::size_t>(1, batch);
    for (std::size_t b0 = 0; b0 < frames.size(); b0 += batch) {
        auto chunk = frames.subspan(b0, std::min(batch, frames.size() - b0));
        auto rec = model.reconstruct(chunk);
        for (std::size_t k = 0; k < chunk.size(); ++k)
            out.push_back(segment_frame(chunk[k], std::move(rec.backgrounds[k]), std::move(rec.noise[k]), params));
    }
    return out;
}

}  // namespace bgr::seg
