#pragma once

#include <bgr/arch.hpp>
#include <bgr/image.hpp>

#include <span>
#include <vector>

namespace bgr::seg {

struct ThresholdParams {
    double alpha1 = 96.0 / 255.0;  // illumination factor
    double alpha2 = 7.0;           // noise factor
    bool postprocess = true;
};

struct SegmentationResult {
    Frame background;
    FloatRaster noise;      // estimated background noise
    DoubleRaster error;      // per-pixel L1 error
    DoubleRaster threshold;  // pixel-adaptive threshold
    BinaryMask raw;
    BinaryMask mask;  // after post-processing
};

/// Mean absolute value over the three channels and all pixels.
double illumination(const Frame& background);

/// tau = alpha1 * illumination + alpha2 * noise.
DoubleRaster threshold_map(double illumination, const FloatRaster& noise, const ThresholdParams& params);

/// 1 where error > threshold (strict).
BinaryMask raw_mask(const DoubleRaster& error, const DoubleRaster& threshold);

// Square structuring elements of odd size; pixels outside the image count as
// background for both operators.
BinaryMask dilate(const BinaryMask& mask, int size);
BinaryMask erode(const BinaryMask& mask, int size);
BinaryMask close(const BinaryMask& mask, int size);
BinaryMask open(const BinaryMask& mask, int size);

inline constexpr int kClosingSize = 5;
inline constexpr int kOpeningSize = 7;

/// 5x5 closing followed by 7x7 opening.
BinaryMask morph_close_open(const BinaryMask& mask);

/// Sum over channels of |background - frame|.
DoubleRaster l1_error(const Frame& background, const Frame& frame);

/// Segments one frame given its reconstruction.
SegmentationResult segment_frame(const Frame& frame, Frame background, FloatRaster noise,
                                 const ThresholdParams& params);

/// Runs the model over the frames in batches and segments each frame.
std::vector<SegmentationResult> segment_sequence(const arch::Autoencoder& model, std::span<const Frame> frames,
                                                 const ThresholdParams& params, std::size_t batch = 32);

}  // namespace bgr::seg
