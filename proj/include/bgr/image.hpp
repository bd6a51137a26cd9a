#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgr {

/// Row-major single-channel raster.
template <typename T>
struct Raster {
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Raster() = default;
    Raster(int height, int width, T fill = T{})
        : h(height), w(width), data(static_cast<std::size_t>(height) * width, fill) {}

    T& at(int i, int j) { return data[static_cast<std::size_t>(i) * w + j]; }
    const T& at(int i, int j) const { return data[static_cast<std::size_t>(i) * w + j]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(int height, int width) const { return h == height && w == width; }

    friend bool operator==(const Raster&, const Raster&) = default;
};

using FloatRaster = Raster<float>;
using DoubleRaster = Raster<double>;

/// Binary mask, values are 0 or 1.
using BinaryMask = Raster<std::uint8_t>;

/// Three-channel planar (CHW) color image with values in [0,1].
struct Frame {
    static constexpr int kChannels = 3;

    int h = 0;
    int w = 0;
    std::vector<float> data;

    Frame() = default;
    Frame(int height, int width, float fill = 0.f)
        : h(height), w(width), data(static_cast<std::size_t>(kChannels) * height * width, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    float& at(int c, int i, int j) { return data[c * plane() + static_cast<std::size_t>(i) * w + j]; }
    float at(int c, int i, int j) const { return data[c * plane() + static_cast<std::size_t>(i) * w + j]; }

    friend bool operator==(const Frame&, const Frame&) = default;
};

struct FrameSequence {
    std::vector<Frame> frames;
    std::string source_id;

    std::size_t size() const { return frames.size(); }
    int height() const { return frames.empty() ? 0 : frames.front().h; }
    int width() const { return frames.empty() ? 0 : frames.front().w; }

    /// Throws if the sequence is empty or resolutions differ.
    void validate() const;
};

enum class Label : std::uint8_t { Background, Foreground, Excluded, OutOfRoi, Unlabeled };

using LabelFrame = Raster<Label>;

const char* to_string(Label label);
Label label_from_string(const std::string& name);

/// Raised by every module for malformed inputs (bad shapes, unreadable files, ...).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void FrameSequence::validate() const {
    if (frames.empty()) throw Error("frame sequence '" + source_id + "' is empty");
    for (const auto& f : frames) {
        if (f.h != frames.front().h || f.w != frames.front().w)
            throw Error("frame sequence '" + source_id + "' has inconsistent resolutions");
    }
}

}  // namespace bgr
