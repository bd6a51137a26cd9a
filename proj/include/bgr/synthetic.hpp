#pragma once

#include <bgr/image.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bgr::synth {

enum class BackgroundKind { Static, IlluminationDrift, Panning, NoiseField };

const char* to_string(BackgroundKind kind);
BackgroundKind background_kind_from_string(const std::string& name);

/// Axis-aligned rectangle bouncing off the frame borders.
struct MovingObject {
    int height = 10;
    int width = 10;
    std::array<float, 3> color{1.f, 0.f, 0.f};
    int x = 0;  // top-left corner at t = 0
    int y = 0;
    int vx = 1;  // pixels per frame
    int vy = 0;
};

struct SyntheticSpec {
    int height = 64;
    int width = 64;
    int frames = 200;
    BackgroundKind kind = BackgroundKind::Static;
    /// Noise standard deviation; for NoiseField it is the value reached at the right edge.
    double sigma = 0.02;
    /// Panning: base texture width and horizontal shift per frame.
    int base_width = 256;
    int pan_speed = 2;
    /// Illumination drift: relative amplitude and period in frames.
    double drift_amplitude = 0.2;
    int drift_period = 100;
    std::vector<MovingObject> objects;
    std::uint64_t seed = 1;

    void validate() const;
    std::string to_json() const;
    static SyntheticSpec from_json(const std::string& text);

    /// 64x64, 200 frames, one 10x10 square, sigma 0.02.
    static SyntheticSpec static_scene();
    /// Noise standard deviation ramping from 0 to 0.1 across the width, no objects.
    static SyntheticSpec noise_scene();
    /// Crop window panning at 2 px/frame over a textured base, one square.
    static SyntheticSpec panning_scene();
};

struct SyntheticData {
    FrameSequence sequence;
    std::vector<LabelFrame> labels;
    /// Noise-free background of each frame, objects removed.
    std::vector<Frame> backgrounds;
    /// Per-pixel noise standard deviation, shared by the three channels.
    FloatRaster sigma;
};

/// Smooth periodic texture with every channel in [0.2, 0.8].
Frame texture(int height, int width, std::uint64_t seed);

/// Window of the base image shifted right by speed * t pixels, wrapping horizontally.
Frame panning_crop(const Frame& base, long t, int speed, int height, int width);

/// Position of the object's top-left corner at frame t.
std::pair<int, int> object_position(const MovingObject& object, long t, int frame_height, int frame_width);

SyntheticData generate(const SyntheticSpec& spec);

/// Writes the generic on-disk layout under `sequence_dir`: input/in%06d.png,
/// groundtruth/gt%06d.png, temporalROI.txt, background/bg%06d.png, sigma.pfm
/// and spec.json.
void materialize(const SyntheticSpec& spec, const SyntheticData& data, const std::filesystem::path& sequence_dir);

}  // namespace bgr::synth
