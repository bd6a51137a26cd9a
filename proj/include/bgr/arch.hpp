#pragma once

#include <bgr/image.hpp>
#include <bgr/nn.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bgr::arch {

enum class Preset { Video, Image64, Image128, Custom };
enum class Complexity { Simple, Complex };

const char* to_string(Preset preset);
const char* to_string(Complexity complexity);
Preset preset_from_string(const std::string& name);
Complexity complexity_from_string(const std::string& name);

inline constexpr int kLatentChannels = 16;
inline constexpr int kPositionalChannels = 2;
inline constexpr int kOutputChannels = 4;
inline constexpr int kMaxGroups = 8;

/// One encoder or decoder block. Channel counts exclude the positional channels
/// that are appended to every layer input.
struct LayerSpec {
    int in_channels = 0;
    int out_channels = 0;
    nn::ConvGeometry geometry;
    int in_h = 0, in_w = 0;
    /// Realized output size; for decoder layers this is the mirrored encoder size.
    int out_h = 0, out_w = 0;
    /// Group-norm groups; 0 on the sigmoid head.
    int groups = 0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchitectureSpec {
    Preset preset = Preset::Video;
    Complexity complexity = Complexity::Simple;
    int height = 0;
    int width = 0;
    /// Hidden channel counts above 16 are divided by this (1 reproduces the
    /// published channel tables).
    int channel_divisor = 1;
    std::vector<LayerSpec> encoder;
    std::vector<LayerSpec> decoder;

    int latent_channels() const { return encoder.empty() ? 0 : encoder.back().out_channels; }
    /// (3, c1, ..., latent)
    std::vector<int> encoder_channels() const;
    /// (latent, d1, ..., 4)
    std::vector<int> decoder_channels() const;

    std::string to_text() const;
    static ArchitectureSpec from_text(const std::string& text);
    /// FNV-1a of to_text().
    std::uint64_t hash() const;

    friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Group count rule: 8 groups if it divides the channel count, else 1.
/// With a spatial size, the count is lowered further until every group holds
/// at least kMinGroupElements values per sample. A group of two values
/// normalizes to exactly +-1 and passes no gradient.
inline constexpr int kMinGroupElements = 16;
int group_count(int channels, int spatial = kMinGroupElements);

/// Channel count after applying the desk-scale divisor.
int scaled_channels(int channels, int divisor);

/// Layer plan for the preset. Video: stride-3 blocks, 5 layers up to
/// max(h,w) = 405 and 6 layers up to 1000. Image64/Image128: fixed stride-2
/// stacks. Throws bgr::Error for sizes outside the preset's range.
ArchitectureSpec plan_architecture(int h, int w, Complexity complexity, Preset preset, int channel_divisor = 1);

/// Builds a spec from explicit per-layer geometry and channel lists; encoder
/// spatial sizes follow the floor recurrence and decoder targets mirror them.
ArchitectureSpec make_spec(int h, int w, const std::vector<nn::ConvGeometry>& encoder_geometry,
                           const std::vector<int>& encoder_channels,
                           const std::vector<nn::ConvGeometry>& decoder_geometry,
                           const std::vector<int>& decoder_channels, Preset preset = Preset::Custom,
                           Complexity complexity = Complexity::Simple);

/// Horizontal and vertical coordinate channels spanning [-1, 1]; a dimension
/// of size 1 maps to 0.
struct PositionalGrids {
    FloatRaster horizontal;
    FloatRaster vertical;
};
PositionalGrids positional_grids(int h, int w);

/// Per-layer activations kept for the backward pass.
struct LayerCache {
    nn::Tensor input;  // layer input with positional channels appended
    nn::Tensor xhat;   // normalized conv output
    nn::Tensor pre;    // pre-activation (after affine norm)
    nn::Tensor out;    // activation output
    nn::GroupNormCache norm;
};

struct Workspace {
    std::vector<LayerCache> layers;
};

/// Background reconstructions and noise maps for a batch.
struct Reconstruction {
    std::vector<Frame> backgrounds;
    std::vector<FloatRaster> noise;
};

/// Fully convolutional autoencoder with a 4-channel sigmoid output
/// (3 background channels + 1 noise channel).
class Autoencoder {
public:
    Autoencoder(ArchitectureSpec spec, std::uint64_t seed);

    const ArchitectureSpec& spec() const { return spec_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<float> parameters() { return params_; }
    std::span<const float> parameters() const { return params_; }
    std::span<float> gradients() { return grads_; }
    std::span<const float> gradients() const { return grads_; }
    void zero_gradients();

    /// Input (3, n, h, w) channel-major; returns (4, n, h, w) sigmoid outputs.
    /// The workspace keeps what backward() needs.
    const nn::Tensor& forward(const nn::Tensor& input, Workspace& ws) const;
    /// Accumulates parameter gradients for d(loss)/d(output).
    void backward(Workspace& ws, const nn::Tensor& grad_output);

    /// Inference on frames; splits channels 1-3 and 4.
    Reconstruction reconstruct(std::span<const Frame> frames) const;
    Reconstruction reconstruct(std::span<const Frame* const> frames) const;

private:
    struct Slot {
        std::size_t weight = 0, bias = 0, gamma = 0, beta = 0;
        std::size_t weight_size = 0;
    };
    void layer_forward(std::size_t index, const LayerSpec& layer, bool transposed, const nn::Tensor& x,
                       LayerCache& cache) const;
    void layer_backward(std::size_t index, const LayerSpec& layer, bool transposed, LayerCache& cache,
                        nn::Tensor& grad, nn::Tensor* grad_input);

    ArchitectureSpec spec_;
    std::vector<Slot> slots_;
    std::vector<float> params_;
    std::vector<float> grads_;
};

/// Packs frames into a (3, n, h, w) channel-major tensor.
nn::Tensor pack_frames(std::span<const Frame> frames);
nn::Tensor pack_frames(std::span<const Frame* const> frames);

}  // namespace bgr::arch
