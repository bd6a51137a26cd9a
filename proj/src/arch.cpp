#include <bgr/arch.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace bgr::arch {

namespace {

using nlohmann::json;

struct ChannelRow {
    std::vector<int> encoder;
    std::vector<int> decoder;
};

// Channel tables (without positional channels) for the stride-3 video preset.
ChannelRow video_channels(Complexity complexity, bool large) {
    if (complexity == Complexity::Simple) {
        if (!large) return {{3, 64, 160, 160, 32, 16}, {16, 32, 256, 256, 144, 4}};
        return {{3, 64, 160, 160, 160, 32, 16}, {16, 32, 256, 512, 256, 144, 4}};
    }
    if (!large) return {{3, 64, 160, 160, 16, 16}, {16, 16, 640, 640, 144, 4}};
    return {{3, 64, 160, 160, 160, 16, 16}, {16, 16, 640, 1280, 640, 144, 4}};
}

std::vector<nn::ConvGeometry> stride2_stack(int five_by_five) {
    std::vector<nn::ConvGeometry> g(five_by_five, nn::ConvGeometry{5, 2, 2});
    g.push_back({4, 2, 1});
    g.push_back({2, 1, 0});
    return g;
}

json layer_to_json(const LayerSpec& l) {
    return {{"in_channels", l.in_channels}, {"out_channels", l.out_channels},
            {"kernel", l.geometry.kernel},  {"stride", l.geometry.stride},
            {"padding", l.geometry.padding}, {"in_h", l.in_h},
            {"in_w", l.in_w},               {"out_h", l.out_h},
            {"out_w", l.out_w},             {"groups", l.groups}};
}

LayerSpec layer_from_json(const json& j) {
    LayerSpec l;
    l.in_channels = j.at("in_channels").get<int>();
    l.out_channels = j.at("out_channels").get<int>();
    l.geometry = {j.at("kernel").get<int>(), j.at("stride").get<int>(), j.at("padding").get<int>()};
    l.in_h = j.at("in_h").get<int>();
    l.in_w = j.at("in_w").get<int>();
    l.out_h = j.at("out_h").get<int>();
    l.out_w = j.at("out_w").get<int>();
    l.groups = j.at("groups").get<int>();
    return l;
}

float grid_value(int index, int size) {
    if (size == 1) return 0.f;
    return static_cast<float>(-1.0 + 2.0 * index / (size - 1));
}

}  // namespace

const char* to_string(Preset preset) {
    switch (preset) {
        case Preset::Video: return "video_stride3";
        case Preset::Image64: return "image64_stride2";
        case Preset::Image128: return "image128_stride2";
        case Preset::Custom: return "custom";
    }
    return "custom";
}

const char* to_string(Complexity complexity) {
    return complexity == Complexity::Simple ? "simple" : "complex";
}

Preset preset_from_string(const std::string& name) {
    for (Preset p : {Preset::Video, Preset::Image64, Preset::Image128, Preset::Custom})
        if (name == to_string(p)) return p;
    if (name == "video") return Preset::Video;
    if (name == "image64") return Preset::Image64;
    if (name == "image128") return Preset::Image128;
    throw Error("unknown architecture preset '" + name + "'");
}

Complexity complexity_from_string(const std::string& name) {
    if (name == "simple") return Complexity::Simple;
    if (name == "complex") return Complexity::Complex;
    throw Error("unknown complexity '" + name + "'");
}

std::vector<int> ArchitectureSpec::encoder_channels() const {
    std::vector<int> out;
    if (encoder.empty()) return out;
    out.push_back(encoder.front().in_channels);
    for (const auto& l : encoder) out.push_back(l.out_channels);
    return out;
}

std::vector<int> ArchitectureSpec::decoder_channels() const {
    std::vector<int> out;
    if (decoder.empty()) return out;
    out.push_back(decoder.front().in_channels);
    for (const auto& l : decoder) out.push_back(l.out_channels);
    return out;
}

std::string ArchitectureSpec::to_text() const {
    json j;
    j["preset"] = to_string(preset);
    j["complexity"] = to_string(complexity);
    j["height"] = height;
    j["width"] = width;
    j["channel_divisor"] = channel_divisor;
    j["encoder"] = json::array();
    for (const auto& l : encoder) j["encoder"].push_back(layer_to_json(l));
    j["decoder"] = json::array();
    for (const auto& l : decoder) j["decoder"].push_back(layer_to_json(l));
    return j.dump(2);
}

ArchitectureSpec ArchitectureSpec::from_text(const std::string& text) {
    try {
        json j = json::parse(text);
        ArchitectureSpec s;
        s.preset = preset_from_string(j.at("preset").get<std::string>());
        s.complexity = complexity_from_string(j.at("complexity").get<std::string>());
        s.height = j.at("height").get<int>();
        s.width = j.at("width").get<int>();
        s.channel_divisor = j.at("channel_divisor").get<int>();
        for (const auto& l : j.at("encoder")) s.encoder.push_back(layer_from_json(l));
        for (const auto& l : j.at("decoder")) s.decoder.push_back(layer_from_json(l));
        if (s.encoder.empty() || s.decoder.empty()) throw Error("empty layer list");
        return s;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed architecture text: ") + e.what());
    }
}

std::uint64_t ArchitectureSpec::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_text()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

int group_count(int channels, int spatial) {
    int g = std::min(kMaxGroups, channels);
    if (channels % g != 0) return 1;
    while (g > 1 && (channels / g) * spatial < kMinGroupElements) {
        do --g;
        while (channels % g != 0);
    }
    return g;
}

int scaled_channels(int channels, int divisor) {
    if (divisor <= 1 || channels <= kLatentChannels) return channels;
    return std::max(kLatentChannels, channels / divisor);
}

ArchitectureSpec make_spec(int h, int w, const std::vector<nn::ConvGeometry>& encoder_geometry,
                           const std::vector<int>& encoder_channels,
                           const std::vector<nn::ConvGeometry>& decoder_geometry,
                           const std::vector<int>& decoder_channels, Preset preset, Complexity complexity) {
    const std::size_t n = encoder_geometry.size();
    if (n == 0 || decoder_geometry.size() != n || encoder_channels.size() != n + 1 ||
        decoder_channels.size() != n + 1)
        throw Error("inconsistent layer lists");
    if (encoder_channels.back() != decoder_channels.front()) throw Error("latent channel mismatch");
    if (h < 1 || w < 1) throw Error("image size must be positive");

    ArchitectureSpec s;
    s.preset = preset;
    s.complexity = complexity;
    s.height = h;
    s.width = w;

    std::vector<std::pair<int, int>> sizes{{h, w}};
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = encoder_geometry[i];
        auto [ih, iw] = sizes.back();
        int oh = g.conv_output(ih), ow = g.conv_output(iw);
        if (oh < 1 || ow < 1) throw Error("image too small for the encoder stack");
        LayerSpec l;
        l.in_channels = encoder_channels[i];
        l.out_channels = encoder_channels[i + 1];
        l.geometry = g;
        l.in_h = ih;
        l.in_w = iw;
        l.out_h = oh;
        l.out_w = ow;
        l.groups = group_count(l.out_channels, oh * ow);
        s.encoder.push_back(l);
        sizes.emplace_back(oh, ow);
    }
    for (std::size_t i = 0; i < n; ++i) {
        LayerSpec l;
        l.in_channels = decoder_channels[i];
        l.out_channels = decoder_channels[i + 1];
        l.geometry = decoder_geometry[i];
        std::tie(l.in_h, l.in_w) = sizes[n - i];
        std::tie(l.out_h, l.out_w) = sizes[n - 1 - i];
        l.groups = i + 1 == n ? 0 : group_count(l.out_channels, l.out_h * l.out_w);
        s.decoder.push_back(l);
    }
    return s;
}

ArchitectureSpec plan_architecture(int h, int w, Complexity complexity, Preset preset, int channel_divisor) {
    if (channel_divisor < 1) throw Error("channel divisor must be >= 1");
    std::vector<nn::ConvGeometry> enc_geo;
    std::vector<int> enc_ch, dec_ch;
    switch (preset) {
        case Preset::Video: {
            const int m = std::max(h, w);
            if (m < 200 || m > 1000 || std::min(h, w) < 1)
                throw Error("video preset needs max(h,w) in [200,1000], got " + std::to_string(h) + "x" +
                            std::to_string(w));
            const bool large = m > 405;
            auto row = video_channels(complexity, large);
            enc_ch = row.encoder;
            dec_ch = row.decoder;
            enc_geo.assign(large ? 6 : 5, nn::ConvGeometry{5, 3, 2});
            break;
        }
        case Preset::Image64:
            if (h != 64 || w != 64) throw Error("image64 preset needs 64x64 frames");
            enc_ch = {3, 64, 160, 320, 160, 16, 16};
            dec_ch = {16, 16, 640, 1280, 640, 144, 4};
            enc_geo = stride2_stack(4);
            break;
        case Preset::Image128:
            if (h != 128 || w != 128) throw Error("image128 preset needs 128x128 frames");
            enc_ch = {3, 64, 320, 640, 640, 320, 16, 16};
            dec_ch = {16, 16, 320, 640, 1280, 640, 144, 4};
            enc_geo = stride2_stack(5);
            break;
        case Preset::Custom:
            throw Error("custom specs are built with make_spec");
    }
    for (auto& c : enc_ch) c = scaled_channels(c, channel_divisor);
    for (auto& c : dec_ch) c = scaled_channels(c, channel_divisor);
    std::vector<nn::ConvGeometry> dec_geo(enc_geo.rbegin(), enc_geo.rend());
    auto spec = make_spec(h, w, enc_geo, enc_ch, dec_geo, dec_ch, preset, complexity);
    spec.channel_divisor = channel_divisor;
    return spec;
}

PositionalGrids positional_grids(int h, int w) {
    if (h < 1 || w < 1) throw Error("grid size must be positive");
    PositionalGrids g{FloatRaster(h, w), FloatRaster(h, w)};
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            g.horizontal.at(i, j) = grid_value(j, w);
            g.vertical.at(i, j) = grid_value(i, h);
        }
    }
    return g;
}

Autoencoder::Autoencoder(ArchitectureSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    if (spec_.encoder.empty() || spec_.decoder.size() != spec_.encoder.size())
        throw Error("architecture must have matching encoder and decoder depth");
    std::mt19937_64 rng(seed);
    auto add_layer = [&](const LayerSpec& l, bool transposed) {
        Slot slot;
        const int cin = l.in_channels + kPositionalChannels;
        const int k = l.geometry.kernel;
        slot.weight_size = static_cast<std::size_t>(cin) * l.out_channels * k * k;
        slot.weight = params_.size();
        double fan_in = static_cast<double>(cin) * k * k;
        if (transposed) fan_in /= static_cast<double>(l.geometry.stride) * l.geometry.stride;
        const float bound = static_cast<float>(1.0 / std::sqrt(std::max(1.0, fan_in)));
        std::uniform_real_distribution<float> dist(-bound, bound);
        for (std::size_t i = 0; i < slot.weight_size; ++i) params_.push_back(dist(rng));
        slot.bias = params_.size();
        for (int i = 0; i < l.out_channels; ++i) params_.push_back(dist(rng));
        if (l.groups > 0) {
            slot.gamma = params_.size();
            params_.insert(params_.end(), l.out_channels, 1.f);
            slot.beta = params_.size();
            params_.insert(params_.end(), l.out_channels, 0.f);
        }
        slots_.push_back(slot);
    };
    for (const auto& l : spec_.encoder) add_layer(l, false);
    for (const auto& l : spec_.decoder) add_layer(l, true);
    grads_.assign(params_.size(), 0.f);
}

void Autoencoder::zero_gradients() { std::fill(grads_.begin(), grads_.end(), 0.f); }

void Autoencoder::layer_forward(std::size_t index, const LayerSpec& layer, bool transposed, const nn::Tensor& x,
                                LayerCache& cache) const {
    if (x.c != layer.in_channels || x.h != layer.in_h || x.w != layer.in_w)
        throw Error("layer " + std::to_string(index) + " input shape mismatch");
    const Slot& slot = slots_[index];
    const int n = x.n;
    const std::size_t hw = x.image();

    cache.input.reshape(layer.in_channels + kPositionalChannels, n, layer.in_h, layer.in_w);
    std::copy(x.v.begin(), x.v.end(), cache.input.v.begin());
    auto grids = positional_grids(layer.in_h, layer.in_w);
    for (int b = 0; b < n; ++b) {
        std::copy(grids.horizontal.data.begin(), grids.horizontal.data.end(),
                  cache.input.channel(layer.in_channels) + b * hw);
        std::copy(grids.vertical.data.begin(), grids.vertical.data.end(),
                  cache.input.channel(layer.in_channels + 1) + b * hw);
    }

    std::span<const float> p(params_);
    nn::Tensor z(layer.out_channels, n, layer.out_h, layer.out_w);
    auto weight = p.subspan(slot.weight, slot.weight_size);
    auto bias = p.subspan(slot.bias, layer.out_channels);
    if (transposed)
        nn::tconv_forward(cache.input, weight, bias, layer.geometry, z);
    else
        nn::conv_forward(cache.input, weight, bias, layer.geometry, z);

    if (layer.groups > 0) {
        nn::group_norm_forward(z, layer.groups, p.subspan(slot.gamma, layer.out_channels),
                               p.subspan(slot.beta, layer.out_channels), cache.xhat, cache.pre, cache.norm);
        nn::celu_forward(cache.pre, cache.out);
    } else {
        nn::sigmoid_forward(z, cache.out);
    }
}

const nn::Tensor& Autoencoder::forward(const nn::Tensor& input, Workspace& ws) const {
    const std::size_t depth = spec_.encoder.size();
    ws.layers.resize(2 * depth);
    const nn::Tensor* x = &input;
    for (std::size_t i = 0; i < depth; ++i) {
        layer_forward(i, spec_.encoder[i], false, *x, ws.layers[i]);
        x = &ws.layers[i].out;
    }
    for (std::size_t i = 0; i < depth; ++i) {
        layer_forward(depth + i, spec_.decoder[i], true, *x, ws.layers[depth + i]);
        x = &ws.layers[depth + i].out;
    }
    return *x;
}

void Autoencoder::layer_backward(std::size_t index, const LayerSpec& layer, bool transposed, LayerCache& cache,
                                 nn::Tensor& grad, nn::Tensor* grad_input) {
    const Slot& slot = slots_[index];
    std::span<const float> p(params_);
    std::span<float> g(grads_);
    nn::Tensor dz;
    if (layer.groups > 0) {
        nn::celu_backward(cache.pre, grad);
        nn::group_norm_backward(cache.xhat, layer.groups, p.subspan(slot.gamma, layer.out_channels), cache.norm,
                                grad, g.subspan(slot.gamma, layer.out_channels),
                                g.subspan(slot.beta, layer.out_channels), dz);
    } else {
        nn::sigmoid_backward(cache.out, grad);
        dz = std::move(grad);
    }
    auto weight = p.subspan(slot.weight, slot.weight_size);
    auto dweight = g.subspan(slot.weight, slot.weight_size);
    auto dbias = g.subspan(slot.bias, layer.out_channels);
    if (transposed)
        nn::tconv_backward(cache.input, weight, layer.geometry, dz, dweight, dbias, grad_input);
    else
        nn::conv_backward(cache.input, weight, layer.geometry, dz, dweight, dbias, grad_input);
    if (grad_input) {
        // Positional channels are the trailing channel planes.
        grad_input->c = layer.in_channels;
        grad_input->v.resize(static_cast<std::size_t>(layer.in_channels) * grad_input->plane());
    }
}

void Autoencoder::backward(Workspace& ws, const nn::Tensor& grad_output) {
    const std::size_t depth = spec_.encoder.size();
    if (ws.layers.size() != 2 * depth) throw Error("backward called without a matching forward");
    const nn::Tensor& out = ws.layers.back().out;
    if (grad_output.c != out.c || grad_output.n != out.n || grad_output.h != out.h || grad_output.w != out.w)
        throw Error("output gradient shape mismatch");
    nn::Tensor grad = grad_output;
    for (std::size_t k = 2 * depth; k-- > 0;) {
        const bool transposed = k >= depth;
        const LayerSpec& layer = transposed ? spec_.decoder[k - depth] : spec_.encoder[k];
        nn::Tensor next;
        layer_backward(k, layer, transposed, ws.layers[k], grad, k > 0 ? &next : nullptr);
        grad = std::move(next);
    }
}

Reconstruction Autoencoder::reconstruct(std::span<const Frame> frames) const {
    std::vector<const Frame*> ptrs;
    ptrs.reserve(frames.size());
    for (const auto& f : frames) ptrs.push_back(&f);
    return reconstruct(std::span<const Frame* const>(ptrs));
}

Reconstruction Autoencoder::reconstruct(std::span<const Frame* const> frames) const {
    constexpr std::size_t kChunk = 32;
    Reconstruction rec;
    rec.backgrounds.reserve(frames.size());
    rec.noise.reserve(frames.size());
    Workspace ws;
    for (std::size_t b0 = 0; b0 < frames.size(); b0 += kChunk) {
        auto chunk = frames.subspan(b0, std::min(kChunk, frames.size() - b0));
        for (const Frame* f : chunk)
            if (f->h != spec_.height || f->w != spec_.width) throw Error("frame size does not match the model");
        const nn::Tensor& out = forward(pack_frames(chunk), ws);
        const std::size_t hw = out.image();
        for (int b = 0; b < out.n; ++b) {
            Frame bg(out.h, out.w);
            for (int c = 0; c < 3; ++c)
                std::copy_n(out.channel(c) + b * hw, hw, bg.data.begin() + static_cast<std::ptrdiff_t>(c * hw));
            FloatRaster noise(out.h, out.w);
            std::copy_n(out.channel(3) + b * hw, hw, noise.data.begin());
            rec.backgrounds.push_back(std::move(bg));
            rec.noise.push_back(std::move(noise));
        }
    }
    return rec;
}

nn::Tensor pack_frames(std::span<const Frame* const> frames) {
    if (frames.empty()) throw Error("empty batch");
    const int h = frames.front()->h, w = frames.front()->w;
    nn::Tensor t(3, static_cast<int>(frames.size()), h, w);
    const std::size_t hw = t.image();
    for (std::size_t b = 0; b < frames.size(); ++b) {
        const Frame& f = *frames[b];
        if (f.h != h || f.w != w) throw Error("batch frames differ in size");
        for (int c = 0; c < 3; ++c)
            std::copy_n(f.data.begin() + static_cast<std::ptrdiff_t>(c * hw), hw, t.channel(c) + b * hw);
    }
    return t;
}

nn::Tensor pack_frames(std::span<const Frame> frames) {
    std::vector<const Frame*> ptrs;
    ptrs.reserve(frames.size());
    for (const auto& f : frames) ptrs.push_back(&f);
    return pack_frames(std::span<const Frame* const>(ptrs));
}

}  // namespace bgr::arch
