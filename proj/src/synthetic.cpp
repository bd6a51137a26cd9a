#include <bgr/synthetic.hpp>

#include <bgr/data_io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace fs = std::filesystem;
using nlohmann::json;

namespace bgr::synth {

namespace {

constexpr int kTextureWaves = 4;
constexpr double kTextureAmplitude = 0.3;

// Position on a segment of length `span` for a point moving at constant speed
// and reflecting at both ends.
int bounce(long start, long velocity, long t, long span) {
    if (span <= 0) return 0;
    const long period = 2 * span;
    long p = (start + velocity * t) % period;
    if (p < 0) p += period;
    return static_cast<int>(p <= span ? p : period - p);
}

std::string numbered(const char* prefix, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%06d.%s", prefix, index, ext);
    return buf;
}

}  // namespace

const char* to_string(BackgroundKind kind) {
    switch (kind) {
        case BackgroundKind::Static: return "static";
        case BackgroundKind::IlluminationDrift: return "illumination_drift";
        case BackgroundKind::Panning: return "panning";
        case BackgroundKind::NoiseField: return "noise_field";
    }
    return "static";
}

BackgroundKind background_kind_from_string(const std::string& name) {
    for (auto k : {BackgroundKind::Static, BackgroundKind::IlluminationDrift, BackgroundKind::Panning,
                   BackgroundKind::NoiseField}) {
        if (name == to_string(k)) return k;
    }
    throw Error("unknown background kind '" + name + "'");
}

void SyntheticSpec::validate() const {
    if (height < 1 || width < 1 || frames < 1) throw Error("synthetic spec needs a positive size and frame count");
    if (!(sigma >= 0.0)) throw Error("sigma must be >= 0");
    if (kind == BackgroundKind::Panning && base_width < width) throw Error("panning base narrower than the frame");
    if (kind == BackgroundKind::IlluminationDrift && drift_period < 1) throw Error("drift period must be >= 1");
    for (const auto& o : objects) {
        if (o.height < 1 || o.width < 1) throw Error("object size must be positive");
        if (o.height > height || o.width > width) throw Error("object larger than the frame");
        for (float c : o.color)
            if (!(c >= 0.f && c <= 1.f)) throw Error("object color outside [0,1]");
    }
}

std::string SyntheticSpec::to_json() const {
    json objs = json::array();
    for (const auto& o : objects)
        objs.push_back({{"height", o.height}, {"width", o.width}, {"color", o.color}, {"x", o.x}, {"y", o.y},
                        {"vx", o.vx}, {"vy", o.vy}});
    json j = {{"height", height},
              {"width", width},
              {"frames", frames},
              {"kind", to_string(kind)},
              {"sigma", sigma},
              {"base_width", base_width},
              {"pan_speed", pan_speed},
              {"drift_amplitude", drift_amplitude},
              {"drift_period", drift_period},
              {"seed", seed},
              {"objects", objs}};
    return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
    SyntheticSpec s;
    s.objects.clear();
    try {
        const json j = json::parse(text);
        s.height = j.value("height", s.height);
        s.width = j.value("width", s.width);
        s.frames = j.value("frames", s.frames);
        s.kind = background_kind_from_string(j.value("kind", std::string(to_string(s.kind))));
        s.sigma = j.value("sigma", s.sigma);
        s.base_width = j.value("base_width", s.base_width);
        s.pan_speed = j.value("pan_speed", s.pan_speed);
        s.drift_amplitude = j.value("drift_amplitude", s.drift_amplitude);
        s.drift_period = j.value("drift_period", s.drift_period);
        s.seed = j.value("seed", s.seed);
        if (j.contains("objects")) {
            for (const auto& o : j.at("objects")) {
                MovingObject m;
                m.height = o.value("height", m.height);
                m.width = o.value("width", m.width);
                if (o.contains("color")) m.color = o.at("color").get<std::array<float, 3>>();
                m.x = o.value("x", m.x);
                m.y = o.value("y", m.y);
                m.vx = o.value("vx", m.vx);
                m.vy = o.value("vy", m.vy);
                s.objects.push_back(m);
            }
        }
    } catch (const json::exception& e) {
        throw Error(std::string("invalid synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

SyntheticSpec SyntheticSpec::static_scene() {
    SyntheticSpec s;
    s.objects = {MovingObject{10, 10, {1.f, 0.f, 0.f}, 3, 5, 2, 1}};
    return s;
}

SyntheticSpec SyntheticSpec::noise_scene() {
    SyntheticSpec s;
    s.kind = BackgroundKind::NoiseField;
    s.sigma = 0.1;
    s.seed = 2;
    return s;
}

SyntheticSpec SyntheticSpec::panning_scene() {
    SyntheticSpec s = static_scene();
    s.kind = BackgroundKind::Panning;
    s.pan_speed = 2;
    s.base_width = 256;
    s.seed = 3;
    return s;
}

Frame texture(int height, int width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    // Wave counts scale with the size so wide panning bases keep the same detail.
    std::uniform_int_distribution<int> fx(1, std::max(4, width / 16)), fy(0, std::max(3, height / 21));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi), weight(0.5, 1.0);
    Frame out(height, width);
    for (int c = 0; c < 3; ++c) {
        std::array<double, kTextureWaves> kx{}, ky{}, ph{}, amp{};
        double total = 0.0;
        for (int k = 0; k < kTextureWaves; ++k) {
            kx[k] = 2.0 * std::numbers::pi * fx(rng) / width;
            ky[k] = 2.0 * std::numbers::pi * fy(rng) / height;
            ph[k] = phase(rng);
            amp[k] = weight(rng);
            total += amp[k];
        }
        for (int i = 0; i < height; ++i) {
            for (int j = 0; j < width; ++j) {
                double v = 0.0;
                for (int k = 0; k < kTextureWaves; ++k) v += amp[k] * std::sin(kx[k] * j + ky[k] * i + ph[k]);
                out.at(c, i, j) = static_cast<float>(0.5 + kTextureAmplitude * v / total);
            }
        }
    }
    return out;
}

Frame panning_crop(const Frame& base, long t, int speed, int height, int width) {
    if (height > base.h || width > base.w) throw Error("crop window exceeds the base image");
    long offset = (static_cast<long>(speed) * t) % base.w;
    if (offset < 0) offset += base.w;
    Frame out(height, width);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < height; ++i)
            for (int j = 0; j < width; ++j)
                out.at(c, i, j) = base.at(c, i, static_cast<int>((offset + j) % base.w));
    return out;
}

std::pair<int, int> object_position(const MovingObject& o, long t, int frame_height, int frame_width) {
    return {bounce(o.y, o.vy, t, frame_height - o.height), bounce(o.x, o.vx, t, frame_width - o.width)};
}

SyntheticData generate(const SyntheticSpec& spec) {
    spec.validate();
    const int h = spec.height, w = spec.width;
    SyntheticData data;
    data.sequence.source_id = std::string("synthetic_") + to_string(spec.kind);
    data.sigma = FloatRaster(h, w, static_cast<float>(spec.sigma));
    if (spec.kind == BackgroundKind::NoiseField) {
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                data.sigma.at(i, j) = static_cast<float>(w > 1 ? spec.sigma * j / (w - 1) : 0.0);
    }

    const Frame base = spec.kind == BackgroundKind::Panning ? texture(h, spec.base_width, spec.seed)
                                                            : texture(h, w, spec.seed);
    std::mt19937_64 rng(spec.seed ^ 0x5eedull);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int t = 0; t < spec.frames; ++t) {
        Frame bg;
        switch (spec.kind) {
            case BackgroundKind::Panning: bg = panning_crop(base, t, spec.pan_speed, h, w); break;
            case BackgroundKind::IlluminationDrift: {
                bg = base;
                const double gain =
                    1.0 + spec.drift_amplitude * std::sin(2.0 * std::numbers::pi * t / spec.drift_period);
                for (auto& v : bg.data) v = static_cast<float>(std::clamp(v * gain, 0.0, 1.0));
                break;
            }
            default: bg = base; break;
        }

        Frame frame = bg;
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    const double s = data.sigma.at(i, j);
                    const double n = gauss(rng);  // drawn even for s == 0 to keep streams aligned
                    frame.at(c, i, j) = static_cast<float>(std::clamp(bg.at(c, i, j) + s * n, 0.0, 1.0));
                }
            }
        }

        LabelFrame labels(h, w, Label::Background);
        for (const auto& o : spec.objects) {
            auto [y, x] = object_position(o, t, h, w);
            for (int i = y; i < y + o.height; ++i) {
                for (int j = x; j < x + o.width; ++j) {
                    for (int c = 0; c < 3; ++c) frame.at(c, i, j) = o.color[c];
                    labels.at(i, j) = Label::Foreground;
                }
            }
        }

        data.sequence.frames.push_back(std::move(frame));
        data.labels.push_back(std::move(labels));
        data.backgrounds.push_back(std::move(bg));
    }
    return data;
}

void materialize(const SyntheticSpec& spec, const SyntheticData& data, const fs::path& sequence_dir) {
    const fs::path input = sequence_dir / "input", gt = sequence_dir / "groundtruth",
                   background = sequence_dir / "background";
    for (const auto& d : {input, gt, background}) fs::create_directories(d);
    for (std::size_t t = 0; t < data.sequence.size(); ++t) {
        const int index = static_cast<int>(t) + 1;
        io::write_frame(data.sequence.frames[t], input / numbered("in", index, "png"));
        io::write_frame(data.backgrounds[t], background / numbered("bg", index, "png"));
        const auto& labels = data.labels[t];
        BinaryMask mask(labels.h, labels.w);
        for (std::size_t k = 0; k < mask.data.size(); ++k) mask.data[k] = labels.data[k] == Label::Foreground;
        io::write_mask(mask, gt / numbered("gt", index, "png"));
    }
    {
        std::ofstream roi(sequence_dir / "temporalROI.txt", std::ios::trunc);
        roi << 1 << ' ' << data.sequence.size() << '\n';
        std::ofstream js(sequence_dir / "spec.json", std::ios::trunc);
        js << spec.to_json() << '\n';
        if (!roi || !js) throw Error("cannot write metadata in " + sequence_dir.string());
    }
    io::write_float_raster(data.sigma, sequence_dir / "sigma.pfm");
}

}  // namespace bgr::synth
