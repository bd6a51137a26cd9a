#include <bgr/trainer.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>

namespace bgr::train {

namespace {

constexpr char kMagic[8] = {'B', 'G', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint64_t kSamplerSalt = 0x9e3779b97f4a7c15ull;

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

void log_step(const TrainConfig& config, const StepStats& s) {
    if (!config.log || config.log_every <= 0) return;
    if ((s.iteration + 1) % config.log_every != 0) return;
    *config.log << "iter=" << s.iteration + 1 << " loss=" << s.loss << " l_rec=" << s.reconstruction
                << " l_noise=" << s.noise << " lr=" << s.lr << std::endl;
}

void run_iterations(arch::Autoencoder& model, Adam& adam, EpochSampler& sampler, const FrameSequence& seq,
                    long begin, long end, long total, const TrainConfig& config, std::vector<StepStats>& history) {
    arch::Workspace ws;
    std::vector<const Frame*> batch;
    for (long it = begin; it < end; ++it) {
        batch.clear();
        for (auto idx : sampler.next_batch()) batch.push_back(&seq.frames[idx]);
        const double lr = learning_rate_at(it, total, config);
        StepStats s = train_step(model, adam, batch, config.loss, lr, ws);
        s.iteration = it;
        log_step(config, s);
        history.push_back(s);
    }
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("truncated checkpoint");
    return v;
}

}  // namespace

TrainConfig TrainConfig::non_video_profile() {
    TrainConfig c;
    c.learning_rate = 2e-3;
    c.batch_size = 128;
    c.n_complex = 500000;
    return c;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (batch_size < 1) throw Error("batch size must be >= 1");
    if (n_simple < complexity.n_eval) throw Error("n_simple must be >= n_eval");
    if (n_complex < 1 || e_complex < 0) throw Error("invalid complex schedule");
    if (!(lr_drop_fraction >= 0.0 && lr_drop_fraction <= 1.0) || !(lr_drop_factor > 0.0))
        throw Error("invalid learning-rate drop");
    if (channel_divisor < 1) throw Error("channel divisor must be >= 1");
    loss.validate();
    complexity.validate();
}

IterationPlan plan_iterations(std::size_t frame_count, arch::Complexity verdict, const TrainConfig& config) {
    if (verdict == arch::Complexity::Simple)
        return {config.n_simple, std::max(0L, config.n_simple - config.complexity.n_eval)};
    const long per_epoch = static_cast<long>((frame_count + config.batch_size - 1) / config.batch_size);
    const long total = std::max(config.n_complex, config.e_complex * per_epoch);
    return {total, total};
}

long lr_drop_iteration(long total, const TrainConfig& config) {
    return static_cast<long>(std::floor(config.lr_drop_fraction * static_cast<double>(total)));
}

double learning_rate_at(long iteration, long total, const TrainConfig& config) {
    return iteration < lr_drop_iteration(total, config) ? config.learning_rate
                                                         : config.learning_rate / config.lr_drop_factor;
}

EpochSampler::EpochSampler(std::size_t frame_count, std::size_t batch_size, std::uint64_t seed)
    : frame_count_(frame_count), batch_size_(batch_size), rng_(seed ^ kSamplerSalt), order_(frame_count) {
    if (frame_count == 0 || batch_size == 0) throw Error("sampler needs frames and a positive batch size");
    reshuffle();
}

void EpochSampler::reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

std::vector<std::size_t> EpochSampler::next_batch() {
    if (cursor_ >= frame_count_) {
        reshuffle();
        ++epoch_;
    }
    const std::size_t end = std::min(frame_count_, cursor_ + batch_size_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return out;
}

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.f), v_(size, 0.f) {}

void Adam::step(std::span<float> params, std::span<const float> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw Error("optimizer size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float step = static_cast<float>(lr / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const float g = grads[i];
        m_[i] = b1 * m_[i] + (1.f - b1) * g;
        v_[i] = b2 * v_[i] + (1.f - b2) * g * g;
        params[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
}

loss::LossBundle evaluate_loss(const arch::Autoencoder& model, std::span<const Frame* const> batch,
                               const loss::LossParams& params) {
    arch::Workspace ws;
    nn::Tensor input = arch::pack_frames(batch);
    const nn::Tensor& out = model.forward(input, ws);
    const int n = out.n, h = out.h, w = out.w;
    return loss::total_loss(loss::BatchView::cnhw(out.v.data(), n, 3, h, w),
                            loss::BatchView::cnhw_channel(out.v.data(), 3, n, h, w),
                            loss::BatchView::cnhw(input.v.data(), n, 3, h, w), params);
}

StepStats train_step(arch::Autoencoder& model, Adam& optimizer, std::span<const Frame* const> batch,
                     const loss::LossParams& params, double lr, arch::Workspace& ws) {
    nn::Tensor input = arch::pack_frames(batch);
    const nn::Tensor& out = model.forward(input, ws);
    const int n = out.n, h = out.h, w = out.w;
    const auto background = loss::BatchView::cnhw(out.v.data(), n, 3, h, w);
    const auto noise = loss::BatchView::cnhw_channel(out.v.data(), 3, n, h, w);
    const auto frames = loss::BatchView::cnhw(input.v.data(), n, 3, h, w);
    auto bundle = loss::total_loss(background, noise, frames, params);
    auto grad = loss::loss_gradient(bundle, background, noise, frames, params);

    nn::Tensor dout(4, n, h, w);
    const std::size_t hw = dout.image();
    for (int b = 0; b < n; ++b) {
        for (int c = 0; c < 3; ++c) {
            const double* src = grad.background.data() + (static_cast<std::size_t>(b) * 3 + c) * hw;
            std::transform(src, src + hw, dout.channel(c) + b * hw, [](double v) { return static_cast<float>(v); });
        }
        const double* src = grad.noise.data() + static_cast<std::size_t>(b) * hw;
        std::transform(src, src + hw, dout.channel(3) + b * hw, [](double v) { return static_cast<float>(v); });
    }
    model.zero_gradients();
    model.backward(ws, dout);
    optimizer.step(model.parameters(), model.gradients(), lr);
    return {optimizer.steps(), bundle.total, bundle.reconstruction, bundle.noise, lr};
}

arch::Preset default_preset(int h, int w) {
    if (h == 64 && w == 64) return arch::Preset::Image64;
    if (h == 128 && w == 128) return arch::Preset::Image128;
    return arch::Preset::Video;
}

arch::ArchitectureSpec plan_for(int h, int w, arch::Complexity complexity, const TrainConfig& config) {
    if (config.planner) return config.planner(h, w, complexity);
    return arch::plan_architecture(h, w, complexity, config.preset.value_or(default_preset(h, w)),
                                   config.channel_divisor);
}

TrainedModel probe(const FrameSequence& sequence, const TrainConfig& config) {
    config.validate();
    sequence.validate();
    TrainedModel out{arch::Autoencoder(plan_for(sequence.height(), sequence.width(), arch::Complexity::Simple, config),
                                       config.seed),
                     {}, 0, 0, {}};
    Adam adam(out.model.parameter_count());
    EpochSampler sampler(sequence.size(), config.batch_size, config.seed);
    run_iterations(out.model, adam, sampler, sequence, 0, config.complexity.n_eval, config.n_simple, config,
                   out.history);
    out.probe_iterations = config.complexity.n_eval;
    out.iterations = config.complexity.n_eval;
    out.verdict = complexity::assess_complexity(sequence, out.model, config.complexity);
    return out;
}

TrainedModel train(const FrameSequence& sequence, const TrainConfig& config) {
    config.validate();
    sequence.validate();
    const int h = sequence.height(), w = sequence.width();

    arch::Autoencoder model(plan_for(h, w, arch::Complexity::Simple, config), config.seed);
    Adam adam(model.parameter_count());
    EpochSampler sampler(sequence.size(), config.batch_size, config.seed);
    std::vector<StepStats> history;
    const long n_eval = config.complexity.n_eval;
    run_iterations(model, adam, sampler, sequence, 0, n_eval, config.n_simple, config, history);

    auto verdict = complexity::assess_complexity(sequence, model, config.complexity);
    if (config.log)
        *config.log << "phase=probe iterations=" << n_eval << " mbar=" << verdict.mean_soft_mask
                    << " verdict=" << arch::to_string(verdict.verdict) << std::endl;
    const IterationPlan plan = plan_iterations(sequence.size(), verdict.verdict, config);

    if (verdict.verdict == arch::Complexity::Simple) {
        run_iterations(model, adam, sampler, sequence, n_eval, plan.total, plan.total, config, history);
        return {std::move(model), verdict, plan.total, n_eval, std::move(history)};
    }

    // The probe model and its optimizer state are dropped.
    const std::uint64_t seed = config.seed + 1;
    arch::Autoencoder fresh(plan_for(h, w, arch::Complexity::Complex, config), seed);
    Adam fresh_adam(fresh.parameter_count());
    EpochSampler fresh_sampler(sequence.size(), config.batch_size, seed);
    std::vector<StepStats> fresh_history;
    run_iterations(fresh, fresh_adam, fresh_sampler, sequence, 0, plan.total, plan.total, config, fresh_history);
    return {std::move(fresh), verdict, plan.total, n_eval, std::move(fresh_history)};
}

std::vector<StepStats> continue_training(arch::Autoencoder& model, const FrameSequence& sequence, long iterations,
                                         const TrainConfig& config) {
    config.validate();
    sequence.validate();
    if (sequence.height() != model.spec().height || sequence.width() != model.spec().width)
        throw Error("sequence size does not match the model");
    Adam adam(model.parameter_count());
    EpochSampler sampler(sequence.size(), config.batch_size, config.seed);
    std::vector<StepStats> history;
    run_iterations(model, adam, sampler, sequence, 0, iterations, iterations, config, history);
    return history;
}

void save_checkpoint(const arch::Autoencoder& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    const std::string text = model.spec().to_text();
    auto params = model.parameters();
    out.write(kMagic, sizeof kMagic);
    write_pod(out, model.spec().hash());
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_pod(out, static_cast<std::uint64_t>(params.size()));
    out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
    write_pod(out, fnv1a(params.data(), params.size_bytes()));
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

arch::Autoencoder load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw Error("not a checkpoint file: " + path.string());
    const auto stored_hash = read_pod<std::uint64_t>(in);
    const auto text_size = read_pod<std::uint64_t>(in);
    if (text_size > (std::uint64_t{1} << 24)) throw Error("corrupt checkpoint header");
    std::string text(text_size, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(text_size))) throw Error("truncated checkpoint");
    auto spec = arch::ArchitectureSpec::from_text(text);
    if (spec.hash() != stored_hash) throw Error("checkpoint architecture hash mismatch");
    if (expected_hash && *expected_hash != stored_hash) throw Error("checkpoint was saved for another architecture");

    arch::Autoencoder model(std::move(spec), 0);
    const auto count = read_pod<std::uint64_t>(in);
    if (count != model.parameter_count()) throw Error("checkpoint parameter count mismatch");
    auto params = model.parameters();
    if (!in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(params.size_bytes())))
        throw Error("truncated checkpoint");
    const auto checksum = read_pod<std::uint64_t>(in);
    if (checksum != fnv1a(params.data(), params.size_bytes())) throw Error("checkpoint parameter checksum mismatch");
    return model;
}

}  // namespace bgr::train
