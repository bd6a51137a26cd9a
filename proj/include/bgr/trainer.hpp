#pragma once

#include <bgr/arch.hpp>
#include <bgr/complexity.hpp>
#include <bgr/image.hpp>
#include <bgr/loss.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace bgr::train {

using Planner = std::function<arch::ArchitectureSpec(int h, int w, arch::Complexity complexity)>;

struct TrainConfig {
    double learning_rate = 5e-4;
    std::size_t batch_size = 32;
    long n_simple = 2500;
    long n_complex = 24000;
    long e_complex = 20;           // minimum epochs on the complex path
    double lr_drop_fraction = 0.8;
    double lr_drop_factor = 10.0;
    std::uint64_t seed = 0;
    /// Preset override; by default 64x64 -> image64, 128x128 -> image128, else video.
    std::optional<arch::Preset> preset;
    int channel_divisor = 1;
    /// Replaces the preset planner entirely when set.
    Planner planner;

    loss::LossParams loss;
    complexity::ComplexityParams complexity;

    long log_every = 100;
    std::ostream* log = nullptr;

    /// Profile for small non-video image sets: lr 2e-3, batch 128, 500000 complex iterations.
    static TrainConfig non_video_profile();
    void validate() const;
};

struct IterationPlan {
    long total = 0;      // length of the final schedule
    long remaining = 0;  // iterations still to run after the probe
};

/// Simple: n_simple in total, the probe iterations included. Complex:
/// max(n_complex, e_complex * ceil(frames / batch)) fresh iterations.
IterationPlan plan_iterations(std::size_t frame_count, arch::Complexity verdict, const TrainConfig& config);

/// Learning rate at a zero-based iteration of a schedule of `total` iterations:
/// divided once when the iteration reaches floor(fraction * total).
double learning_rate_at(long iteration, long total, const TrainConfig& config);
long lr_drop_iteration(long total, const TrainConfig& config);

/// Endless stream of shuffled frame indices; each epoch is a permutation and
/// the last partial batch of an epoch is returned as-is.
class EpochSampler {
public:
    EpochSampler(std::size_t frame_count, std::size_t batch_size, std::uint64_t seed);
    std::vector<std::size_t> next_batch();
    std::size_t epoch() const { return epoch_; }

private:
    void reshuffle();

    std::size_t frame_count_;
    std::size_t batch_size_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
};

class Adam {
public:
    explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::span<float> params, std::span<const float> grads, double lr);
    long steps() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::vector<float> m_, v_;
    long t_ = 0;
};

struct StepStats {
    long iteration = 0;
    double loss = 0.0;
    double reconstruction = 0.0;
    double noise = 0.0;
    double lr = 0.0;
};

/// One optimizer step on a batch of frames.
StepStats train_step(arch::Autoencoder& model, Adam& optimizer, std::span<const Frame* const> batch,
                     const loss::LossParams& params, double lr, arch::Workspace& ws);

/// Loss of a fixed batch without updating anything.
loss::LossBundle evaluate_loss(const arch::Autoencoder& model, std::span<const Frame* const> batch,
                               const loss::LossParams& params);

struct TrainedModel {
    arch::Autoencoder model;
    complexity::ComplexityVerdict verdict;
    long iterations = 0;  // iterations in the final model's schedule
    long probe_iterations = 0;
    std::vector<StepStats> history;  // final model's schedule
};

arch::Preset default_preset(int h, int w);
arch::ArchitectureSpec plan_for(int h, int w, arch::Complexity complexity, const TrainConfig& config);

/// Probe training, complexity decision, then continuation (simple) or a fresh
/// complex model. Deterministic for a fixed seed.
TrainedModel train(const FrameSequence& sequence, const TrainConfig& config);

/// Runs only the probe phase and returns the probe model with its verdict.
TrainedModel probe(const FrameSequence& sequence, const TrainConfig& config);

/// Further iterations on an existing model with fresh optimizer state.
std::vector<StepStats> continue_training(arch::Autoencoder& model, const FrameSequence& sequence, long iterations,
                                         const TrainConfig& config);

void save_checkpoint(const arch::Autoencoder& model, const std::filesystem::path& path);
/// Throws on corrupt files, and on a spec hash different from `expected_hash` when given.
arch::Autoencoder load_checkpoint(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> expected_hash = std::nullopt);

}  // namespace bgr::train
