#include <bgr/trainer.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace bgr;
using namespace bgr::train;

namespace {

arch::ArchitectureSpec small_spec(int h, int w, arch::Complexity complexity) {
    const int width = complexity == arch::Complexity::Complex ? 12 : 8;
    return arch::make_spec(h, w, {{3, 2, 1}, {4, 2, 1}}, {3, width, 16}, {{4, 2, 1}, {3, 2, 1}}, {16, width, 4});
}

TrainConfig small_config() {
    TrainConfig c;
    c.learning_rate = 5e-3;
    c.batch_size = 4;
    c.n_simple = 60;
    c.n_complex = 30;
    c.e_complex = 1;
    c.complexity.n_eval = 40;
    c.complexity.b_eval = 8;
    c.planner = small_spec;
    c.seed = 11;
    return c;
}

FrameSequence textured_sequence(int frames, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.f, 0.02f);
    Frame bg(8, 8);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) bg.at(c, i, j) = 0.5f + 0.3f * std::sin(0.7f * i + 1.3f * j + c);
    FrameSequence seq;
    for (int t = 0; t < frames; ++t) {
        Frame f = bg;
        for (auto& v : f.data) v = std::clamp(v + noise(rng), 0.f, 1.f);
        f.at(0, t % 6, (2 * t) % 6) = 1.f;
        seq.frames.push_back(f);
    }
    return seq;
}

}  // namespace

TEST(PlanIterations, SimpleAddsRemainderAfterProbe) {
    TrainConfig c;
    auto p = plan_iterations(1700, arch::Complexity::Simple, c);
    EXPECT_EQ(p.total, 2500);
    EXPECT_EQ(p.remaining, 500);
}

TEST(PlanIterations, ComplexUsesEpochFloor) {
    TrainConfig c;
    auto small = plan_iterations(1700, arch::Complexity::Complex, c);
    EXPECT_EQ(small.total, 24000);
    EXPECT_EQ(small.remaining, 24000);
    // ceil(107817 / 32) = 3370 batches per epoch, 20 epochs
    EXPECT_EQ(plan_iterations(107817, arch::Complexity::Complex, c).total, 67400);
}

TEST(LearningRate, SingleDropAtFraction) {
    TrainConfig c;
    EXPECT_EQ(lr_drop_iteration(2500, c), 2000);
    EXPECT_EQ(lr_drop_iteration(24000, c), 19200);
    EXPECT_EQ(lr_drop_iteration(7, c), 5);  // floor(5.6)
    int changes = 0;
    for (long it = 1; it < 2500; ++it)
        if (learning_rate_at(it, 2500, c) != learning_rate_at(it - 1, 2500, c)) ++changes;
    EXPECT_EQ(changes, 1);
    EXPECT_EQ(learning_rate_at(1999, 2500, c), 5e-4);
    EXPECT_NEAR(learning_rate_at(2000, 2500, c), 5e-5, 1e-18);
}

TEST(EpochSampler, EachEpochIsAPermutation) {
    EpochSampler s(10, 4, 3);
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::multiset<std::size_t> seen;
        std::vector<std::size_t> sizes;
        for (int b = 0; b < 3; ++b) {
            auto batch = s.next_batch();
            sizes.push_back(batch.size());
            seen.insert(batch.begin(), batch.end());
        }
        EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
        ASSERT_EQ(seen.size(), 10u);
        for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(seen.count(k), 1u);
    }
    EpochSampler a(50, 8, 9), b(50, 8, 9);
    for (int k = 0; k < 20; ++k) EXPECT_EQ(a.next_batch(), b.next_batch());
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Adam adam(3);
    std::vector<float> p{1.f, -2.f, 0.5f};
    const std::vector<float> g{0.3f, -4.f, 0.f};
    adam.step(p, g, 0.01);
    EXPECT_NEAR(p[0], 0.99f, 1e-6);
    EXPECT_NEAR(p[1], -1.99f, 1e-6);
    EXPECT_EQ(p[2], 0.5f);
    EXPECT_EQ(adam.steps(), 1);
}

TEST(TrainConfig, Validation) {
    EXPECT_NO_THROW(TrainConfig{}.validate());
    auto nv = TrainConfig::non_video_profile();
    EXPECT_EQ(nv.learning_rate, 2e-3);
    EXPECT_EQ(nv.batch_size, 128u);
    EXPECT_EQ(nv.n_complex, 500000);
    TrainConfig c;
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.learning_rate = -1.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.lr_drop_fraction = 1.5;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.complexity.n_eval = c.n_simple + 1;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Checkpoint, RoundTripAndCorruption) {
    const fs::path dir = fs::temp_directory_path() / "bgr_ckpt_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    arch::Autoencoder model(small_spec(8, 8, arch::Complexity::Simple), 5);
    save_checkpoint(model, dir / "m.ckpt");
    auto back = load_checkpoint(dir / "m.ckpt", model.spec().hash());
    ASSERT_EQ(back.parameter_count(), model.parameter_count());
    auto a = model.parameters(), b = back.parameters();
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 1e-6);

    EXPECT_THROW(load_checkpoint(dir / "m.ckpt", small_spec(8, 8, arch::Complexity::Complex).hash()), Error);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);

    std::string bytes;
    {
        std::ifstream in(dir / "m.ckpt", std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        bytes = ss.str();
    }
    std::string flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;
    std::ofstream(dir / "flip.ckpt", std::ios::binary) << flipped;
    EXPECT_THROW(load_checkpoint(dir / "flip.ckpt"), Error);
    std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 9);
    EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), Error);
    fs::remove_all(dir);
}

TEST(TrainStep, LossDecreasesOnFixedBatch) {
    auto seq = textured_sequence(8, 1);
    arch::Autoencoder model(small_spec(8, 8, arch::Complexity::Simple), 2);
    Adam adam(model.parameter_count());
    arch::Workspace ws;
    std::vector<const Frame*> batch;
    for (const auto& f : seq.frames) batch.push_back(&f);
    loss::LossParams p;
    // The weighted loss can grow while the weights recover from the initial
    // all-foreground soft mask; the plain pixel error has to shrink.
    auto pixel_error = [&] {
        auto b = evaluate_loss(model, batch, p);
        return std::accumulate(b.l.begin(), b.l.end(), 0.0) / static_cast<double>(b.l.size());
    };
    const double before = pixel_error();
    for (int k = 0; k < 80; ++k) train_step(model, adam, batch, p, 5e-3, ws);
    EXPECT_LT(pixel_error(), 0.5 * before);
}

TEST(Train, DeterministicForSeed) {
    auto seq = textured_sequence(12, 2);
    auto c = small_config();
    auto a = train::train(seq, c);
    auto b = train::train(seq, c);
    EXPECT_EQ(a.model.parameters().size(), b.model.parameters().size());
    EXPECT_TRUE(std::equal(a.model.parameters().begin(), a.model.parameters().end(), b.model.parameters().begin()));
    EXPECT_EQ(a.verdict.mean_soft_mask, b.verdict.mean_soft_mask);
    c.seed = 12;
    auto other = train::train(seq, c);
    EXPECT_FALSE(
        std::equal(a.model.parameters().begin(), a.model.parameters().end(), other.model.parameters().begin()));
}

TEST(Train, SimplePathContinuesProbeModel) {
    auto seq = textured_sequence(12, 3);
    auto c = small_config();
    auto r = train::train(seq, c);
    ASSERT_EQ(r.verdict.verdict, arch::Complexity::Simple);
    EXPECT_EQ(r.probe_iterations, 40);
    EXPECT_EQ(r.iterations, 60);
    ASSERT_FALSE(r.history.empty());
    EXPECT_EQ(r.history.size(), 60u);
    EXPECT_EQ(r.history.back().iteration, 59);
}

TEST(Train, ForcedComplexBuildsFreshModel) {
    auto seq = textured_sequence(12, 4);
    auto c = small_config();
    c.complexity.tau0 = 1e-9;
    std::ostringstream log;
    c.log = &log;
    c.log_every = 10;
    auto r = train::train(seq, c);
    EXPECT_EQ(r.verdict.verdict, arch::Complexity::Complex);
    EXPECT_EQ(r.model.spec().hash(), small_spec(8, 8, arch::Complexity::Complex).hash());
    EXPECT_EQ(r.iterations, 30);
    EXPECT_NE(log.str().find("verdict=complex"), std::string::npos);
}
