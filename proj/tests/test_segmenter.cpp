#include <bgr/segmenter.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <random>

using namespace bgr;
using namespace bgr::seg;

namespace {

Frame constant_channels(int h, int w, float r, float g, float b) {
    Frame f(h, w);
    const float v[3] = {r, g, b};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) f.at(c, i, j) = v[c];
    return f;
}

int count(const BinaryMask& m) { return static_cast<int>(std::count(m.data.begin(), m.data.end(), 1)); }

}  // namespace

TEST(Illumination, Values) {
    EXPECT_EQ(illumination(Frame(4, 5, 0.f)), 0.0);
    EXPECT_NEAR(illumination(Frame(4, 5, 1.f)), 1.0, 1e-12);
    EXPECT_NEAR(illumination(constant_channels(3, 7, 0.2f, 0.4f, 0.6f)), 0.4, 1e-7);
}

TEST(ThresholdMap, Values) {
    ThresholdParams p;
    auto zero = threshold_map(0.5, FloatRaster(2, 2, 0.f), p);
    for (double v : zero.data) EXPECT_NEAR(v, 96.0 / 255.0 * 0.5, 1e-9);
    EXPECT_NEAR(zero.data[0], 0.18824, 1e-5);

    FloatRaster noise(1, 1, 0.02f);
    auto tau = threshold_map(0.5, noise, p);
    EXPECT_NEAR(tau.data[0], 96.0 / 255.0 * 0.5 + 7.0 * double(0.02f), 1e-9);
    EXPECT_NEAR(tau.data[0], 0.32824, 1e-5);

    p.alpha2 = 0.0;
    FloatRaster varied(2, 3);
    varied.data = {0.f, 0.1f, 0.5f, 0.9f, 0.3f, 0.7f};
    auto flat = threshold_map(0.3, varied, p);
    for (double v : flat.data) EXPECT_EQ(v, flat.data[0]);
}

TEST(RawMask, StrictInequality) {
    DoubleRaster l(1, 2), tau(1, 2, 0.3);
    l.data = {0.1, 0.5};
    EXPECT_EQ(raw_mask(l, tau).data, (std::vector<std::uint8_t>{0, 1}));
    EXPECT_EQ(count(raw_mask(DoubleRaster(3, 3, 0.0), DoubleRaster(3, 3, 0.0))), 0);
    EXPECT_EQ(count(raw_mask(DoubleRaster(3, 3, 0.25), DoubleRaster(3, 3, 0.25))), 0);
    EXPECT_THROW(raw_mask(DoubleRaster(2, 2), DoubleRaster(2, 3)), Error);
}

TEST(RawMask, RaisingAlphasNeverAddsForeground) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DoubleRaster l(16, 16);
    FloatRaster noise(16, 16);
    for (auto& v : l.data) v = 1.5 * u(rng);
    for (auto& v : noise.data) v = static_cast<float>(0.1 * u(rng));
    ThresholdParams base;
    auto m0 = raw_mask(l, threshold_map(0.5, noise, base));
    for (auto [a1, a2] : {std::pair{0.6, 7.0}, std::pair{96.0 / 255.0, 9.0}, std::pair{1.0, 12.0}}) {
        ThresholdParams p{a1, a2, true};
        auto m1 = raw_mask(l, threshold_map(0.5, noise, p));
        for (std::size_t k = 0; k < m0.data.size(); ++k)
            if (!m0.data[k]) EXPECT_EQ(m1.data[k], 0);
    }
}

TEST(Morphology, EmptyStaysEmpty) { EXPECT_EQ(count(morph_close_open(BinaryMask(20, 20))), 0); }

TEST(Morphology, IsolatedPixelRemoved) {
    BinaryMask m(40, 40);
    m.at(20, 20) = 1;
    EXPECT_EQ(count(morph_close_open(m)), 0);
}

TEST(Morphology, HoleFilledSquareKept) {
    BinaryMask m(40, 40);
    for (int i = 10; i < 30; ++i)
        for (int j = 10; j < 30; ++j) m.at(i, j) = 1;
    m.at(19, 21) = 0;
    auto out = morph_close_open(m);
    BinaryMask square(40, 40);
    for (int i = 10; i < 30; ++i)
        for (int j = 10; j < 30; ++j) square.at(i, j) = 1;
    EXPECT_EQ(out, square);
    EXPECT_EQ(out, oracle::close_open(m));
}

TEST(Morphology, BorderCountsAsBackground) {
    BinaryMask full(9, 9, 1);
    auto eroded = erode(full, 3);
    EXPECT_EQ(eroded.at(0, 4), 0);
    EXPECT_EQ(eroded.at(4, 4), 1);
    EXPECT_EQ(count(eroded), 49);
}

TEST(Morphology, MatchesBruteForce) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        auto m = oracle::random_mask(rng, 32, 32, 0.1 + 0.02 * trial);
        for (int size : {3, 5, 7}) {
            ASSERT_EQ(dilate(m, size), oracle::dilate(m, size));
            ASSERT_EQ(erode(m, size), oracle::erode(m, size));
        }
        ASSERT_EQ(morph_close_open(m), oracle::close_open(m));
    }
}

TEST(Morphology, OpeningIdempotentAndResultInsideClosing) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        auto m = oracle::random_mask(rng, 32, 32, 0.5);
        auto once = open(m, 7);
        EXPECT_EQ(open(once, 7), once);
        auto closed = close(m, 5);
        auto final_mask = morph_close_open(m);
        for (std::size_t k = 0; k < m.data.size(); ++k)
            if (final_mask.data[k]) EXPECT_EQ(closed.data[k], 1);
    }
}

TEST(SegmentFrame, IdenticalFrameGivesEmptyMask) {
    Frame f = constant_channels(12, 12, 0.3f, 0.5f, 0.7f);
    auto r = segment_frame(f, f, FloatRaster(12, 12, 0.f), {});
    EXPECT_EQ(count(r.raw), 0);
    EXPECT_EQ(count(r.mask), 0);
}

TEST(SegmentFrame, PostprocessToggle) {
    Frame bg = constant_channels(20, 20, 0.5f, 0.5f, 0.5f);
    Frame f = bg;
    f.at(0, 5, 5) = 1.f;  // a lone speck
    f.at(1, 5, 5) = 1.f;
    f.at(2, 5, 5) = 1.f;
    ThresholdParams p;
    auto with = segment_frame(f, bg, FloatRaster(20, 20, 0.f), p);
    EXPECT_EQ(count(with.raw), 1);
    EXPECT_EQ(count(with.mask), 0);
    p.postprocess = false;
    auto without = segment_frame(f, bg, FloatRaster(20, 20, 0.f), p);
    EXPECT_EQ(without.mask, without.raw);
    EXPECT_EQ(count(without.mask), 1);
}

TEST(SegmentSequence, BatchSizeDoesNotMatter) {
    auto spec = arch::make_spec(8, 8, {{3, 2, 1}, {4, 2, 1}}, {3, 8, 16}, {{4, 2, 1}, {3, 2, 1}}, {16, 8, 4});
    arch::Autoencoder model(spec, 4);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    std::vector<Frame> frames(7, Frame(8, 8));
    for (auto& f : frames)
        for (auto& v : f.data) v = u(rng);
    auto a = segment_sequence(model, frames, {}, 32);
    auto b = segment_sequence(model, frames, {}, 3);
    ASSERT_EQ(a.size(), 7u);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].mask, b[k].mask);
        EXPECT_EQ(a[k].error, b[k].error);
        EXPECT_EQ(a[k].background, b[k].background);
    }
}
