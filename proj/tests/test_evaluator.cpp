#include <bgr/evaluator.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace bgr;
using namespace bgr::eval;

namespace {

LabelFrame labels(int h, int w, std::initializer_list<Label> values) {
    LabelFrame f(h, w);
    f.data.assign(values);
    return f;
}

BinaryMask mask(int h, int w, std::initializer_list<std::uint8_t> values) {
    BinaryMask m(h, w);
    m.data.assign(values);
    return m;
}

constexpr Label F = Label::Foreground;
constexpr Label B = Label::Background;

}  // namespace

TEST(Accumulate, ToyTwoByTwo) {
    ConfusionCounts c;
    accumulate(mask(2, 2, {1, 1, 0, 1}), labels(2, 2, {F, B, B, F}), c);
    EXPECT_EQ(c, (ConfusionCounts{2, 1, 1, 0}));
    EXPECT_EQ(c.evaluated(), 4u);
}

TEST(Accumulate, PerfectAndExcluded) {
    ConfusionCounts c;
    accumulate(mask(1, 4, {1, 0, 0, 1}), labels(1, 4, {F, B, B, F}), c);
    EXPECT_EQ(c.fp, 0u);
    EXPECT_EQ(c.fn, 0u);
    ConfusionCounts skipped;
    accumulate(mask(1, 3, {1, 0, 1}), labels(1, 3, {Label::Excluded, Label::OutOfRoi, Label::Unlabeled}), skipped);
    EXPECT_EQ(skipped, ConfusionCounts{});
    EXPECT_THROW(accumulate(BinaryMask(2, 2), LabelFrame(2, 3), c), Error);
}

TEST(FMeasure, Values) {
    EXPECT_NEAR(*f_measure({8, 0, 1, 1}), 8.0 / 9.0, 1e-15);
    EXPECT_EQ(*f_measure({5, 3, 0, 0}), 1.0);
    EXPECT_EQ(*f_measure({0, 3, 4, 0}), 0.0);
    EXPECT_FALSE(f_measure({0, 10, 0, 0}).has_value());
}

// Frame 1 has a single missed pixel, frame 2 many hits: averaging per-frame F
// gives (0 + 1) / 2 while the sequence total gives 10 / 10.5.
TEST(FMeasure, SequenceLevelDiffersFromFrameAverage) {
    std::vector<BinaryMask> pred{mask(1, 1, {0}), BinaryMask(1, 10, 1)};
    std::vector<LabelFrame> gt{labels(1, 1, {F}), LabelFrame(1, 10, F)};
    auto total = count_sequence(pred, gt);
    EXPECT_NEAR(*f_measure(total), 10.0 / 10.5, 1e-15);

    double frame_mean = 0.0;
    for (int t = 0; t < 2; ++t) {
        ConfusionCounts c;
        accumulate(pred[t], gt[t], c);
        frame_mean += *f_measure(c) / 2;
    }
    EXPECT_NEAR(frame_mean, 0.5, 1e-15);
    EXPECT_GT(std::abs(*f_measure(total) - frame_mean), 0.4);
}

TEST(CountSequence, LinearPermutationInvariantAndMatchesOracle) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> code(0, 4);
    std::vector<BinaryMask> pred;
    std::vector<LabelFrame> gt;
    std::vector<std::vector<int>> pred_codes, gt_codes;
    const Label table[5] = {B, F, Label::Excluded, Label::OutOfRoi, Label::Unlabeled};
    for (int t = 0; t < 12; ++t) {
        auto p = oracle::random_mask(rng, 9, 11, 0.3);
        LabelFrame g(9, 11);
        std::vector<int> gc;
        for (auto& v : g.data) {
            const int k = code(rng);
            v = table[k];
            gc.push_back(k);
        }
        pred_codes.emplace_back(p.data.begin(), p.data.end());
        gt_codes.push_back(gc);
        pred.push_back(p);
        gt.push_back(g);
    }
    auto all = count_sequence(pred, gt);
    EXPECT_NEAR(*f_measure(all), oracle::f_from_pixels(pred_codes, gt_codes), 1e-12);

    auto head = count_sequence(std::span(pred).first(5), std::span(gt).first(5));
    auto tail = count_sequence(std::span(pred).subspan(5), std::span(gt).subspan(5));
    EXPECT_EQ(head + tail, all);

    std::vector<std::size_t> order(12);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<BinaryMask> p2;
    std::vector<LabelFrame> g2;
    for (auto k : order) {
        p2.push_back(pred[k]);
        g2.push_back(gt[k]);
    }
    EXPECT_EQ(count_sequence(p2, g2), all);
    EXPECT_THROW(count_sequence(std::span(pred).first(3), std::span(gt).first(4)), Error);
}

TEST(Aggregate, MeansOfMeans) {
    auto one = aggregate({{"v", 0.9}}, {{"cat", {"v"}}});
    EXPECT_NEAR(*one.overall, 0.9, 1e-15);

    auto r = aggregate({{"a1", 0.8}, {"a2", 1.0}, {"b1", 0.6}}, {{"A", {"a1", "a2"}}, {"B", {"b1"}}});
    ASSERT_EQ(r.categories.size(), 2u);
    EXPECT_NEAR(*r.categories[0].f, 0.9, 1e-15);
    EXPECT_NEAR(*r.categories[1].f, 0.6, 1e-15);
    EXPECT_NEAR(*r.overall, 0.75, 1e-15);
}

TEST(Aggregate, UndefinedVideosExcludedWithNote) {
    auto r = aggregate({{"a1", 0.8}, {"a2", std::nullopt}}, {{"A", {"a1", "a2"}}});
    EXPECT_NEAR(*r.overall, 0.8, 1e-15);
    ASSERT_EQ(r.notes.size(), 1u);
    EXPECT_NE(r.notes[0].find("a2"), std::string::npos);
}

TEST(Aggregate, Errors) {
    EXPECT_THROW(aggregate({{"a", 0.5}}, {{"A", {}}}), Error);
    EXPECT_THROW(aggregate({{"a", 0.5}}, {{"A", {"missing"}}}), Error);
    EXPECT_THROW(aggregate({{"a", 0.5}}, {}), Error);
}

TEST(Report, FilesWritten) {
    auto dir = std::filesystem::temp_directory_path() / "bgr_eval_report_test";
    std::filesystem::remove_all(dir);
    std::vector<VideoResult> videos{{"highway", "baseline", {2, 1, 1, 0}, f_measure({2, 1, 1, 0})}};
    auto r = aggregate(videos);
    r.config_echo = "alpha2=7\n";
    write_report(r, dir, true);
    for (const char* name : {"results.tsv", "summary.txt", "config.txt", "categories.png"})
        EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
    std::ifstream in(dir / "results.tsv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(row, "video\tbaseline\thighway\t2\t1\t0\t1\t0.8000");
    std::filesystem::remove_all(dir);
}
