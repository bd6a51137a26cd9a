#include <bgr/cli.hpp>

#include <bgr/synthetic.hpp>

#include <gtest/gtest.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace bgr;
using namespace bgr::cli;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "bgr");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::set<std::string> lines(const std::string& text) {
    std::set<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.insert(l);
    return out;
}

std::set<std::string> changed_keys(const std::string& a, const std::string& b) {
    std::set<std::string> keys;
    auto la = lines(a), lb = lines(b);
    for (const auto* side : {&la, &lb})
        for (const auto& l : *side)
            if (!la.contains(l) || !lb.contains(l)) keys.insert(l.substr(0, l.find('=')));
    return keys;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() / ("bgr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    // Small synthetic sequence under root/data/<name>.
    fs::path synth(const std::string& name, int frames = 10) {
        auto spec = synth::SyntheticSpec::static_scene();
        spec.frames = frames;
        std::ofstream(root_ / "spec.json") << spec.to_json();
        auto r = run({"synth", "--spec", (root_ / "spec.json").string(), "-o", (root_ / "data" / name).string()});
        EXPECT_EQ(r.code, kExitOk) << r.err;
        return root_ / "data" / name;
    }

    fs::path root_;
};

}  // namespace

TEST_F(CliTest, EvalOfGroundTruthIsPerfect) {
    auto seq = synth("static");
    fs::create_directories(root_ / "pred/static");
    for (int t = 1; t <= 10; ++t)
        fs::copy_file(seq / "groundtruth" / cv::format("gt%06d.png", t), root_ / "pred/static" / cv::format("bin%06d.png", t));
    auto r = run({"eval", "--root", (root_ / "data").string(), "--pred-dir", (root_ / "pred").string(), "-o",
                  (root_ / "out").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("f=1\n"), std::string::npos) << r.out;
    const auto summary = slurp(root_ / "out/report/summary.txt");
    EXPECT_NE(summary.find("1.0000"), std::string::npos) << summary;
    EXPECT_NE(slurp(root_ / "out/report/config.txt").find("pred-dir="), std::string::npos);
}

TEST_F(CliTest, EvalOfEmptyMasksScoresZero) {
    synth("static");
    fs::create_directories(root_ / "pred/static");
    for (int t = 1; t <= 10; ++t)
        cv::imwrite((root_ / "pred/static" / cv::format("bin%06d.png", t)).string(), cv::Mat(64, 64, CV_8UC1, cv::Scalar(0)));
    auto r = run({"eval", "--root", (root_ / "data").string(), "--pred-dir", (root_ / "pred").string(), "-o",
                  (root_ / "out").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("tp=0 fp=0 fn=1000"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("f=0\n"), std::string::npos) << r.out;
}

TEST_F(CliTest, EvalToyTwoByTwo) {
    const fs::path seq = root_ / "data/baseline/toy";
    fs::create_directories(seq / "input");
    fs::create_directories(seq / "groundtruth");
    cv::imwrite((seq / "input/in000001.png").string(), cv::Mat(2, 2, CV_8UC3, cv::Scalar(10, 20, 30)));
    cv::Mat gt = (cv::Mat_<std::uint8_t>(2, 2) << 255, 0, 0, 255);
    cv::Mat pred = (cv::Mat_<std::uint8_t>(2, 2) << 255, 255, 0, 255);
    cv::imwrite((seq / "groundtruth/gt000001.png").string(), gt);
    fs::create_directories(root_ / "pred/baseline/toy");
    cv::imwrite((root_ / "pred/baseline/toy/bin000001.png").string(), pred);
    auto r = run({"eval", "--layout", "cdnet", "--root", (root_ / "data").string(), "--pred-dir",
                  (root_ / "pred").string(), "-o", (root_ / "out").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("tp=2 fp=1 fn=0 tn=1 f=0.8\n"), std::string::npos) << r.out;
    const auto table = slurp(root_ / "out/report/results.tsv");
    EXPECT_NE(table.find("video\tbaseline\ttoy\t2\t1\t0\t1\t0.8000"), std::string::npos) << table;
}

TEST_F(CliTest, MismatchedPredictionsAreStageFailures) {
    synth("static");
    fs::create_directories(root_ / "pred/static");
    for (int t = 1; t <= 9; ++t)
        cv::imwrite((root_ / "pred/static" / cv::format("bin%06d.png", t)).string(), cv::Mat(64, 64, CV_8UC1, cv::Scalar(0)));
    const std::vector<std::string> args{"eval", "--root", (root_ / "data").string(), "--pred-dir",
                                        (root_ / "pred").string(), "-o", (root_ / "out").string()};
    auto missing = run(args);
    EXPECT_EQ(missing.code, kExitStageFailure);
    EXPECT_NE(missing.err.find("no prediction"), std::string::npos) << missing.err;

    for (int t : {10, 11})
        cv::imwrite((root_ / "pred/static" / cv::format("bin%06d.png", t)).string(), cv::Mat(64, 64, CV_8UC1, cv::Scalar(0)));
    auto extra = run(args);
    EXPECT_EQ(extra.code, kExitStageFailure);
    EXPECT_NE(extra.err.find("without an input frame"), std::string::npos) << extra.err;
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
    EXPECT_EQ(run({"run", "--bogus-flag"}).code, kExitConfigError);
    EXPECT_EQ(run({}).code, kExitConfigError);
    EXPECT_EQ(run({"run", "--root", (root_ / "nowhere").string()}).code, kExitConfigError);
    EXPECT_EQ(run({"run", "--root", root_.string(), "--tau0", "0"}).code, kExitConfigError);
    EXPECT_EQ(run({"run", "--root", root_.string(), "--loss", "l3"}).code, kExitConfigError);
    EXPECT_EQ(run({"eval", "--root", root_.string()}).code, kExitConfigError);
    EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, BrokenSequenceIsStageFailure) {
    fs::create_directories(root_ / "data/bad/input");
    std::ofstream(root_ / "data/bad/input/in000001.png") << "garbage";
    auto r = run({"run", "--root", (root_ / "data").string(), "-o", (root_ / "out").string()});
    EXPECT_EQ(r.code, kExitStageFailure);
}

TEST(RunConfig, EachAblationTouchesOneParameter) {
    RunConfig base;
    const std::string reference = base.echo();
    auto with = [](auto set) {
        RunConfig c;
        set(c);
        c.apply_ablations();
        return c.echo();
    };
    EXPECT_EQ(changed_keys(reference, with([](RunConfig& c) { c.no_bootstrap = true; })), std::set<std::string>{"beta"});
    EXPECT_EQ(changed_keys(reference, with([](RunConfig& c) { c.no_noise_threshold = true; })),
              std::set<std::string>{"alpha2"});
    EXPECT_EQ(changed_keys(reference, with([](RunConfig& c) { c.no_postprocess = true; })),
              std::set<std::string>{"postprocess"});
    EXPECT_EQ(changed_keys(reference, with([](RunConfig& c) { c.force_simple = true; })), std::set<std::string>{"tau0"});
    EXPECT_EQ(changed_keys(reference, with([](RunConfig& c) { c.l2_loss = true; })),
              (std::set<std::string>{"loss", "alpha2"}));
}

TEST_F(CliTest, ConfigFileLosesToCommandLine) {
    auto seq = synth("static", 4);
    fs::create_directories(root_ / "pred/static");
    for (int t = 1; t <= 4; ++t)
        fs::copy_file(seq / "groundtruth" / cv::format("gt%06d.png", t), root_ / "pred/static" / cv::format("bin%06d.png", t));
    std::ofstream(root_ / "cfg.toml") << "alpha2=3.5\nbeta=2\n";
    auto r = run({"eval", "--config", (root_ / "cfg.toml").string(), "--alpha2", "9", "--root",
                  (root_ / "data").string(), "--pred-dir", (root_ / "pred").string(), "-o", (root_ / "out").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    auto echo = lines(slurp(root_ / "out/report/config.txt"));
    EXPECT_TRUE(echo.contains("alpha2=9")) << slurp(root_ / "out/report/config.txt");
    EXPECT_TRUE(echo.contains("beta=2"));
}

TEST_F(CliTest, SynthIsByteReproducible) {
    for (const char* dir : {"a", "b"}) {
        auto r = run({"synth", "--scene", "panning", "-o", (root_ / dir).string()});
        ASSERT_EQ(r.code, kExitOk) << r.err;
    }
    for (const char* f : {"input/in000001.png", "input/in000200.png", "groundtruth/gt000057.png", "spec.json", "sigma.pfm"})
        EXPECT_EQ(slurp(root_ / "a" / f), slurp(root_ / "b" / f)) << f;

    // Consecutive panning backgrounds are shifted by two columns.
    cv::Mat b0 = cv::imread((root_ / "a/background/bg000001.png").string());
    cv::Mat b1 = cv::imread((root_ / "a/background/bg000002.png").string());
    EXPECT_EQ(cv::norm(b1.colRange(0, 62), b0.colRange(2, 64), cv::NORM_INF), 0.0);
}

TEST(Discover, OneAndTwoLevels) {
    const fs::path root = fs::temp_directory_path() / "bgr_cli_discover";
    fs::remove_all(root);
    fs::create_directories(root / "alone/input");
    fs::create_directories(root / "baseline/highway/input");
    fs::create_directories(root / "baseline/office/input");
    fs::create_directories(root / "empty");
    EXPECT_EQ(discover_sequences(io::DatasetLayout::generic(root)),
              (std::vector<std::string>{"alone", "baseline/highway", "baseline/office"}));
    EXPECT_EQ(category_of("baseline/highway"), "baseline");
    EXPECT_EQ(category_of("alone"), "all");
    fs::remove_all(root);
}
