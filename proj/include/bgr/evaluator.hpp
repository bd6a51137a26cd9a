#pragma once

#include <bgr/image.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bgr::eval {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t evaluated() const { return tp + tn + fp + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Adds one frame to `counts`. Excluded, out-of-ROI and unlabeled pixels are skipped.
void accumulate(const BinaryMask& prediction, const LabelFrame& groundtruth, ConfusionCounts& counts);

/// Sums counts over a whole sequence; the lists are paired by position.
ConfusionCounts count_sequence(std::span<const BinaryMask> predictions, std::span<const LabelFrame> groundtruth);

/// TP / (TP + (FN + FP) / 2); empty when the denominator is zero.
std::optional<double> f_measure(const ConfusionCounts& counts);

struct VideoResult {
    std::string name;
    std::string category;
    ConfusionCounts counts;
    std::optional<double> f;
};

struct CategoryResult {
    std::string name;
    std::vector<std::string> videos;
    /// Mean over the videos with a defined F; empty if there are none.
    std::optional<double> f;
};

struct EvalReport {
    std::vector<VideoResult> videos;
    std::vector<CategoryResult> categories;
    /// Mean of the defined category values.
    std::optional<double> overall;
    /// Human-readable remarks, e.g. videos left out of the means.
    std::vector<std::string> notes;
    /// key=value lines describing the run that produced the predictions.
    std::string config_echo;
};

/// Groups videos by their category field. Videos with undefined F stay in the
/// table but are left out of the means.
EvalReport aggregate(std::vector<VideoResult> videos);

/// Map-based form: category -> list of video names. Throws on an empty
/// category or a video missing from `per_video`.
EvalReport aggregate(const std::map<std::string, std::optional<double>>& per_video,
                     const std::map<std::string, std::vector<std::string>>& categories);

/// Tab-separated table: one row per video, then category rows and the overall row.
std::string format_table(const EvalReport& report);
std::string format_summary(const EvalReport& report);

/// Writes results.tsv, summary.txt and config.txt into `dir`, plus
/// categories.png when `chart` is set.
void write_report(const EvalReport& report, const std::filesystem::path& dir, bool chart = false);

}  // namespace bgr::eval
