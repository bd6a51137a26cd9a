#pragma once

#include <bgr/data_io.hpp>
#include <bgr/evaluator.hpp>
#include <bgr/segmenter.hpp>
#include <bgr/trainer.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bgr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitStageFailure = 1;
inline constexpr int kExitConfigError = 2;

/// Everything a command needs. Defaults are the published hyperparameters.
struct RunConfig {
    std::string layout = "generic";
    std::string root;
    std::vector<std::string> sequences;  // empty: every sequence found under root
    std::string codes;                   // overrides the layout's code table
    std::string output = "out";

    train::TrainConfig train;
    seg::ThresholdParams threshold;
    std::string preset;  // empty: chosen from the frame size

    // Ablations, applied by apply_ablations().
    bool no_bootstrap = false;        // beta = 0
    bool no_noise_threshold = false;  // alpha2 = 0
    bool l2_loss = false;             // squared-error loss and alpha2 = 0
    bool no_postprocess = false;      // raw masks
    bool force_simple = false;        // tau0 = 1

    bool dump_backgrounds = false;
    bool dump_noise = false;
    bool dump_threshold = false;
    bool chart = false;

    std::string checkpoint;  // segment: explicit checkpoint path
    std::string pred_dir;    // eval: directory of <sequence>/bin%06d.png masks
    std::string synth_spec;  // synth: JSON spec file
    std::string synth_scene = "static";
    int jobs = 1;

    void apply_ablations();
    /// Throws bgr::Error on invalid values.
    void validate() const;
    io::DatasetLayout dataset_layout() const;
    /// key=value lines of every effective parameter, readable back with --config.
    std::string echo() const;
};

/// Sequence names under the layout root (one or two directory levels deep).
std::vector<std::string> discover_sequences(const io::DatasetLayout& layout);

/// Parent directory of the sequence name, or "all" for top-level sequences.
std::string category_of(const std::string& sequence);

/// Pairs bin%06d.png predictions with input frames by their file number. A
/// labeled frame without a prediction, or a prediction without a frame, is an error.
eval::ConfusionCounts evaluate_predictions(const io::DatasetLayout& layout, const std::string& sequence,
                                           const std::filesystem::path& prediction_dir);

/// Entry point of the command-line tool; returns the process exit code.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace bgr::cli
