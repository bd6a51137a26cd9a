#pragma once

#include <bgr/arch.hpp>
#include <bgr/image.hpp>

#include <cstddef>
#include <span>

namespace bgr::complexity {

struct ComplexityParams {
    double tau0 = 0.24;         // decision threshold on the mean soft mask
    long n_eval = 2000;         // probe training iterations
    std::size_t b_eval = 480;   // probe frame count
    double tau1 = 0.25;         // soft threshold shared with the loss

    void validate() const;
};

struct ComplexityVerdict {
    double mean_soft_mask = 0.0;
    arch::Complexity verdict = arch::Complexity::Simple;
};

/// Per-pixel, per-channel median; even counts take the lower order statistic.
Frame temporal_median(std::span<const Frame> backgrounds);

/// Mean over frames and pixels of tanh(sum_c |median - reconstruction| / tau1).
double mean_soft_mask(std::span<const Frame> reconstructions, const Frame& median, double tau1);

/// Complex iff mean_soft_mask > tau0.
ComplexityVerdict decide(double mean_soft_mask, double tau0);

ComplexityVerdict assess_reconstructions(std::span<const Frame> reconstructions, const ComplexityParams& params);

/// Reconstructs the probe frames (sample_indices(N, b_eval)) with the probe
/// model and compares them with their temporal median.
ComplexityVerdict assess_complexity(const FrameSequence& sequence, const arch::Autoencoder& probe,
                                    const ComplexityParams& params);

}  // namespace bgr::complexity
