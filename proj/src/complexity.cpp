#include <bgr/complexity.hpp>

#include <bgr/data_io.hpp>

#include <algorithm>
#include <cmath>

namespace bgr::complexity {

void ComplexityParams::validate() const {
    if (!(tau0 > 0.0 && tau0 <= 1.0)) throw Error("tau0 must be in (0,1]");
    if (n_eval < 1 || b_eval < 1) throw Error("probe iterations and frame count must be >= 1");
    if (!(tau1 > 0.0)) throw Error("tau1 must be positive");
}

Frame temporal_median(std::span<const Frame> backgrounds) {
    if (backgrounds.empty()) throw Error("temporal median of an empty list");
    const Frame& first = backgrounds.front();
    for (const auto& f : backgrounds)
        if (f.h != first.h || f.w != first.w) throw Error("temporal median inputs differ in size");
    Frame out(first.h, first.w);
    const std::size_t mid = (backgrounds.size() - 1) / 2;
    std::vector<float> series(backgrounds.size());
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        for (std::size_t t = 0; t < backgrounds.size(); ++t) series[t] = backgrounds[t].data[k];
        std::nth_element(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(mid), series.end());
        out.data[k] = series[mid];
    }
    return out;
}

double mean_soft_mask(std::span<const Frame> reconstructions, const Frame& median, double tau1) {
    if (reconstructions.empty()) throw Error("no reconstructions");
    double sum = 0.0;
    for (const auto& rec : reconstructions) {
        if (rec.h != median.h || rec.w != median.w) throw Error("reconstruction size mismatch");
        for (int i = 0; i < rec.h; ++i) {
            for (int j = 0; j < rec.w; ++j) {
                double l = 0.0;
                for (int c = 0; c < 3; ++c) l += std::abs(static_cast<double>(median.at(c, i, j)) - rec.at(c, i, j));
                sum += std::tanh(l / tau1);
            }
        }
    }
    return sum / (static_cast<double>(reconstructions.size()) * median.h * median.w);
}

ComplexityVerdict decide(double mean_soft_mask, double tau0) {
    return {mean_soft_mask, mean_soft_mask > tau0 ? arch::Complexity::Complex : arch::Complexity::Simple};
}

ComplexityVerdict assess_reconstructions(std::span<const Frame> reconstructions, const ComplexityParams& params) {
    params.validate();
    Frame median = temporal_median(reconstructions);
    return decide(mean_soft_mask(reconstructions, median, params.tau1), params.tau0);
}

ComplexityVerdict assess_complexity(const FrameSequence& sequence, const arch::Autoencoder& probe,
                                    const ComplexityParams& params) {
    sequence.validate();
    auto indices = io::sample_indices(sequence.size(), params.b_eval);
    std::vector<const Frame*> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(&sequence.frames[i]);
    auto rec = probe.reconstruct(std::span<const Frame* const>(picked));
    return assess_reconstructions(rec.backgrounds, params);
}

}  // namespace bgr::complexity
