#include <bgr/evaluator.hpp>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bgr::eval {

namespace {

std::string format_f(const std::optional<double>& f) {
    if (!f) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *f);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

void write_chart(const EvalReport& report, const std::filesystem::path& path) {
    const int bar = 48, gap = 16, plot_h = 240, margin = 40;
    const int n = static_cast<int>(report.categories.size());
    const int width = std::max(200, margin * 2 + n * (bar + gap));
    cv::Mat img(plot_h + 2 * margin, width, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::line(img, {margin / 2, margin + plot_h}, {width - margin / 2, margin + plot_h}, cv::Scalar(0, 0, 0));
    for (int k = 0; k < n; ++k) {
        const auto& cat = report.categories[k];
        const int x = margin + k * (bar + gap);
        if (cat.f) {
            const int top = margin + plot_h - static_cast<int>(*cat.f * plot_h + 0.5);
            cv::rectangle(img, {x, top}, {x + bar, margin + plot_h}, cv::Scalar(180, 110, 40), cv::FILLED);
            cv::putText(img, format_f(cat.f), {x, top - 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, cv::Scalar(0, 0, 0));
        }
        cv::putText(img, cat.name.substr(0, 8), {x, margin + plot_h + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                    cv::Scalar(0, 0, 0));
    }
    if (!cv::imwrite(path.string(), img)) throw Error("cannot write " + path.string());
}

}  // namespace

void accumulate(const BinaryMask& prediction, const LabelFrame& groundtruth, ConfusionCounts& counts) {
    if (prediction.h != groundtruth.h || prediction.w != groundtruth.w)
        throw Error("prediction " + std::to_string(prediction.w) + "x" + std::to_string(prediction.h) +
                    " does not match ground truth " + std::to_string(groundtruth.w) + "x" +
                    std::to_string(groundtruth.h));
    for (std::size_t k = 0; k < prediction.data.size(); ++k) {
        const bool fg = prediction.data[k] != 0;
        switch (groundtruth.data[k]) {
            case Label::Foreground: ++(fg ? counts.tp : counts.fn); break;
            case Label::Background: ++(fg ? counts.fp : counts.tn); break;
            default: break;
        }
    }
}

ConfusionCounts count_sequence(std::span<const BinaryMask> predictions, std::span<const LabelFrame> groundtruth) {
    if (predictions.size() != groundtruth.size())
        throw Error(std::to_string(predictions.size()) + " predictions for " + std::to_string(groundtruth.size()) +
                    " ground-truth frames");
    ConfusionCounts counts;
    for (std::size_t t = 0; t < predictions.size(); ++t) accumulate(predictions[t], groundtruth[t], counts);
    return counts;
}

std::optional<double> f_measure(const ConfusionCounts& c) {
    const double denom = static_cast<double>(c.tp) + 0.5 * (static_cast<double>(c.fn) + static_cast<double>(c.fp));
    if (denom == 0.0) return std::nullopt;
    return static_cast<double>(c.tp) / denom;
}

EvalReport aggregate(std::vector<VideoResult> videos) {
    EvalReport report;
    std::map<std::string, CategoryResult> cats;
    std::vector<std::string> order;
    for (const auto& v : videos) {
        auto [it, inserted] = cats.try_emplace(v.category);
        if (inserted) {
            it->second.name = v.category;
            order.push_back(v.category);
        }
        it->second.videos.push_back(v.name);
    }
    std::map<std::string, const VideoResult*> by_name;
    for (const auto& v : videos) by_name[v.category + "/" + v.name] = &v;

    double overall_sum = 0.0;
    int overall_n = 0;
    for (const auto& name : order) {
        auto& cat = cats[name];
        double sum = 0.0;
        int n = 0;
        for (const auto& video : cat.videos) {
            const auto* v = by_name[name + "/" + video];
            if (v->f) {
                sum += *v->f;
                ++n;
            } else {
                report.notes.push_back("video " + video + " (" + name +
                                       "): F undefined (no foreground and no false positives), left out of the mean");
            }
        }
        if (n > 0) {
            cat.f = sum / n;
            overall_sum += *cat.f;
            ++overall_n;
        } else {
            report.notes.push_back("category " + name + ": no video with a defined F");
        }
        report.categories.push_back(cat);
    }
    if (overall_n > 0) report.overall = overall_sum / overall_n;
    report.videos = std::move(videos);
    return report;
}

EvalReport aggregate(const std::map<std::string, std::optional<double>>& per_video,
                     const std::map<std::string, std::vector<std::string>>& categories) {
    if (categories.empty()) throw Error("no categories to aggregate");
    std::vector<VideoResult> videos;
    for (const auto& [cat, names] : categories) {
        if (names.empty()) throw Error("category '" + cat + "' has no videos");
        for (const auto& name : names) {
            auto it = per_video.find(name);
            if (it == per_video.end()) throw Error("no result for video '" + name + "'");
            videos.push_back({name, cat, {}, it->second});
        }
    }
    return aggregate(std::move(videos));
}

std::string format_table(const EvalReport& report) {
    std::ostringstream out;
    out << "level\tcategory\tvideo\tTP\tFP\tFN\tTN\tF\n";
    for (const auto& v : report.videos) {
        out << "video\t" << v.category << '\t' << v.name << '\t' << v.counts.tp << '\t' << v.counts.fp << '\t'
            << v.counts.fn << '\t' << v.counts.tn << '\t' << format_f(v.f) << '\n';
    }
    for (const auto& c : report.categories) out << "category\t" << c.name << "\t-\t-\t-\t-\t-\t" << format_f(c.f) << '\n';
    out << "overall\t-\t-\t-\t-\t-\t-\t" << format_f(report.overall) << '\n';
    return out.str();
}

std::string format_summary(const EvalReport& report) {
    std::ostringstream out;
    out << "F-measure per category (mean of its videos)\n";
    for (const auto& c : report.categories)
        out << "  " << c.name << ": " << format_f(c.f) << " over " << c.videos.size() << " video(s)\n";
    out << "overall (mean of category means): " << format_f(report.overall) << '\n';
    for (const auto& note : report.notes) out << "note: " << note << '\n';
    return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& dir, bool chart) {
    std::filesystem::create_directories(dir);
    write_text(dir / "results.tsv", format_table(report));
    write_text(dir / "summary.txt", format_summary(report));
    write_text(dir / "config.txt", report.config_echo);
    if (chart) write_chart(report, dir / "categories.png");
}

}  // namespace bgr::eval
