#include <bgr/data_io.hpp>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace bgr {

const char* to_string(Label label) {
    switch (label) {
        case Label::Background: return "background";
        case Label::Foreground: return "foreground";
        case Label::Excluded: return "excluded";
        case Label::OutOfRoi: return "out_of_roi";
        case Label::Unlabeled: return "unlabeled";
    }
    return "unknown";
}

Label label_from_string(const std::string& name) {
    for (Label l : {Label::Background, Label::Foreground, Label::Excluded, Label::OutOfRoi, Label::Unlabeled}) {
        if (name == to_string(l)) return l;
    }
    throw Error("unknown label name '" + name + "'");
}

}  // namespace bgr

namespace bgr::io {

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

std::optional<long> trailing_index(const std::string& stem) {
    auto end = stem.find_last_of("0123456789");
    if (end == std::string::npos) return std::nullopt;
    auto begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    return std::stol(stem.substr(begin, end - begin + 1));
}

std::string expand(const std::string& pattern, const std::string& sequence) {
    std::string leaf = fs::path(sequence).filename().string();
    std::string out = pattern;
    for (auto pos = out.find("{seq}"); pos != std::string::npos; pos = out.find("{seq}"))
        out.replace(pos, 5, leaf);
    return out;
}

cv::Mat imread_checked(const fs::path& path, int flags) {
    if (!fs::exists(path)) throw Error("missing image file " + path.string());
    cv::Mat img = cv::imread(path.string(), flags);
    if (img.empty()) throw Error("cannot decode image " + path.string());
    return img;
}

void imwrite_checked(const fs::path& path, const cv::Mat& img, const std::vector<int>& params = {}) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), img, params);
    } catch (const cv::Exception& e) {
        throw Error("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw Error("cannot write " + path.string());
}

std::optional<std::pair<long, long>> temporal_roi_of(const DatasetLayout& layout, const std::string& sequence) {
    if (layout.temporal_roi) return layout.temporal_roi;
    if (!layout.temporal_roi_file) return std::nullopt;
    fs::path p = layout.sequence_dir(sequence) / expand(*layout.temporal_roi_file, sequence);
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    long first = 0, last = 0;
    if (!(in >> first >> last) || last < first) throw Error("malformed temporal ROI file " + p.string());
    return std::make_pair(first, last);
}

std::optional<BinaryMask> spatial_roi_of(const DatasetLayout& layout, const std::string& sequence) {
    if (!layout.roi_file) return std::nullopt;
    fs::path p = layout.sequence_dir(sequence) / expand(*layout.roi_file, sequence);
    if (!fs::exists(p)) return std::nullopt;
    return read_mask(p);
}

}  // namespace

const char* to_string(LayoutKind kind) {
    switch (kind) {
        case LayoutKind::Cdnet: return "cdnet";
        case LayoutKind::Lasiesta: return "lasiesta";
        case LayoutKind::Bmc: return "bmc";
        case LayoutKind::Generic: return "generic";
    }
    return "generic";
}

LayoutKind layout_kind_from_string(const std::string& name) {
    for (LayoutKind k : {LayoutKind::Cdnet, LayoutKind::Lasiesta, LayoutKind::Bmc, LayoutKind::Generic})
        if (name == to_string(k)) return k;
    throw Error("unknown dataset layout '" + name + "'");
}

CodeTable cdnet_codes() {
    // UNLABELED (170) is scored like the shadow code: skipped.
    return {{0, Label::Background},
            {50, Label::Excluded},
            {85, Label::OutOfRoi},
            {170, Label::Unlabeled},
            {255, Label::Foreground}};
}

CodeTable lasiesta_codes() {
    return {{0, Label::Background},
            {color_code(255, 0, 0), Label::Foreground},
            {color_code(0, 255, 0), Label::Foreground},
            {color_code(255, 255, 0), Label::Foreground},
            {255, Label::Excluded},  // stopped moving objects
            {128, Label::Unlabeled}};
}

CodeTable binary_codes() { return {{0, Label::Background}, {255, Label::Foreground}}; }

DatasetLayout DatasetLayout::cdnet(fs::path root) {
    DatasetLayout l;
    l.kind = LayoutKind::Cdnet;
    l.root = std::move(root);
    l.codes = cdnet_codes();
    l.roi_file = "ROI.bmp";
    l.temporal_roi_file = "temporalROI.txt";
    return l;
}

DatasetLayout DatasetLayout::lasiesta(fs::path root) {
    DatasetLayout l;
    l.kind = LayoutKind::Lasiesta;
    l.root = std::move(root);
    l.codes = lasiesta_codes();
    l.input_dir = "{seq}";
    l.groundtruth_dir = "{seq}-GT";
    return l;
}

DatasetLayout DatasetLayout::bmc(fs::path root) {
    DatasetLayout l;
    l.kind = LayoutKind::Bmc;
    l.root = std::move(root);
    l.codes = binary_codes();
    return l;
}

DatasetLayout DatasetLayout::generic(fs::path root) {
    DatasetLayout l;
    l.kind = LayoutKind::Generic;
    l.root = std::move(root);
    l.codes = binary_codes();
    l.roi_file = "ROI.png";
    l.temporal_roi_file = "temporalROI.txt";
    return l;
}

DatasetLayout DatasetLayout::of_kind(LayoutKind kind, fs::path root) {
    switch (kind) {
        case LayoutKind::Cdnet: return cdnet(std::move(root));
        case LayoutKind::Lasiesta: return lasiesta(std::move(root));
        case LayoutKind::Bmc: return bmc(std::move(root));
        case LayoutKind::Generic: break;
    }
    return generic(std::move(root));
}

fs::path DatasetLayout::sequence_dir(const std::string& sequence) const { return root / sequence; }
fs::path DatasetLayout::input_path(const std::string& sequence) const {
    return sequence_dir(sequence) / expand(input_dir, sequence);
}
fs::path DatasetLayout::groundtruth_path(const std::string& sequence) const {
    return sequence_dir(sequence) / expand(groundtruth_dir, sequence);
}

CodeTable parse_code_table(const std::string& text) {
    CodeTable table;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
                   item.end());
        if (item.empty()) continue;
        auto colon = item.find(':');
        if (colon == std::string::npos) throw Error("code table entry '" + item + "' lacks ':'");
        std::string code = item.substr(0, colon);
        Label label = label_from_string(item.substr(colon + 1));
        LabelCode value = 0;
        try {
            if (!code.empty() && code[0] == '#') {
                if (code.size() != 7) throw Error("bad color code");
                unsigned long rgb = std::stoul(code.substr(1), nullptr, 16);
                value = color_code(static_cast<int>((rgb >> 16) & 0xff), static_cast<int>((rgb >> 8) & 0xff),
                                   static_cast<int>(rgb & 0xff));
            } else {
                unsigned long v = std::stoul(code);
                if (v > 255) throw Error("gray code out of range");
                value = static_cast<LabelCode>(v);
            }
        } catch (const std::exception&) {
            throw Error("invalid code '" + code + "' in code table");
        }
        table[value] = label;
    }
    if (table.empty()) throw Error("empty code table");
    return table;
}

std::string format_code_table(const CodeTable& table) {
    std::ostringstream out;
    bool first = true;
    for (const auto& [code, label] : table) {
        if (!first) out << ',';
        first = false;
        if (code & kColorCodeFlag) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "#%06x", code & 0xffffffu);
            out << buf;
        } else {
            out << code;
        }
        out << ':' << to_string(label);
    }
    return out.str();
}

std::vector<IndexedFile> list_frame_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("missing directory " + dir.string());
    std::vector<IndexedFile> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        auto idx = trailing_index(entry.path().stem().string());
        files.push_back({idx.value_or(-1), entry.path()});
    }
    std::sort(files.begin(), files.end(), [](const IndexedFile& a, const IndexedFile& b) {
        if (a.index != b.index) return a.index < b.index;
        return a.path.filename() < b.path.filename();
    });
    return files;
}

Frame read_frame(const fs::path& path) {
    cv::Mat img = imread_checked(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
    double scale = 1.0;
    switch (img.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        default: throw Error("unsupported pixel depth in " + path.string());
    }
    cv::Mat f;
    img.convertTo(f, CV_32F, scale);
    Frame frame(f.rows, f.cols);
    const int ch = f.channels();
    for (int i = 0; i < f.rows; ++i) {
        const float* row = f.ptr<float>(i);
        for (int j = 0; j < f.cols; ++j) {
            if (ch == 1) {
                for (int c = 0; c < 3; ++c) frame.at(c, i, j) = row[j];
            } else {
                // OpenCV stores BGR(A)
                frame.at(0, i, j) = row[j * ch + 2];
                frame.at(1, i, j) = row[j * ch + 1];
                frame.at(2, i, j) = row[j * ch + 0];
            }
        }
    }
    return frame;
}

void write_frame(const Frame& frame, const fs::path& path) {
    cv::Mat img(frame.h, frame.w, CV_8UC3);
    for (int i = 0; i < frame.h; ++i) {
        auto* row = img.ptr<cv::Vec3b>(i);
        for (int j = 0; j < frame.w; ++j) {
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(frame.at(c, i, j), 0.f, 1.f);
                row[j][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.f));
            }
        }
    }
    imwrite_checked(path, img);
}

FrameSequence load_sequence(const DatasetLayout& layout, const std::string& sequence) {
    fs::path dir = layout.input_path(sequence);
    auto files = list_frame_files(dir);
    if (files.empty()) throw Error("no image files in " + dir.string());
    FrameSequence seq;
    seq.source_id = sequence;
    seq.frames.reserve(files.size());
    for (const auto& f : files) {
        seq.frames.push_back(read_frame(f.path));
        if (seq.frames.back().h != seq.frames.front().h || seq.frames.back().w != seq.frames.front().w)
            throw Error("inconsistent resolution at " + f.path.string());
    }
    return seq;
}

LabelFrame decode_groundtruth(const fs::path& path, const CodeTable& codes) {
    cv::Mat img = imread_checked(path, cv::IMREAD_UNCHANGED);
    if (img.depth() != CV_8U) throw Error("ground truth must be 8-bit: " + path.string());
    LabelFrame out(img.rows, img.cols);
    const int ch = img.channels();
    for (int i = 0; i < img.rows; ++i) {
        const std::uint8_t* row = img.ptr<std::uint8_t>(i);
        for (int j = 0; j < img.cols; ++j) {
            LabelCode code = ch == 1 ? row[j] : color_code(row[j * ch + 2], row[j * ch + 1], row[j * ch + 0]);
            auto it = codes.find(code);
            if (it == codes.end()) {
                std::ostringstream msg;
                msg << "unknown ground-truth code " << (code & 0xffffffu) << (code & kColorCodeFlag ? " (rgb)" : "")
                    << " at (" << i << ',' << j << ") in " << path.string();
                throw Error(msg.str());
            }
            out.at(i, j) = it->second;
        }
    }
    return out;
}

std::vector<LabelFrame> load_groundtruth(const DatasetLayout& layout, const std::string& sequence) {
    auto inputs = list_frame_files(layout.input_path(sequence));
    if (inputs.empty()) throw Error("no input frames for " + sequence);
    const cv::Size size = imread_checked(inputs.front().path, cv::IMREAD_UNCHANGED).size();

    std::map<long, fs::path> gt_by_index;
    fs::path gt_dir = layout.groundtruth_path(sequence);
    for (const auto& f : list_frame_files(gt_dir)) gt_by_index[f.index] = f.path;

    auto troi = temporal_roi_of(layout, sequence);
    auto sroi = spatial_roi_of(layout, sequence);
    if (sroi && !sroi->same_shape(size.height, size.width)) throw Error("ROI size mismatch for " + sequence);

    std::vector<LabelFrame> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) {
        bool inside = !troi || (in.index >= troi->first && in.index <= troi->second);
        auto it = gt_by_index.find(in.index);
        if (!inside || it == gt_by_index.end()) {
            if (inside && troi) throw Error("missing ground truth for frame " + in.path.filename().string());
            out.emplace_back(size.height, size.width, Label::Unlabeled);
            continue;
        }
        LabelFrame lf = decode_groundtruth(it->second, layout.codes);
        if (!lf.same_shape(size.height, size.width)) throw Error("ground truth size mismatch: " + it->second.string());
        if (sroi) {
            for (std::size_t k = 0; k < lf.size(); ++k)
                if (!sroi->data[k]) lf.data[k] = Label::OutOfRoi;
        }
        out.push_back(std::move(lf));
    }
    return out;
}

void write_mask(const BinaryMask& mask, const fs::path& path) {
    cv::Mat img(mask.h, mask.w, CV_8UC1);
    for (int i = 0; i < mask.h; ++i) {
        auto* row = img.ptr<std::uint8_t>(i);
        for (int j = 0; j < mask.w; ++j) {
            std::uint8_t v = mask.at(i, j);
            if (v > 1) throw Error("mask is not binary");
            row[j] = v ? 255 : 0;
        }
    }
    imwrite_checked(path, img);
}

BinaryMask read_mask(const fs::path& path) {
    cv::Mat img = imread_checked(path, cv::IMREAD_GRAYSCALE);
    BinaryMask mask(img.rows, img.cols);
    for (int i = 0; i < img.rows; ++i) {
        const auto* row = img.ptr<std::uint8_t>(i);
        for (int j = 0; j < img.cols; ++j) mask.at(i, j) = row[j] ? 1 : 0;
    }
    return mask;
}

void write_gray(const FloatRaster& raster, float scale, const fs::path& path) {
    cv::Mat img(raster.h, raster.w, CV_8UC1);
    for (int i = 0; i < raster.h; ++i) {
        auto* row = img.ptr<std::uint8_t>(i);
        for (int j = 0; j < raster.w; ++j)
            row[j] = static_cast<std::uint8_t>(std::lround(std::clamp(raster.at(i, j) * scale, 0.f, 255.f)));
    }
    imwrite_checked(path, img);
}

void write_float_raster(const FloatRaster& raster, const fs::path& path) {
    cv::Mat img(raster.h, raster.w, CV_32FC1, const_cast<float*>(raster.data.data()));
    imwrite_checked(path, img);
}

FloatRaster read_float_raster(const fs::path& path) {
    cv::Mat img = imread_checked(path, cv::IMREAD_UNCHANGED);
    if (img.type() != CV_32FC1) throw Error("not a single-channel float raster: " + path.string());
    FloatRaster out(img.rows, img.cols);
    for (int i = 0; i < img.rows; ++i)
        std::copy_n(img.ptr<float>(i), img.cols, out.data.begin() + static_cast<std::ptrdiff_t>(i) * img.cols);
    return out;
}

std::vector<std::size_t> sample_indices(std::size_t frame_count, std::size_t budget, std::uint64_t /*seed*/) {
    std::vector<std::size_t> out;
    if (frame_count == 0 || budget == 0) return out;
    if (frame_count <= budget) {
        out.resize(frame_count);
        for (std::size_t i = 0; i < frame_count; ++i) out[i] = i;
        return out;
    }
    out.resize(budget);
    for (std::size_t i = 0; i < budget; ++i) out[i] = i * frame_count / budget;
    return out;
}

}  // namespace bgr::io
