#pragma once

#include <bgr/image.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bgr::io {

enum class LayoutKind { Cdnet, Lasiesta, Bmc, Generic };

const char* to_string(LayoutKind kind);
LayoutKind layout_kind_from_string(const std::string& name);

/// Stored ground-truth code. Gray pixels (r == g == b) use the gray value,
/// colored pixels use 0xRRGGBB | kColorCodeFlag so both spaces never collide.
using LabelCode = std::uint32_t;
inline constexpr LabelCode kColorCodeFlag = 0x1000000u;
constexpr LabelCode color_code(int r, int g, int b) {
    if (r == g && g == b) return static_cast<LabelCode>(r);
    return kColorCodeFlag | (static_cast<LabelCode>(r) << 16) | (static_cast<LabelCode>(g) << 8) |
           static_cast<LabelCode>(b);
}

using CodeTable = std::map<LabelCode, Label>;

/// Where a dataset keeps its frames and how its ground truth is encoded.
/// Directory names may contain "{seq}", replaced by the last path component of
/// the sequence name.
struct DatasetLayout {
    LayoutKind kind = LayoutKind::Generic;
    std::filesystem::path root;
    CodeTable codes;
    std::string input_dir = "input";
    std::string groundtruth_dir = "groundtruth";
    /// Spatial ROI image relative to the sequence directory; nonzero = inside.
    std::optional<std::string> roi_file;
    /// Text file "first last" (inclusive, in filename frame numbers).
    std::optional<std::string> temporal_roi_file;
    /// Explicit temporal ROI, wins over temporal_roi_file.
    std::optional<std::pair<long, long>> temporal_roi;

    static DatasetLayout cdnet(std::filesystem::path root);
    static DatasetLayout lasiesta(std::filesystem::path root);
    static DatasetLayout bmc(std::filesystem::path root);
    static DatasetLayout generic(std::filesystem::path root);
    static DatasetLayout of_kind(LayoutKind kind, std::filesystem::path root);

    std::filesystem::path sequence_dir(const std::string& sequence) const;
    std::filesystem::path input_path(const std::string& sequence) const;
    std::filesystem::path groundtruth_path(const std::string& sequence) const;
};

CodeTable cdnet_codes();
CodeTable lasiesta_codes();
CodeTable binary_codes();

/// Parses "0:background,255:foreground,#ff0000:foreground" style tables.
CodeTable parse_code_table(const std::string& text);
std::string format_code_table(const CodeTable& table);

struct IndexedFile {
    long index = 0;
    std::filesystem::path path;
};

/// Image files of a directory ordered by the last integer embedded in the file
/// stem (not lexicographically).
std::vector<IndexedFile> list_frame_files(const std::filesystem::path& dir);

/// Reads an image as a 3-channel frame in [0,1]; gray sources are replicated.
Frame read_frame(const std::filesystem::path& path);
void write_frame(const Frame& frame, const std::filesystem::path& path);

FrameSequence load_sequence(const DatasetLayout& layout, const std::string& sequence);

/// One LabelFrame per input frame, in input order. Frames outside the temporal
/// ROI (or without a ground-truth file when no temporal ROI is set) are fully
/// Unlabeled; pixels outside the spatial ROI are OutOfRoi.
std::vector<LabelFrame> load_groundtruth(const DatasetLayout& layout, const std::string& sequence);

/// Decodes one ground-truth image through the code table; throws on unknown codes.
LabelFrame decode_groundtruth(const std::filesystem::path& path, const CodeTable& codes);

/// Writes an 8-bit single-channel lossless PNG, foreground 255.
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);
/// Any nonzero pixel reads as foreground.
BinaryMask read_mask(const std::filesystem::path& path);

/// 8-bit gray image of round(clamp(value * scale, 0, 255)).
void write_gray(const FloatRaster& raster, float scale, const std::filesystem::path& path);
/// Portable float map, exact float32 values.
void write_float_raster(const FloatRaster& raster, const std::filesystem::path& path);
FloatRaster read_float_raster(const std::filesystem::path& path);

/// Frame indices used for probing: 0..N-1 when N <= B, else B evenly spaced
/// indices floor(i*N/B). The seed is accepted for interface stability; the
/// selection is deterministic and does not depend on it.
std::vector<std::size_t> sample_indices(std::size_t frame_count, std::size_t budget,
                                        std::uint64_t seed = 0);

}  // namespace bgr::io
