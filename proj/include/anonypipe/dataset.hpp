#pragma once

#include "anonypipe/image.hpp"

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace anonypipe {

inline constexpr int kNumKeypoints = 17;

struct Point {
    double x = 0, y = 0;
};

using Polygon = std::vector<Point>;

/// COCO run-length encoding: column-major, the first run counts background pixels.
struct Rle {
    int height = 0, width = 0;
    std::vector<std::uint32_t> counts;
};

using Segmentation = std::variant<std::vector<Polygon>, Rle>;

struct Keypoint {
    double x = 0, y = 0, confidence = 0;
};

using Keypoints = std::array<Keypoint, kNumKeypoints>;
using KeypointVisibility = std::bitset<kNumKeypoints>;

struct ImageRecord {
    std::int64_t id = 0;
    std::filesystem::path path;  // relative to the image root
    int width = 0, height = 0;
};

struct InstanceAnnotation {
    std::int64_t id = 0;
    std::int64_t image_id = 0;
    std::string category;
    Segmentation segmentation;
    Box bbox;
    bool is_crowd = false;
    bool is_ignored = false;
    std::optional<Keypoints> keypoints;
};

struct FaceBox {
    Box box;
    double score = 0;
    std::int64_t image_id = 0;
    /// Record order in the sidecar file; used as the final matching tie-break.
    std::size_t order = 0;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ", column " +
                                        std::to_string(column) + ")"
                                  : what),
          line_(line), column_(column) {}
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_, column_;
};

class Dataset {
public:
    Dataset() = default;
    Dataset(std::filesystem::path annotation_file, std::filesystem::path image_root,
            std::vector<ImageRecord> images, std::vector<InstanceAnnotation> instances);

    const std::vector<ImageRecord>& images() const { return images_; }
    const std::vector<InstanceAnnotation>& instances() const { return instances_; }
    const std::filesystem::path& annotation_file() const { return annotation_file_; }
    const std::filesystem::path& image_root() const { return image_root_; }

    const ImageRecord* find_image(std::int64_t id) const;
    std::vector<const InstanceAnnotation*> instances_of(std::int64_t image_id) const;

    /// Reads pixels lazily. A missing or corrupt file surfaces here, not at load time.
    Image8 load_pixels(const ImageRecord& rec) const;

    /// Replaces keypoints of the listed annotation ids. Unknown ids are counted and returned.
    std::size_t attach_keypoints(const std::map<std::int64_t, Keypoints>& by_instance);

private:
    std::filesystem::path annotation_file_, image_root_;
    std::vector<ImageRecord> images_;
    std::vector<InstanceAnnotation> instances_;
    std::map<std::int64_t, std::size_t> image_index_;
};

Dataset load_dataset(const std::filesystem::path& annotation_file, const std::filesystem::path& image_root);

struct FaceBoxFile {
    std::vector<FaceBox> boxes;
    std::size_t warnings = 0;
};

/// JSON-lines sidecar: {"image_id": int, "bbox": [x, y, w, h], "score": float} per line.
/// Boxes are clamped to their image. Records with a score outside [0, 1] or an unknown image are
/// dropped and counted as warnings; boxes with zero area after clamping are dropped silently.
FaceBoxFile load_face_boxes(const std::filesystem::path& path, const Dataset& dataset);

/// JSON-lines sidecar: {"image_id": int, "instance_id": int, "keypoints": [x, y, c] × 17}.
std::map<std::int64_t, Keypoints> load_keypoints(const std::filesystem::path& path);

KeypointVisibility visible_keypoints(const Keypoints& kps, double threshold = 0.30);

// Rasterization ------------------------------------------------------------------------------

/// Even-odd fill per polygon, union across polygons. A pixel is set when its center lies inside.
BitMask rasterize_polygon(std::span<const Polygon> polygons, int width, int height);
BitMask rasterize_rle(const Rle& rle, int width, int height);
BitMask rasterize(const Segmentation& seg, int width, int height);

/// Decodes the compact string form of COCO RLE counts.
std::vector<std::uint32_t> decode_rle_string(std::string_view s);

/// Tight bounding box of a segmentation in pixel units, clamped to the image.
Box segmentation_box(const Segmentation& seg, int width, int height);

}  // namespace anonypipe
