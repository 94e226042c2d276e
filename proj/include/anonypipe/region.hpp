#pragma once

#include "anonypipe/dataset.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace anonypipe {

enum class RegionKind { face, body };

std::string to_string(RegionKind kind);

struct AnonymizationRegion {
    std::int64_t instance_id = 0;
    RegionKind kind = RegionKind::body;
    BitMask mask;
    std::optional<FaceBox> face_box;
    bool keypoints_required = false;
    /// Image-space keypoints of the instance, when annotated.
    std::optional<Keypoints> keypoints;
};

struct FaceMatch {
    FaceBox face_box;
    std::int64_t instance_id = 0;
    double iou = 0;
};

/// A candidate segmentation for face matching, reduced to its tight bounding box.
struct SegmentBox {
    std::int64_t instance_id = 0;
    Box box;
};

inline constexpr double kMinFaceIou = 0.01;

/// Category labels treated as persons.
inline const std::set<std::string>& default_person_classes() {
    static const std::set<std::string> classes{"person", "pedestrian", "rider"};
    return classes;
}

/// Person instances that are neither crowd nor ignored, in annotation-id order.
std::vector<InstanceAnnotation> filter_instances(const Dataset& dataset,
                                                 const std::set<std::string>& person_classes = default_person_classes());

double iou(const Box& a, const Box& b);

/// Greedy one-to-one assignment. Pairs with IoU below the 1% floor are discarded; the rest are
/// taken in order of IoU, then score (both descending), then instance id and box file order.
std::vector<FaceMatch> match_faces(std::span<const FaceBox> face_boxes, std::span<const SegmentBox> segments);

/// Convenience overload computing each instance's segmentation box against the given image size.
std::vector<FaceMatch> match_faces(std::span<const FaceBox> face_boxes, std::span<const InstanceAnnotation> instances,
                                   int width, int height);

/// Dilation by a (2r+1)×(2r+1) square, clipped at the image border.
BitMask dilate_mask(const BitMask& mask, int radius);

/// max(1, round(0.02 · bbox diagonal)).
int default_dilation_radius(const Box& bbox);

AnonymizationRegion body_region(const InstanceAnnotation& instance, int width, int height, int dilation_radius);
AnonymizationRegion face_region(const FaceMatch& match, int width, int height);

/// Filled pixel-center rectangle of a box, clipped to the image.
BitMask box_mask(const Box& box, int width, int height);

}  // namespace anonypipe
