#include "anonypipe/region.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace anonypipe {

std::string to_string(RegionKind kind) { return kind == RegionKind::face ? "face" : "body"; }

std::vector<InstanceAnnotation> filter_instances(const Dataset& dataset, const std::set<std::string>& person_classes) {
    std::vector<InstanceAnnotation> out;
    for (const auto& inst : dataset.instances())
        if (person_classes.count(inst.category) && !inst.is_crowd && !inst.is_ignored) out.push_back(inst);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

std::vector<FaceMatch> match_faces(std::span<const FaceBox> face_boxes, std::span<const SegmentBox> segments) {
    struct Candidate {
        double iou;
        std::size_t box, seg;
    };
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < face_boxes.size(); ++b)
        for (std::size_t s = 0; s < segments.size(); ++s) {
            const double v = iou(face_boxes[b].box, segments[s].box);
            if (v >= kMinFaceIou) candidates.push_back({v, b, s});
        }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& l, const Candidate& r) {
        const auto& lb = face_boxes[l.box];
        const auto& rb = face_boxes[r.box];
        return std::tuple(-l.iou, -lb.score, segments[l.seg].instance_id, lb.order) <
               std::tuple(-r.iou, -rb.score, segments[r.seg].instance_id, rb.order);
    });

    std::vector<bool> box_used(face_boxes.size()), seg_used(segments.size());
    std::vector<FaceMatch> out;
    for (const auto& c : candidates) {
        if (box_used[c.box] || seg_used[c.seg]) continue;
        box_used[c.box] = seg_used[c.seg] = true;
        out.push_back({face_boxes[c.box], segments[c.seg].instance_id, c.iou});
    }
    return out;
}

std::vector<FaceMatch> match_faces(std::span<const FaceBox> face_boxes, std::span<const InstanceAnnotation> instances,
                                   int width, int height) {
    std::vector<SegmentBox> segs;
    segs.reserve(instances.size());
    for (const auto& inst : instances) segs.push_back({inst.id, segmentation_box(inst.segmentation, width, height)});
    return match_faces(face_boxes, segs);
}

BitMask dilate_mask(const BitMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("dilation radius must be non-negative");
    if (radius == 0 || mask.size() == 0) return mask;
    const Eigen::Index rows = mask.rows(), cols = mask.cols();
    // square element is separable: horizontal max, then vertical max
    BitMask horiz = BitMask::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            const Eigen::Index x0 = std::max<Eigen::Index>(0, x - radius);
            const Eigen::Index x1 = std::min<Eigen::Index>(cols - 1, x + radius);
            horiz(y, x) = mask.row(y).segment(x0, x1 - x0 + 1).any();
        }
    BitMask out = BitMask::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        const Eigen::Index y0 = std::max<Eigen::Index>(0, y - radius);
        const Eigen::Index y1 = std::min<Eigen::Index>(rows - 1, y + radius);
        out.row(y) = horiz.middleRows(y0, y1 - y0 + 1).colwise().any();
    }
    return out;
}

int default_dilation_radius(const Box& bbox) {
    const double diag = std::hypot(bbox.w, bbox.h);
    return std::max(1, static_cast<int>(std::lround(0.02 * diag)));
}

AnonymizationRegion body_region(const InstanceAnnotation& instance, int width, int height, int dilation_radius) {
    BitMask raw = rasterize(instance.segmentation, width, height);
    if (!raw.any()) throw std::invalid_argument("instance " + std::to_string(instance.id) + " has an empty segmentation");
    AnonymizationRegion region;
    region.instance_id = instance.id;
    region.kind = RegionKind::body;
    region.mask = dilate_mask(raw, dilation_radius);
    region.keypoints_required = true;
    region.keypoints = instance.keypoints;
    return region;
}

BitMask box_mask(const Box& box, int width, int height) {
    BitMask mask = BitMask::Zero(height, width);
    // columns whose center c + 0.5 lies in [x, x + w)
    const auto first = [](double lo) { return static_cast<int>(std::ceil(lo - 0.5)); };
    const int x0 = std::max(0, first(box.x)), x1 = std::min(width, first(box.right()));
    const int y0 = std::max(0, first(box.y)), y1 = std::min(height, first(box.bottom()));
    if (x1 > x0 && y1 > y0) mask.block(y0, x0, y1 - y0, x1 - x0).setConstant(true);
    return mask;
}

AnonymizationRegion face_region(const FaceMatch& match, int width, int height) {
    AnonymizationRegion region;
    region.instance_id = match.instance_id;
    region.kind = RegionKind::face;
    region.mask = box_mask(match.face_box.box, width, height);
    region.face_box = match.face_box;
    region.keypoints_required = false;
    if (!region.mask.any())
        throw std::invalid_argument("face box of instance " + std::to_string(match.instance_id) +
                                    " covers no pixel centers");
    return region;
}

}  // namespace anonypipe
