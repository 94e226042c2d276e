#pragma once

#include "anonypipe/dataset.hpp"

#include <optional>

namespace anonypipe {

inline constexpr double kDefaultCropExpansion = 0.2;

struct CropSpec {
    Rect source_rect;
    Size target_resolution;
};

struct Crop {
    Image8 pixels;  // x
    BitMask mask;   // M_c
    CropSpec spec;
};

/// Bilinear resize with half-pixel centers and edge clamping.
template <class Scalar>
Plane<double> resize_bilinear(const Plane<Scalar>& src, Eigen::Index rows, Eigen::Index cols) {
    Plane<double> out(rows, cols);
    const double sy = double(src.rows()) / double(rows), sx = double(src.cols()) / double(cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, double(src.rows() - 1));
        const Eigen::Index y0 = static_cast<Eigen::Index>(fy);
        const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, src.rows() - 1);
        const double ty = fy - double(y0);
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, double(src.cols() - 1));
            const Eigen::Index x0 = static_cast<Eigen::Index>(fx);
            const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, src.cols() - 1);
            const double tx = fx - double(x0);
            const double top = (1 - tx) * double(src(y0, x0)) + tx * double(src(y0, x1));
            const double bot = (1 - tx) * double(src(y1, x0)) + tx * double(src(y1, x1));
            out(r, c) = (1 - ty) * top + ty * bot;
        }
    }
    return out;
}

BitMask resize_nearest(const BitMask& src, Eigen::Index rows, Eigen::Index cols);

/// Tight mask bbox, grown by `expansion` of its size on every side, padded symmetrically along one
/// axis toward height/width = target_aspect, then clamped to the mask's frame.
Rect compute_crop_box(const BitMask& mask, double target_aspect, double expansion = kDefaultCropExpansion);

/// Bilinear pixels, nearest-neighbour mask.
Crop extract_crop(const Image8& image, const BitMask& mask, const Rect& rect, Size target_resolution);

/// Maps keypoints from image to crop coordinates.
Keypoints keypoints_to_crop(const Keypoints& kps, const CropSpec& spec);

/// Resizes the processed crop and blend weights back to the source rectangle and composites
/// image ⊙ (1 − m) + crop ⊙ m there. Pixels outside the rectangle are untouched.
Image8 paste(const Image8& image, const CropSpec& spec, const Image8& processed_crop, const SoftMask& soft_mask);

}  // namespace anonypipe
