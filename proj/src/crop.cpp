#include "anonypipe/crop.hpp"

#include <cmath>
#include <stdexcept>

namespace anonypipe {

BitMask resize_nearest(const BitMask& src, Eigen::Index rows, Eigen::Index cols) {
    BitMask out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index y = std::min<Eigen::Index>(
            static_cast<Eigen::Index>((r + 0.5) * double(src.rows()) / double(rows)), src.rows() - 1);
        for (Eigen::Index c = 0; c < cols; ++c) {
            const Eigen::Index x = std::min<Eigen::Index>(
                static_cast<Eigen::Index>((c + 0.5) * double(src.cols()) / double(cols)), src.cols() - 1);
            out(r, c) = src(y, x);
        }
    }
    return out;
}

Rect compute_crop_box(const BitMask& mask, double target_aspect, double expansion) {
    if (!(target_aspect > 0)) throw std::invalid_argument("crop aspect must be positive");
    const Rect tight = tight_rect(mask);
    if (tight.empty()) throw std::invalid_argument("cannot crop around an empty mask");

    double x0 = tight.x - expansion * tight.w, x1 = tight.x + tight.w + expansion * tight.w;
    double y0 = tight.y - expansion * tight.h, y1 = tight.y + tight.h + expansion * tight.h;
    const double w = x1 - x0, h = y1 - y0;
    if (h / w < target_aspect) {
        const double pad = (w * target_aspect - h) / 2;
        y0 -= pad;
        y1 += pad;
    } else {
        const double pad = (h / target_aspect - w) / 2;
        x0 -= pad;
        x1 += pad;
    }
    // snap outward and clamp; the 1e-9 slack absorbs rounding in exact-integer cases
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0 + 1e-9)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0 + 1e-9)));
    const int ix1 = std::min(static_cast<int>(mask.cols()), static_cast<int>(std::ceil(x1 - 1e-9)));
    const int iy1 = std::min(static_cast<int>(mask.rows()), static_cast<int>(std::ceil(y1 - 1e-9)));
    return {ix0, iy0, ix1 - ix0, iy1 - iy0};
}

Crop extract_crop(const Image8& image, const BitMask& mask, const Rect& rect, Size target) {
    require_same_size(image, mask);
    if (rect.empty() || rect.x < 0 || rect.y < 0 || rect.x + rect.w > image.width() || rect.y + rect.h > image.height())
        throw std::invalid_argument("crop rectangle lies outside the image");
    Crop crop;
    crop.spec = {rect, target};
    crop.pixels = Image8(target.width, target.height);
    for (int c = 0; c < 3; ++c) {
        const Plane<std::uint8_t> window = image[c].block(rect.y, rect.x, rect.h, rect.w);
        crop.pixels[c] = resize_bilinear(window, target.height, target.width).unaryExpr([](double v) { return to_u8(v); });
    }
    const BitMask window = mask.block(rect.y, rect.x, rect.h, rect.w);
    crop.mask = resize_nearest(window, target.height, target.width);
    return crop;
}

Keypoints keypoints_to_crop(const Keypoints& kps, const CropSpec& spec) {
    const double sx = double(spec.target_resolution.width) / spec.source_rect.w;
    const double sy = double(spec.target_resolution.height) / spec.source_rect.h;
    Keypoints out = kps;
    for (auto& kp : out) {
        kp.x = (kp.x - spec.source_rect.x) * sx;
        kp.y = (kp.y - spec.source_rect.y) * sy;
    }
    return out;
}

Image8 paste(const Image8& image, const CropSpec& spec, const Image8& processed, const SoftMask& soft_mask) {
    const Rect& r = spec.source_rect;
    if (processed.height() != spec.target_resolution.height || processed.width() != spec.target_resolution.width)
        throw DimensionError("processed crop does not match the crop resolution");
    require_same_size(processed, soft_mask);
    Image8 out = image;
    const Plane<double> m = resize_bilinear(soft_mask, r.h, r.w);
    for (int c = 0; c < 3; ++c) {
        const Plane<double> y = resize_bilinear(processed[c], r.h, r.w);
        auto window = out[c].block(r.y, r.x, r.h, r.w);
        const Plane<double> x = window.cast<double>();
        window = (x * (1.0 - m) + y * m).unaryExpr([](double v) { return to_u8(v); });
    }
    return out;
}

}  // namespace anonypipe
