#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace anonypipe {

/// Row-major 2-D raster; (row, col) = (y, x).
template <class Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using BitMask = Plane<bool>;
using SoftMask = Plane<double>;

/// Planar RGB image. Each channel is an independent plane of identical size.
template <class Scalar>
struct Image {
    std::array<Plane<Scalar>, 3> channels;

    Image() = default;
    Image(int width, int height) {
        for (auto& c : channels) c.resize(height, width);
    }
    Image(int width, int height, Scalar fill) : Image(width, height) {
        for (auto& c : channels) c.setConstant(fill);
    }

    int width() const { return static_cast<int>(channels[0].cols()); }
    int height() const { return static_cast<int>(channels[0].rows()); }
    bool empty() const { return channels[0].size() == 0; }

    Plane<Scalar>& operator[](int c) { return channels[c]; }
    const Plane<Scalar>& operator[](int c) const { return channels[c]; }

    friend bool operator==(const Image& a, const Image& b) {
        if (a.width() != b.width() || a.height() != b.height()) return false;
        for (int c = 0; c < 3; ++c)
            if ((a.channels[c] != b.channels[c]).any()) return false;
        return true;
    }
};

using Image8 = Image<std::uint8_t>;
using ImageF = Image<double>;

/// Axis-aligned box in continuous pixel coordinates.
struct Box {
    double x = 0, y = 0, w = 0, h = 0;

    double area() const { return w * h; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }
    friend bool operator==(const Box&, const Box&) = default;
};

/// Integer pixel rectangle, half-open: [x, x+w) × [y, y+h).
struct Rect {
    int x = 0, y = 0, w = 0, h = 0;

    bool empty() const { return w <= 0 || h <= 0; }
    bool contains(const Rect& o) const {
        return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Size {
    int height = 0, width = 0;
    int min_side() const { return height < width ? height : width; }
    friend bool operator==(const Size&, const Size&) = default;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Round half away from zero and saturate to [0, 255].
inline std::uint8_t to_u8(double v) {
    double r = std::round(v);
    if (r < 0) r = 0;
    if (r > 255) r = 255;
    return static_cast<std::uint8_t>(r);
}

template <class Scalar>
Image<double> to_double(const Image<Scalar>& img) {
    Image<double> out;
    for (int c = 0; c < 3; ++c) out[c] = img[c].template cast<double>();
    return out;
}

inline Image8 to_u8(const ImageF& img) {
    Image8 out(img.width(), img.height());
    for (int c = 0; c < 3; ++c) out[c] = img[c].unaryExpr([](double v) { return to_u8(v); });
    return out;
}

template <class Scalar, class MaskScalar>
void require_same_size(const Image<Scalar>& img, const Plane<MaskScalar>& mask) {
    if (img.height() != mask.rows() || img.width() != mask.cols())
        throw DimensionError("mask " + std::to_string(mask.cols()) + "x" + std::to_string(mask.rows()) +
                             " does not match image " + std::to_string(img.width()) + "x" +
                             std::to_string(img.height()));
}

/// Tight bounding rectangle of the set pixels; empty Rect when nothing is set.
inline Rect tight_rect(const BitMask& mask) {
    int x0 = static_cast<int>(mask.cols()), y0 = static_cast<int>(mask.rows()), x1 = -1, y1 = -1;
    for (Eigen::Index y = 0; y < mask.rows(); ++y)
        for (Eigen::Index x = 0; x < mask.cols(); ++x)
            if (mask(y, x)) {
                x0 = std::min<int>(x0, static_cast<int>(x));
                x1 = std::max<int>(x1, static_cast<int>(x));
                y0 = std::min<int>(y0, static_cast<int>(y));
                y1 = std::max<int>(y1, static_cast<int>(y));
            }
    if (x1 < 0) return {};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace anonypipe
