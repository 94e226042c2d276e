#include "anonypipe/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace anonypipe {

BitMask rasterize_polygon(std::span<const Polygon> polygons, int width, int height) {
    BitMask mask = BitMask::Zero(height, width);
    std::vector<double> xs;
    for (const auto& poly : polygons) {
        if (poly.size() < 3)
            throw std::invalid_argument("polygon needs at least 3 vertices, got " + std::to_string(poly.size()));
        const std::size_t n = poly.size();
        for (int row = 0; row < height; ++row) {
            const double py = row + 0.5;
            xs.clear();
            for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
                const Point& a = poly[i];
                const Point& b = poly[j];
                if ((a.y > py) != (b.y > py)) xs.push_back((b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x);
            }
            if (xs.empty()) continue;
            std::sort(xs.begin(), xs.end());
            // a center is inside iff an odd number of crossings lie strictly to its right,
            // i.e. xs[k] <= center < xs[k+1] for even k
            for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
                const double lo = std::clamp(xs[k], -1.0, width + 1.0);
                int c0 = static_cast<int>(std::ceil(lo - 0.5));
                while (c0 + 0.5 < lo) ++c0;
                while (c0 > 0 && c0 - 1 + 0.5 >= lo) --c0;
                c0 = std::max(c0, 0);
                for (int col = c0; col < width && col + 0.5 < xs[k + 1]; ++col) mask(row, col) = true;
            }
        }
    }
    return mask;
}

BitMask rasterize_rle(const Rle& rle, int width, int height) {
    if (rle.height != height || rle.width != width)
        throw std::invalid_argument("RLE size (" + std::to_string(rle.height) + ", " + std::to_string(rle.width) +
                                    ") does not match image (" + std::to_string(height) + ", " +
                                    std::to_string(width) + ")");
    std::uint64_t total = 0;
    for (auto c : rle.counts) total += c;
    if (total != static_cast<std::uint64_t>(width) * height)
        throw std::invalid_argument("RLE counts sum to " + std::to_string(total) + ", expected " +
                                    std::to_string(static_cast<std::uint64_t>(width) * height));
    BitMask mask = BitMask::Zero(height, width);
    std::uint64_t pos = 0;
    bool value = false;
    for (auto run : rle.counts) {
        if (value)
            for (std::uint64_t k = pos; k < pos + run; ++k)
                mask(static_cast<Eigen::Index>(k % height), static_cast<Eigen::Index>(k / height)) = true;
        pos += run;
        value = !value;
    }
    return mask;
}

BitMask rasterize(const Segmentation& seg, int width, int height) {
    if (const auto* polys = std::get_if<std::vector<Polygon>>(&seg)) return rasterize_polygon(*polys, width, height);
    return rasterize_rle(std::get<Rle>(seg), width, height);
}

std::vector<std::uint32_t> decode_rle_string(std::string_view s) {
    // LEB128-like 5-bit groups offset by 48; counts after the third are deltas against counts[m-2]
    std::vector<std::uint32_t> counts;
    std::size_t p = 0;
    while (p < s.size()) {
        std::int64_t x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= s.size()) throw std::invalid_argument("truncated RLE string");
            const std::int64_t c = static_cast<std::int64_t>(s[p]) - 48;
            if (c < 0 || c > 63) throw std::invalid_argument("invalid character in RLE string");
            x |= (c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10)) x |= -(std::int64_t{1} << (5 * k));
        }
        if (counts.size() > 2) x += counts[counts.size() - 2];
        if (x < 0) throw std::invalid_argument("negative run in RLE string");
        counts.push_back(static_cast<std::uint32_t>(x));
    }
    return counts;
}

Box segmentation_box(const Segmentation& seg, int width, int height) {
    if (const auto* polys = std::get_if<std::vector<Polygon>>(&seg)) {
        double x0 = width, y0 = height, x1 = 0, y1 = 0;
        bool any = false;
        for (const auto& poly : *polys)
            for (const auto& p : poly) {
                any = true;
                x0 = std::min(x0, p.x);
                y0 = std::min(y0, p.y);
                x1 = std::max(x1, p.x);
                y1 = std::max(y1, p.y);
            }
        if (!any) return {};
        x0 = std::clamp(x0, 0.0, double(width));
        x1 = std::clamp(x1, 0.0, double(width));
        y0 = std::clamp(y0, 0.0, double(height));
        y1 = std::clamp(y1, 0.0, double(height));
        return {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
    }
    const Rect r = tight_rect(rasterize_rle(std::get<Rle>(seg), width, height));
    return {double(r.x), double(r.y), double(r.w), double(r.h)};
}

}  // namespace anonypipe
