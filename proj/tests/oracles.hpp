#pragma once

// Reference implementations used as test oracles. Each one is written the slow, direct way and
// shares no code with the library beyond the plain data types.

#include "anonypipe/backend.hpp"
#include "anonypipe/dataset.hpp"
#include "anonypipe/latent.hpp"
#include "anonypipe/region.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

namespace oracle {

using namespace anonypipe;

/// Per-pixel point-in-polygon (crossing test at the pixel center), union over polygons.
inline BitMask pnpoly(const std::vector<Polygon>& polys, int w, int h) {
    BitMask m = BitMask::Zero(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            for (const auto& poly : polys) {
                bool inside = false;
                for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
                    const Point& a = poly[i];
                    const Point& b = poly[j];
                    if ((a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) inside = !inside;
                }
                if (inside) m(y, x) = true;
            }
        }
    return m;
}

/// Column-major run lengths starting with a background run.
inline Rle rle_encode(const BitMask& m) {
    Rle rle{static_cast<int>(m.rows()), static_cast<int>(m.cols()), {}};
    bool current = false;
    std::uint32_t run = 0;
    for (Eigen::Index x = 0; x < m.cols(); ++x)
        for (Eigen::Index y = 0; y < m.rows(); ++y) {
            if (m(y, x) != current) {
                rle.counts.push_back(run);
                run = 0;
                current = !current;
            }
            ++run;
        }
    rle.counts.push_back(run);
    return rle;
}

/// COCO compact string encoding of counts (the inverse of decode_rle_string).
inline std::string rle_string(const std::vector<std::uint32_t>& counts) {
    std::string s;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        long long x = counts[i];
        if (i > 2) x -= static_cast<long long>(counts[i - 2]);
        bool more = true;
        while (more) {
            long long c = x & 0x1f;
            x >>= 5;
            more = (c & 0x10) ? x != -1 : x != 0;
            if (more) c |= 0x20;
            s.push_back(static_cast<char>(c + 48));
        }
    }
    return s;
}

/// Square-window dilation by direct neighbourhood scan.
inline BitMask dilate(const BitMask& m, int r) {
    BitMask out = BitMask::Zero(m.rows(), m.cols());
    for (Eigen::Index y = 0; y < m.rows(); ++y)
        for (Eigen::Index x = 0; x < m.cols(); ++x)
            for (Eigen::Index dy = -r; dy <= r && !out(y, x); ++dy)
                for (Eigen::Index dx = -r; dx <= r; ++dx) {
                    const Eigen::Index yy = y + dy, xx = x + dx;
                    if (yy >= 0 && xx >= 0 && yy < m.rows() && xx < m.cols() && m(yy, xx)) {
                        out(y, x) = true;
                        break;
                    }
                }
    return out;
}

inline double box_iou(const Box& a, const Box& b) {
    const double iw = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double ih = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0 ? inter / uni : 0.0;
}

struct OraclePair {
    std::size_t face;
    std::int64_t instance;
    double iou;
};

/// Enumerate every pair, sort by the documented key, assign greedily.
inline std::vector<OraclePair> match(const std::vector<FaceBox>& faces, const std::vector<SegmentBox>& segs,
                                     double floor = 0.01) {
    std::vector<OraclePair> all;
    for (std::size_t f = 0; f < faces.size(); ++f)
        for (const auto& s : segs) {
            const double v = box_iou(faces[f].box, s.box);
            if (v >= floor) all.push_back({f, s.instance_id, v});
        }
    std::stable_sort(all.begin(), all.end(), [&](const OraclePair& a, const OraclePair& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (faces[a.face].score != faces[b.face].score) return faces[a.face].score > faces[b.face].score;
        if (a.instance != b.instance) return a.instance < b.instance;
        return faces[a.face].order < faces[b.face].order;
    });
    std::vector<bool> face_used(faces.size(), false);
    std::map<std::int64_t, bool> seg_used;
    std::vector<OraclePair> out;
    for (const auto& p : all) {
        if (face_used[p.face] || seg_used[p.instance]) continue;
        face_used[p.face] = true;
        seg_used[p.instance] = true;
        out.push_back(p);
    }
    return out;
}

/// Dense 2-D Gaussian convolution with an explicitly built (2k+1)² kernel and clamped borders.
inline ImageF dense_blur(const Image8& img, double sigma, int ksize) {
    const int half = ksize / 2;
    std::vector<double> k1(ksize);
    for (int i = 0; i < ksize; ++i) k1[i] = std::exp(-double((i - half) * (i - half)) / (2 * sigma * sigma));
    const double s = std::accumulate(k1.begin(), k1.end(), 0.0);
    std::vector<double> k2(ksize * ksize);
    for (int i = 0; i < ksize; ++i)
        for (int j = 0; j < ksize; ++j) k2[i * ksize + j] = k1[i] * k1[j] / (s * s);
    ImageF out(img.width(), img.height(), 0.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) {
                double acc = 0;
                for (int i = 0; i < ksize; ++i)
                    for (int j = 0; j < ksize; ++j) {
                        const int yy = std::clamp(y + i - half, 0, img.height() - 1);
                        const int xx = std::clamp(x + j - half, 0, img.width() - 1);
                        acc += k2[i * ksize + j] * img[c](yy, xx);
                    }
                out[c](y, x) = acc;
            }
    return out;
}

/// Optimal 1-D transport cost between two histograms on bin centers spaced 1/bins apart,
/// computed by moving mass greedily from left to right (north-west corner rule).
inline double transport_w1(std::vector<double> a, std::vector<double> b) {
    const double bins = double(a.size());
    std::size_t i = 0, j = 0;
    double cost = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= 1e-15) { ++i; continue; }
        if (b[j] <= 1e-15) { ++j; continue; }
        const double m = std::min(a[i], b[j]);
        cost += m * std::abs(double(i) - double(j)) / bins;
        a[i] -= m;
        b[j] -= m;
    }
    return cost;
}

/// Minimum transport cost over all couplings by exhaustive search on a discretized mass grid.
/// Histograms must have masses that are multiples of 1/units.
inline double exhaustive_w1(const std::vector<int>& a, const std::vector<int>& b, int units) {
    // depth-first over unit moves: assign each unit of a (in order) to some remaining unit of b
    std::vector<int> sources;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int k = 0; k < a[i]; ++k) sources.push_back(static_cast<int>(i));
    std::vector<int> remaining = b;
    const double bins = double(a.size());
    double best = 1e300;
    std::function<void(std::size_t, double)> go = [&](std::size_t idx, double cost) {
        if (cost >= best) return;
        if (idx == sources.size()) {
            best = cost;
            return;
        }
        for (std::size_t j = 0; j < remaining.size(); ++j) {
            if (!remaining[j]) continue;
            --remaining[j];
            go(idx + 1, cost + std::abs(double(sources[idx]) - double(j)) / bins / units);
            ++remaining[j];
        }
    };
    go(0, 0.0);
    return best;
}

/// Histogram matching by sorting: every source pixel takes the reference sample whose rank
/// sits at the midpoint quantile of the source pixel's level.
inline Plane<std::uint8_t> quantile_match(const Plane<std::uint8_t>& src, const Plane<std::uint8_t>& ref) {
    std::vector<int> s(src.data(), src.data() + src.size());
    std::vector<int> r(ref.data(), ref.data() + ref.size());
    std::sort(s.begin(), s.end());
    std::sort(r.begin(), r.end());
    const std::size_t ns = s.size(), nr = r.size();
    Plane<std::uint8_t> out(src.rows(), src.cols());
    for (Eigen::Index i = 0; i < src.size(); ++i) {
        const int v = src.data()[i];
        const std::size_t lo = std::lower_bound(s.begin(), s.end(), v) - s.begin();
        const std::size_t hi = std::upper_bound(s.begin(), s.end(), v) - s.begin();
        const std::size_t rank = std::min((lo + hi) * nr / (2 * ns), nr - 1);
        out.data()[i] = static_cast<std::uint8_t>(r[rank]);
    }
    return out;
}

/// Kolmogorov-Smirnov distance between the empirical level distributions of two planes.
inline double ks_distance(const Plane<std::uint8_t>& a, const Plane<std::uint8_t>& b) {
    std::array<double, 256> ca{}, cb{};
    for (Eigen::Index i = 0; i < a.size(); ++i) ca[a.data()[i]] += 1.0 / double(a.size());
    for (Eigen::Index i = 0; i < b.size(); ++i) cb[b.data()[i]] += 1.0 / double(b.size());
    double fa = 0, fb = 0, d = 0;
    for (int v = 0; v < 256; ++v) {
        fa += ca[v];
        fb += cb[v];
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

/// Linear scan for the nearest column, strict < so the lowest index wins ties.
inline Eigen::Index scan_nearest(const Eigen::VectorXd& w, const Eigen::MatrixXd& centers) {
    Eigen::Index best = 0;
    double best_d = 1e300;
    for (Eigen::Index k = 0; k < centers.cols(); ++k) {
        double d = 0;
        for (Eigen::Index i = 0; i < w.size(); ++i) d += (w[i] - centers(i, k)) * (w[i] - centers(i, k));
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

/// Central-difference gradient of f at x.
template <class F>
Eigen::VectorXd central_difference(F&& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd lo = x, hi = x;
        lo[i] -= h;
        hi[i] += h;
        g[i] = (f(hi) - f(lo)) / (2 * h);
    }
    return g;
}

}  // namespace oracle
