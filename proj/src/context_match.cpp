#include "anonypipe/context_match.hpp"

#include "anonypipe/obfuscate.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace anonypipe {

ImageF hsv_to_rgb(const HsvImage& hsv) {
    const int h = static_cast<int>(hsv.v.rows()), w = static_cast<int>(hsv.v.cols());
    ImageF out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double s = hsv.s(y, x), v = hsv.v(y, x);
            const double hh = hsv.h(y, x) * 6.0;
            const int sector = static_cast<int>(std::floor(hh)) % 6;
            const double f = hh - std::floor(hh);
            const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
            std::array<double, 3> rgb{};
            switch (sector) {
                case 0: rgb = {v, t, p}; break;
                case 1: rgb = {q, v, p}; break;
                case 2: rgb = {p, v, t}; break;
                case 3: rgb = {p, q, v}; break;
                case 4: rgb = {t, p, v}; break;
                default: rgb = {v, p, q}; break;
            }
            for (int c = 0; c < 3; ++c) out[c](y, x) = rgb[c];
        }
    return out;
}

ChannelHistogram ChannelHistogram::from_mass(Eigen::VectorXd mass) {
    ChannelHistogram hist;
    hist.cdf.resize(mass.size());
    double acc = 0;
    for (Eigen::Index i = 0; i < mass.size(); ++i) hist.cdf[i] = (acc += mass[i]);
    hist.mass = std::move(mass);
    return hist;
}

namespace {

int hard_bin(double v, int bins) {
    if (!(v > 0)) return 0;
    const int b = static_cast<int>(v * bins);
    return b >= bins ? bins - 1 : b;
}

}  // namespace

ChannelHistogram channel_histogram(const Plane<double>& values, int bins, const BitMask* mask) {
    if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
    if (mask && (mask->rows() != values.rows() || mask->cols() != values.cols()))
        throw DimensionError("histogram mask does not match the value plane");
    std::vector<std::uint64_t> counts(bins, 0);
    std::uint64_t n = 0;
    for (Eigen::Index y = 0; y < values.rows(); ++y)
        for (Eigen::Index x = 0; x < values.cols(); ++x) {
            if (mask && !(*mask)(y, x)) continue;
            ++counts[hard_bin(values(y, x), bins)];
            ++n;
        }
    if (n == 0) throw std::invalid_argument("histogram over zero samples");
    ChannelHistogram hist;
    hist.mass.resize(bins);
    hist.cdf.resize(bins);
    std::uint64_t cum = 0;
    for (int i = 0; i < bins; ++i) {
        cum += counts[i];
        hist.mass[i] = double(counts[i]) / double(n);
        hist.cdf[i] = double(cum) / double(n);
    }
    return hist;
}

double wasserstein1(const ChannelHistogram& a, const ChannelHistogram& b) {
    if (a.bins() != b.bins())
        throw std::invalid_argument("histogram bin layouts differ: " + std::to_string(a.bins()) + " vs " +
                                    std::to_string(b.bins()));
    return (a.cdf - b.cdf).cwiseAbs().sum() / a.bins();
}

double hmlo_loss(const Image8& x, const Image8& y, const BitMask* mask, int bins) {
    if (x.width() != y.width() || x.height() != y.height()) throw DimensionError("hmlo_loss crops differ in size");
    const HsvImage hx = rgb_to_hsv(x), hy = rgb_to_hsv(y);
    return wasserstein1(channel_histogram(hx.s, bins, mask), channel_histogram(hy.s, bins, mask)) +
           wasserstein1(channel_histogram(hx.v, bins, mask), channel_histogram(hy.v, bins, mask));
}

namespace {

struct SoftBin {
    int lo;       // receives 1 - t; lo + 1 receives t
    double t;
    bool interior;  // false when all mass sits in an end bin
};

SoftBin soft_bin(double v, int bins) {
    const double p = v * bins - 0.5;
    if (!(p > 0)) return {0, 0, false};
    if (p >= bins - 1) return {bins - 1, 0, false};
    const int lo = static_cast<int>(std::floor(p));
    return {lo, p - lo, true};
}

}  // namespace

Eigen::VectorXd soft_histogram(const Plane<double>& values, int bins, const BitMask* mask) {
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(bins);
    double n = 0;
    for (Eigen::Index y = 0; y < values.rows(); ++y)
        for (Eigen::Index x = 0; x < values.cols(); ++x) {
            if (mask && !(*mask)(y, x)) continue;
            const SoftBin sb = soft_bin(values(y, x), bins);
            mass[sb.lo] += 1.0 - sb.t;
            if (sb.interior) mass[sb.lo + 1] += sb.t;
            n += 1;
        }
    if (n == 0) throw std::invalid_argument("histogram over zero samples");
    return mass / n;
}

LossSpec make_loss_spec(const Image8& x, const BitMask& mask, bool masked_only, int bins) {
    require_same_size(x, mask);
    const HsvImage hsv = rgb_to_hsv(x);
    const BitMask* restrict_to = masked_only ? &mask : nullptr;
    return {bins, soft_histogram(hsv.s, bins, restrict_to), soft_histogram(hsv.v, bins, restrict_to), masked_only};
}

SoftLoss soft_hmlo_loss(const ImageF& y, const BitMask& mask, const LossSpec& spec, bool want_grad) {
    require_same_size(y, mask);
    const int bins = spec.bins;
    if (spec.ref_s.size() != bins || spec.ref_v.size() != bins)
        throw std::invalid_argument("reference histograms do not match the bin count");
    const int rows = y.height(), cols = y.width();

    ImageF clamped;
    for (int c = 0; c < 3; ++c) clamped[c] = y[c].cwiseMax(0.0).cwiseMin(255.0);
    const HsvImage hsv = rgb_to_hsv(clamped);
    const BitMask* restrict_to = spec.masked_only ? &mask : nullptr;
    const Eigen::VectorXd ys = soft_histogram(hsv.s, bins, restrict_to);
    const Eigen::VectorXd yv = soft_histogram(hsv.v, bins, restrict_to);

    auto cumsum = [](const Eigen::VectorXd& m) {
        Eigen::VectorXd c(m.size());
        double acc = 0;
        for (Eigen::Index i = 0; i < m.size(); ++i) c[i] = (acc += m[i]);
        return c;
    };
    const Eigen::VectorXd ds = cumsum(ys) - cumsum(spec.ref_s);
    const Eigen::VectorXd dv = cumsum(yv) - cumsum(spec.ref_v);

    SoftLoss out;
    out.loss = (ds.cwiseAbs().sum() + dv.cwiseAbs().sum()) / bins;
    if (!want_grad) return out;

    // moving a sample up by dv lowers CDF at its lower bin by bins·dv/N, so dW1/dv = -sign(ΔCDF)/N
    const double n = spec.masked_only ? double(mask.count()) : double(rows) * cols;
    auto sgn = [](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); };
    out.grad = ImageF(cols, rows, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (spec.masked_only && !mask(r, c)) continue;
            const SoftBin bs = soft_bin(hsv.s(r, c), bins);
            const SoftBin bv = soft_bin(hsv.v(r, c), bins);
            const double gs = bs.interior ? -sgn(ds[bs.lo]) / n : 0.0;
            const double gv = bv.interior ? -sgn(dv[bv.lo]) / n : 0.0;
            if (gs == 0 && gv == 0) continue;

            std::array<double, 3> lv{clamped[0](r, c), clamped[1](r, c), clamped[2](r, c)};
            int imax = 0, imin = 0;
            for (int k = 1; k < 3; ++k) {
                if (lv[k] > lv[imax]) imax = k;
                if (lv[k] < lv[imin]) imin = k;
            }
            const double mx = lv[imax], mn = lv[imin];
            std::array<double, 3> g{0, 0, 0};
            g[imax] += gv / 255.0;
            if (mx > 0 && imax != imin) {
                g[imax] += gs * mn / (mx * mx);
                g[imin] += gs * (-1.0 / mx);
            }
            for (int k = 0; k < 3; ++k) {
                const double raw = y[k](r, c);
                if (raw < 0 || raw > 255) g[k] = 0;
                out.grad[k](r, c) = g[k];
            }
        }
    return out;
}

Image8 match_histograms(const Image8& source, const Image8& reference) {
    Image8 out(source.width(), source.height());
    for (int c = 0; c < 3; ++c) {
        std::array<std::uint64_t, 256> sc{}, rc{};
        for (Eigen::Index i = 0; i < source[c].size(); ++i) ++sc[source[c].data()[i]];
        for (Eigen::Index i = 0; i < reference[c].size(); ++i) ++rc[reference[c].data()[i]];
        const std::uint64_t sc_total = source[c].size(), rc_total = reference[c].size();
        if (sc_total == 0) continue;
        if (rc_total == 0) throw std::invalid_argument("histogram matching needs a non-empty reference");

        // The reference CDF is linear across each level's unit interval [v - 1/2, v + 1/2];
        // evaluating its inverse at the source level's midpoint quantile and rounding picks the
        // reference level containing that quantile.
        std::array<std::uint8_t, 256> lut{};
        std::uint64_t cum = 0;
        int r = 0;
        std::uint64_t rcum = rc[0];
        for (int v = 0; v < 256; ++v) {
            if (!sc[v]) continue;
            const std::uint64_t rank = std::min<std::uint64_t>((2 * cum + sc[v]) * rc_total / (2 * sc_total), rc_total - 1);
            while (rcum <= rank) rcum += rc[++r];
            lut[v] = static_cast<std::uint8_t>(r);
            cum += sc[v];
        }
        out[c] = source[c].unaryExpr([&](std::uint8_t v) { return lut[v]; });
    }
    return out;
}

SoftMask blur_mask(const BitMask& mask, int ksize, double sigma) {
    if (mask.size() == 0) return SoftMask(mask.rows(), mask.cols());
    return convolve_separable(mask, gaussian_kernel(sigma, ksize)).cwiseMax(0.0).cwiseMin(1.0);
}

Image8 soft_blend(const Image8& x, const Image8& y, const SoftMask& m) {
    if (x.width() != y.width() || x.height() != y.height()) throw DimensionError("blend inputs differ in size");
    require_same_size(x, m);
    Image8 out(x.width(), x.height());
    for (int c = 0; c < 3; ++c)
        out[c] = (x[c].cast<double>() * (1.0 - m) + y[c].cast<double>() * m).unaryExpr([](double v) { return to_u8(v); });
    return out;
}

Image8 apply_hm(const Image8& x, const Image8& y, const BitMask& crop_mask) {
    if (!crop_mask.any()) return x;
    return soft_blend(x, match_histograms(y, x), blur_mask(crop_mask));
}

}  // namespace anonypipe
