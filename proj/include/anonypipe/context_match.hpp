#pragma once

#include "anonypipe/image.hpp"

#include <Eigen/Dense>

#include <optional>

namespace anonypipe {

inline constexpr int kHistogramBins = 256;
inline constexpr int kSoftMaskSize = 19;
inline constexpr double kSoftMaskSigma = 9.0;

/// H in [0, 1), S and V in [0, 1].
struct HsvImage {
    Plane<double> h, s, v;
};

/// Hexcone HSV of an image whose samples span [0, full_scale].
template <class Scalar>
HsvImage rgb_to_hsv(const Image<Scalar>& img, double full_scale = 255.0) {
    HsvImage out{Plane<double>(img.height(), img.width()), Plane<double>(img.height(), img.width()),
                  Plane<double>(img.height(), img.width())};
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double r = double(img[0](y, x)) / full_scale;
            const double g = double(img[1](y, x)) / full_scale;
            const double b = double(img[2](y, x)) / full_scale;
            const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
            const double delta = mx - mn;
            double h = 0;
            if (delta > 0) {
                if (mx == r)
                    h = (g - b) / delta;
                else if (mx == g)
                    h = 2.0 + (b - r) / delta;
                else
                    h = 4.0 + (r - g) / delta;
                h /= 6.0;
                if (h < 0) h += 1.0;
                if (h >= 1.0) h -= 1.0;
            }
            out.h(y, x) = h;
            out.s(y, x) = mx > 0 ? delta / mx : 0.0;
            out.v(y, x) = mx;
        }
    return out;
}

/// Inverse hexcone transform to [0, 1] RGB.
ImageF hsv_to_rgb(const HsvImage& hsv);

/// Normalized 1-D histogram over uniform bins on [0, 1]; the last bin is right-closed.
struct ChannelHistogram {
    Eigen::VectorXd mass;
    /// Cumulative mass; for hard-binned histograms computed from integer counts so it is exact.
    Eigen::VectorXd cdf;

    int bins() const { return static_cast<int>(mass.size()); }

    static ChannelHistogram from_mass(Eigen::VectorXd mass);
};

/// Hard-binned histogram. When a mask is supplied only its set pixels contribute.
ChannelHistogram channel_histogram(const Plane<double>& values, int bins = kHistogramBins,
                                   const BitMask* mask = nullptr);

/// Closed-form 1-D Wasserstein-1 distance: Σ |CDF_a − CDF_b| · (1 / bins).
double wasserstein1(const ChannelHistogram& a, const ChannelHistogram& b);

/// W1(P_S(x), P_S(y)) + W1(P_V(x), P_V(y)) on hard histograms of the HSV transforms.
double hmlo_loss(const Image8& x, const Image8& y, const BitMask* mask = nullptr, int bins = kHistogramBins);

// Differentiable surrogate -------------------------------------------------------------------

/// Histogram with each sample split linearly between the two nearest bin centers.
Eigen::VectorXd soft_histogram(const Plane<double>& values, int bins, const BitMask* mask = nullptr);

/// Reference side of the surrogate loss: soft S and V histograms of the original crop.
struct LossSpec {
    int bins = kHistogramBins;
    Eigen::VectorXd ref_s, ref_v;
    bool masked_only = false;
};

/// Soft histograms of x; when masked_only they cover only the mask pixels.
LossSpec make_loss_spec(const Image8& x, const BitMask& mask, bool masked_only, int bins = kHistogramBins);

struct SoftLoss {
    double loss = 0;
    /// dL / d(sample) for each RGB sample of y, in level units [0, 255]. Empty when not requested.
    ImageF grad;
};

/// Soft-binned surrogate of hmlo_loss for y given in level units (clamped to [0, 255]).
SoftLoss soft_hmlo_loss(const ImageF& y, const BitMask& mask, const LossSpec& spec, bool want_grad);

// Histogram matching and soft blending ----------------------------------------------------------

/// Per-channel CDF matching of source to reference. Each reference level is spread uniformly over
/// its unit interval, so the interpolated inverse CDF evaluated at a source level's midpoint
/// quantile rounds to an existing reference level.
Image8 match_histograms(const Image8& source, const Image8& reference);

/// Mask as {0, 1}, convolved with the normalized Gaussian (edge replicated), clamped to [0, 1].
SoftMask blur_mask(const BitMask& mask, int ksize = kSoftMaskSize, double sigma = kSoftMaskSigma);

/// x ⊙ (1 − m) + y ⊙ m, rounded half away from zero.
Image8 soft_blend(const Image8& x, const Image8& y, const SoftMask& m);

/// Histogram-match y to x, then blend into x with the blurred crop mask.
Image8 apply_hm(const Image8& x, const Image8& y, const BitMask& crop_mask);

}  // namespace anonypipe
