#pragma once

#include "anonypipe/image.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace anonypipe {

inline constexpr std::uint8_t kMaskoutLevel = 127;
inline constexpr double kDefaultBlurSigma = 7.0;

/// 3·sigma rounded up to the nearest odd integer (21 for sigma = 7).
int blur_kernel_size(double sigma);

/// Normalized 1-D Gaussian taps w_i ∝ exp(-i² / 2σ²), i ∈ [-(k-1)/2, (k-1)/2].
Eigen::VectorXd gaussian_kernel(double sigma, int ksize);

/// Separable convolution with edge replication; the same taps run along rows and columns.
template <class Scalar>
Plane<double> convolve_separable(const Plane<Scalar>& src, const Eigen::VectorXd& taps) {
    const Eigen::Index rows = src.rows(), cols = src.cols();
    const Eigen::Index half = taps.size() / 2;
    Plane<double> in = src.template cast<double>();
    Plane<double> tmp(rows, cols), out(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0;
            for (Eigen::Index k = -half; k <= half; ++k) {
                const Eigen::Index xx = std::clamp<Eigen::Index>(x + k, 0, cols - 1);
                acc += taps[k + half] * in(y, xx);
            }
            tmp(y, x) = acc;
        }
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0;
            for (Eigen::Index k = -half; k <= half; ++k) {
                const Eigen::Index yy = std::clamp<Eigen::Index>(y + k, 0, rows - 1);
                acc += taps[k + half] * tmp(yy, x);
            }
            out(y, x) = acc;
        }
    return out;
}

template <class Scalar>
ImageF gaussian_blur(const Image<Scalar>& img, double sigma, int ksize) {
    const Eigen::VectorXd taps = gaussian_kernel(sigma, ksize);
    ImageF out;
    for (int c = 0; c < 3; ++c) out[c] = convolve_separable(img[c], taps);
    return out;
}

/// I ⊙ (1 − M) + M ⊙ 127.
Image8 maskout(const Image8& image, const BitMask& mask);

/// I ⊙ (1 − M) + M ⊙ I_blur, with I_blur the whole image blurred at the given sigma.
Image8 gaussian_blur_anonymize(const Image8& image, const BitMask& mask, double sigma = kDefaultBlurSigma);

}  // namespace anonypipe
