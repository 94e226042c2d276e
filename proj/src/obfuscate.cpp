#include "anonypipe/obfuscate.hpp"

#include <string>

namespace anonypipe {

int blur_kernel_size(double sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("blur sigma must be positive");
    int k = static_cast<int>(std::ceil(3.0 * sigma - 1e-9));
    if (k % 2 == 0) ++k;
    return k;
}

Eigen::VectorXd gaussian_kernel(double sigma, int ksize) {
    if (ksize < 1 || ksize % 2 == 0)
        throw std::invalid_argument("Gaussian kernel size must be odd and positive, got " + std::to_string(ksize));
    if (!(sigma > 0)) throw std::invalid_argument("Gaussian sigma must be positive");
    const int half = ksize / 2;
    Eigen::VectorXd w(ksize);
    for (int i = -half; i <= half; ++i) w[i + half] = std::exp(-double(i) * i / (2.0 * sigma * sigma));
    return w / w.sum();
}

Image8 maskout(const Image8& image, const BitMask& mask) {
    require_same_size(image, mask);
    Image8 out = image;
    for (int c = 0; c < 3; ++c) out[c] = mask.select(kMaskoutLevel, image[c]);
    return out;
}

Image8 gaussian_blur_anonymize(const Image8& image, const BitMask& mask, double sigma) {
    require_same_size(image, mask);
    if (!mask.any()) return image;
    const ImageF blurred = gaussian_blur(image, sigma, blur_kernel_size(sigma));
    Image8 out = image;
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index y = 0; y < mask.rows(); ++y)
            for (Eigen::Index x = 0; x < mask.cols(); ++x)
                if (mask(y, x)) out[c](y, x) = to_u8(blurred[c](y, x));
    return out;
}

}  // namespace anonypipe
