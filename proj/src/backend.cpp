#include "anonypipe/backend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>

namespace anonypipe {

namespace {

constexpr std::array<std::pair<int, int>, 19> kSkeleton{{{15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12},
                                                         {5, 11},  {6, 12},  {5, 6},   {5, 7},   {6, 8},
                                                         {7, 9},   {8, 10},  {1, 2},   {0, 1},   {0, 2},
                                                         {1, 3},   {2, 4},   {3, 5},   {4, 6}}};

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double sigmoid_grad(double v) {
    const double s = sigmoid(v);
    return s * (1.0 - s);
}

constexpr double kLevelScale = 254.0;  // sigmoid(0) * 254 = 127 exactly
constexpr double kShadeGain = 0.3;

double segment_distance(double px, double py, const Keypoint& a, const Keypoint& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (a.x + t * dx), py - (a.y + t * dy));
}

/// Latent-independent per-pixel quantities of a request.
struct Scene {
    int rows = 0, cols = 0;
    Plane<double> clothing;  // clothing weight a(p)
    Plane<double> edge;      // city-block distance to the nearest visible pixel
    Eigen::Vector3d context = Eigen::Vector3d::Zero();
    bool has_context = false;

    double yrel(int r) const { return (r + 0.5) / rows; }
};

Scene build_scene(const SynthesisRequest& req) {
    Scene sc;
    sc.rows = req.crop.height();
    sc.cols = req.crop.width();
    const BitMask& m = req.mask;

    sc.clothing = Plane<double>::Zero(sc.rows, sc.cols);
    const double radius = 0.06 * std::max(sc.rows, sc.cols) + 1.0;
    for (int r = 0; r < sc.rows; ++r)
        for (int c = 0; c < sc.cols; ++c) {
            if (!m(r, c)) continue;
            if (!req.keypoints) {
                sc.clothing(r, c) = 0.5 * sc.yrel(r);
                continue;
            }
            double cap = 0;
            for (auto [i, j] : kSkeleton) {
                const Keypoint& a = (*req.keypoints)[i];
                const Keypoint& b = (*req.keypoints)[j];
                if (a.confidence <= 0 || b.confidence <= 0) continue;
                cap = std::max(cap, std::clamp(1.0 - segment_distance(c + 0.5, r + 0.5, a, b) / radius, 0.0, 1.0));
            }
            sc.clothing(r, c) = 0.8 * cap;
        }

    // BFS from visible pixels
    const double inf = std::numeric_limits<double>::infinity();
    sc.edge = Plane<double>::Constant(sc.rows, sc.cols, inf);
    std::deque<std::pair<int, int>> queue;
    double sum[3] = {0, 0, 0};
    std::size_t visible = 0;
    for (int r = 0; r < sc.rows; ++r)
        for (int c = 0; c < sc.cols; ++c)
            if (!m(r, c)) {
                sc.edge(r, c) = 0;
                queue.emplace_back(r, c);
                for (int k = 0; k < 3; ++k) sum[k] += req.crop[k](r, c);
                ++visible;
            }
    while (!queue.empty()) {
        auto [r, c] = queue.front();
        queue.pop_front();
        const int nr[4] = {r - 1, r + 1, r, r};
        const int nc[4] = {c, c, c - 1, c + 1};
        for (int k = 0; k < 4; ++k) {
            if (nr[k] < 0 || nr[k] >= sc.rows || nc[k] < 0 || nc[k] >= sc.cols) continue;
            if (sc.edge(nr[k], nc[k]) <= sc.edge(r, c) + 1) continue;
            sc.edge(nr[k], nc[k]) = sc.edge(r, c) + 1;
            queue.emplace_back(nr[k], nc[k]);
        }
    }
    if (visible) {
        sc.has_context = true;
        for (int k = 0; k < 3; ++k) sc.context[k] = sum[k] / double(visible);
    }
    return sc;
}

struct LatentTerms {
    Eigen::Vector3d base, clothing, base_grad, clothing_grad;
    double tanh6, tanh6_grad, feather, feather_grad;
};

LatentTerms latent_terms(const Eigen::VectorXd& z) {
    LatentTerms t;
    for (int k = 0; k < 3; ++k) {
        t.base[k] = kLevelScale * sigmoid(z[k]);
        t.base_grad[k] = kLevelScale * sigmoid_grad(z[k]);
        t.clothing[k] = kLevelScale * sigmoid(z[3 + k]);
        t.clothing_grad[k] = kLevelScale * sigmoid_grad(z[3 + k]);
    }
    t.tanh6 = std::tanh(z[6]);
    t.tanh6_grad = 1.0 - t.tanh6 * t.tanh6;
    t.feather = 1.0 + 4.0 * sigmoid(z[7]);
    t.feather_grad = 4.0 * sigmoid_grad(z[7]);
    return t;
}

void check_request(const BackendInfo& info, const SynthesisRequest& req) {
    if (req.crop.height() != info.resolution.height || req.crop.width() != info.resolution.width)
        throw BackendError(info.name + ": crop is " + std::to_string(req.crop.width()) + "x" +
                           std::to_string(req.crop.height()) + ", backend expects " +
                           std::to_string(info.resolution.width) + "x" + std::to_string(info.resolution.height));
    if (req.mask.rows() != req.crop.height() || req.mask.cols() != req.crop.width())
        throw BackendError(info.name + ": mask does not match crop");
    if (req.latent.size() != info.latent_dim)
        throw BackendError(info.name + ": latent has " + std::to_string(req.latent.size()) + " entries, expected " +
                           std::to_string(info.latent_dim));
    if (!req.latent.allFinite()) throw BackendError(info.name + ": latent is not finite");
    if (info.requires_keypoints && !req.keypoints) throw MissingKeypoints(info.name + ": keypoints required");
}

}  // namespace

std::span<const std::pair<int, int>> coco_skeleton() { return kSkeleton; }

SynthesisRequest make_request(const BackendInfo& info, const Image8& crop, const BitMask& crop_mask,
                              const std::optional<Keypoints>& keypoints, const Eigen::VectorXd& latent) {
    require_same_size(crop, crop_mask);
    SynthesisRequest req{crop, crop_mask, keypoints, latent};
    for (int c = 0; c < 3; ++c) req.crop[c] = crop_mask.select(std::uint8_t{0}, crop[c]);
    if (!info.requires_keypoints) req.keypoints.reset();
    else if (!keypoints) throw MissingKeypoints(info.name + ": keypoints required");
    return req;
}

Image8 synthesize(GeneratorBackend& backend, const Image8& crop, const BitMask& crop_mask,
                  const std::optional<Keypoints>& keypoints, const Eigen::VectorXd& latent) {
    return backend.synthesize(make_request(backend.info(), crop, crop_mask, keypoints, latent));
}

std::size_t select_backend(RegionKind kind, int region_max_side, std::span<const BackendInfo> backends) {
    std::optional<std::size_t> fit, largest;
    for (std::size_t i = 0; i < backends.size(); ++i) {
        const auto& b = backends[i];
        if (b.target != kind) continue;
        const int side = b.resolution.min_side();
        if (!largest || side > backends[*largest].resolution.min_side()) largest = i;
        if (side >= region_max_side && (!fit || side < backends[*fit].resolution.min_side())) fit = i;
    }
    if (!largest) throw BackendError("no " + to_string(kind) + " backend configured");
    return fit ? *fit : *largest;
}

ToyGenerator::ToyGenerator(BackendInfo info) : info_(std::move(info)) {
    if (info_.latent_dim != kLatentDim) throw BackendError("toy generator latent_dim must be 8");
    info_.supports_gradient = true;
}

BackendInfo ToyGenerator::face_info(int side) {
    return {"toy-face-" + std::to_string(side), {side, side}, kLatentDim, false, true, RegionKind::face};
}

BackendInfo ToyGenerator::body_info() { return {"toy-body-288x160", {288, 160}, kLatentDim, true, true, RegionKind::body}; }

std::vector<BackendInfo> builtin_toy_infos() {
    return {ToyGenerator::face_info(128), ToyGenerator::face_info(256), ToyGenerator::body_info()};
}

Eigen::Vector3d ToyGenerator::base_color(const Eigen::VectorXd& latent) { return latent_terms(latent).base; }

ImageF ToyGenerator::render(const SynthesisRequest& req) const {
    check_request(info_, req);
    const Scene sc = build_scene(req);
    const LatentTerms t = latent_terms(req.latent);
    ImageF out = to_double(req.crop);
    for (int r = 0; r < sc.rows; ++r) {
        const double shade = 1.0 + kShadeGain * t.tanh6 * (sc.yrel(r) - 0.5);
        for (int c = 0; c < sc.cols; ++c) {
            if (!req.mask(r, c)) continue;
            const double a = sc.clothing(r, c);
            const double e = sc.has_context ? 1.0 - std::exp(-sc.edge(r, c) / t.feather) : 1.0;
            for (int k = 0; k < 3; ++k) {
                const double fill = (1 - a) * t.base[k] + a * t.clothing[k];
                const double raw = shade * (e * fill + (1 - e) * sc.context[k]);
                out[k](r, c) = std::clamp(raw, 0.0, 255.0);
            }
        }
    }
    return out;
}

Eigen::VectorXd ToyGenerator::backpropagate(const SynthesisRequest& req, const ImageF& upstream) const {
    check_request(info_, req);
    require_same_size(upstream, req.mask);
    const Scene sc = build_scene(req);
    const LatentTerms t = latent_terms(req.latent);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(kLatentDim);
    for (int r = 0; r < sc.rows; ++r) {
        const double yoff = sc.yrel(r) - 0.5;
        const double shade = 1.0 + kShadeGain * t.tanh6 * yoff;
        for (int c = 0; c < sc.cols; ++c) {
            if (!req.mask(r, c)) continue;
            const double a = sc.clothing(r, c);
            double e = 1.0, de_dz7 = 0.0;
            if (sc.has_context && std::isfinite(sc.edge(r, c))) {
                const double d = sc.edge(r, c);
                const double decay = std::exp(-d / t.feather);
                e = 1.0 - decay;
                de_dz7 = -decay * d / (t.feather * t.feather) * t.feather_grad;
            }
            for (int k = 0; k < 3; ++k) {
                const double u = upstream[k](r, c);
                if (u == 0) continue;
                const double fill = (1 - a) * t.base[k] + a * t.clothing[k];
                const double inner = e * fill + (1 - e) * sc.context[k];
                const double raw = shade * inner;
                if (raw < 0 || raw > 255) continue;
                g[k] += u * shade * e * (1 - a) * t.base_grad[k];
                g[3 + k] += u * shade * e * a * t.clothing_grad[k];
                g[6] += u * kShadeGain * t.tanh6_grad * yoff * inner;
                g[7] += u * shade * (fill - sc.context[k]) * de_dz7;
            }
        }
    }
    return g;
}

Image8 ToyGenerator::synthesize(const SynthesisRequest& req) { return to_u8(render(req)); }

LossGrad ToyGenerator::loss_grad(const SynthesisRequest& req, const LossSpec& spec) {
    const ImageF y = render(req);
    const SoftLoss sl = soft_hmlo_loss(y, req.mask, spec, true);
    return {sl.loss, backpropagate(req, sl.grad)};
}

}  // namespace anonypipe
