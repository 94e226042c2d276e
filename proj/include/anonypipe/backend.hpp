#pragma once

#include "anonypipe/context_match.hpp"
#include "anonypipe/dataset.hpp"
#include "anonypipe/region.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace anonypipe {

struct BackendInfo {
    std::string name;
    Size resolution;
    int latent_dim = 0;
    bool requires_keypoints = false;
    bool supports_gradient = false;
    RegionKind target = RegionKind::body;

    friend bool operator==(const BackendInfo&, const BackendInfo&) = default;
};

/// One generator call. Keypoints are in crop coordinates with confidence already reduced to 0 or 1.
struct SynthesisRequest {
    Image8 crop;
    BitMask mask;
    std::optional<Keypoints> keypoints;
    Eigen::VectorXd latent;
};

struct LossGrad {
    double loss = 0;
    Eigen::VectorXd grad;
};

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a keypoint-conditioned backend is called without keypoints.
class MissingKeypoints : public BackendError {
public:
    using BackendError::BackendError;
};

/// A generator session. One request in flight per instance.
class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual BackendInfo info() const = 0;
    virtual Image8 synthesize(const SynthesisRequest& request) = 0;
    /// Surrogate loss of the synthesized crop against spec and its gradient w.r.t. the latent.
    virtual LossGrad loss_grad(const SynthesisRequest& request, const LossSpec& spec) = 0;
};

/// Validates the request against the backend, zeroes every masked input pixel and delegates.
Image8 synthesize(GeneratorBackend& backend, const Image8& crop, const BitMask& crop_mask,
                  const std::optional<Keypoints>& keypoints, const Eigen::VectorXd& latent);

/// Builds the request that synthesize() hands to the backend (masked pixels zeroed).
SynthesisRequest make_request(const BackendInfo& info, const Image8& crop, const BitMask& crop_mask,
                              const std::optional<Keypoints>& keypoints, const Eigen::VectorXd& latent);

/// Smallest backend of the region's kind whose shorter side covers the region's longer side;
/// the largest one when none does.
std::size_t select_backend(RegionKind kind, int region_max_side, std::span<const BackendInfo> backends);

/// COCO skeleton as 0-based keypoint index pairs.
std::span<const std::pair<int, int>> coco_skeleton();

// Built-in toy generator ---------------------------------------------------------------------

/// Deterministic parametric figure renderer with an analytic latent gradient.
///
/// Latent layout (8 dims): 0-2 base RGB, 3-5 clothing RGB (both through a sigmoid scaled so that
/// 0 maps to level 127), 6 vertical shading, 7 edge-feather width. Inside the mask the figure
/// fades into the mean color of the visible context over the feather width. With keypoints,
/// clothing capsules are drawn along the skeleton; without, clothing blends in toward the bottom.
class ToyGenerator final : public GeneratorBackend {
public:
    static constexpr int kLatentDim = 8;

    explicit ToyGenerator(BackendInfo info);

    static BackendInfo face_info(int side = 128);
    static BackendInfo body_info();

    BackendInfo info() const override { return info_; }
    Image8 synthesize(const SynthesisRequest& request) override;
    LossGrad loss_grad(const SynthesisRequest& request, const LossSpec& spec) override;

    /// Unquantized render in level units; pixels outside the mask are the input crop.
    ImageF render(const SynthesisRequest& request) const;
    /// Σ_p Σ_k upstream_k(p) · ∂render_k(p)/∂latent.
    Eigen::VectorXd backpropagate(const SynthesisRequest& request, const ImageF& upstream) const;

    /// Base color in level units for a latent (exposed for tests).
    static Eigen::Vector3d base_color(const Eigen::VectorXd& latent);

private:
    BackendInfo info_;
};

/// The default toy backend set: faces at 128² and 256², bodies at 288×160.
std::vector<BackendInfo> builtin_toy_infos();

}  // namespace anonypipe
