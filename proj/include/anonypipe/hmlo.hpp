#pragma once

#include "anonypipe/backend.hpp"

#include <optional>
#include <string>
#include <vector>

namespace anonypipe {

struct HmloOptions {
    int max_steps = 100;
    double loss_threshold = 0.02;
    double initial_step = 0.1;
    double min_step = 1e-4;
    /// Step multiplier after an accepted step.
    double step_growth = 2.0;
    bool finite_difference_fallback = true;
    double fd_step = 1e-2;
    bool masked_only = false;
    int bins = kHistogramBins;
};

struct HmloResult {
    Eigen::VectorXd latent;
    Image8 crop;
    /// Hard-binned loss at the start and after every accepted step.
    std::vector<double> trace;
    int steps = 0;
    bool converged = false;
    std::optional<std::string> error;

    double final_loss() const { return trace.empty() ? 0.0 : trace.back(); }
};

/// Gradient descent on the latent with backtracking until the hard loss drops below the threshold
/// or the step budget runs out. A step is kept when it lowers the hard loss, or keeps it and
/// lowers the surrogate; otherwise the latent is restored and the step size halved.
HmloResult hmlo_optimize(GeneratorBackend& backend, const Image8& crop, const BitMask& crop_mask,
                         const std::optional<Keypoints>& keypoints, const Eigen::VectorXd& init_latent,
                         const HmloOptions& options = {});

}  // namespace anonypipe
