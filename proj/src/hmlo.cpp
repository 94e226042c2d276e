#include "anonypipe/hmlo.hpp"

namespace anonypipe {

namespace {

class Objective {
public:
    Objective(GeneratorBackend& backend, const Image8& crop, const BitMask& mask, const std::optional<Keypoints>& kps,
              const HmloOptions& opt)
        : backend_(backend), info_(backend.info()), x_(crop), opt_(opt),
          request_(make_request(info_, crop, mask, kps, Eigen::VectorXd::Zero(info_.latent_dim))),
          spec_(make_loss_spec(crop, mask, opt.masked_only, opt.bins)) {
        if (!info_.supports_gradient && !opt.finite_difference_fallback)
            throw BackendError(info_.name + " has no gradients and finite differences are disabled");
    }

    std::pair<double, Image8> hard(const Eigen::VectorXd& latent) {
        request_.latent = latent;
        Image8 y = backend_.synthesize(request_);
        const double loss = hmlo_loss(x_, y, opt_.masked_only ? &request_.mask : nullptr, opt_.bins);
        return {loss, std::move(y)};
    }

    LossGrad soft(const Eigen::VectorXd& latent) {
        if (info_.supports_gradient) {
            request_.latent = latent;
            return backend_.loss_grad(request_, spec_);
        }
        LossGrad out{soft_value(latent), Eigen::VectorXd(latent.size())};
        for (Eigen::Index i = 0; i < latent.size(); ++i) {
            Eigen::VectorXd lo = latent, hi = latent;
            lo[i] -= opt_.fd_step;
            hi[i] += opt_.fd_step;
            out.grad[i] = (soft_value(hi) - soft_value(lo)) / (2 * opt_.fd_step);
        }
        return out;
    }

private:
    double soft_value(const Eigen::VectorXd& latent) {
        request_.latent = latent;
        return soft_hmlo_loss(to_double(backend_.synthesize(request_)), request_.mask, spec_, false).loss;
    }

    GeneratorBackend& backend_;
    BackendInfo info_;
    const Image8& x_;
    const HmloOptions& opt_;
    SynthesisRequest request_;
    LossSpec spec_;
};

}  // namespace

HmloResult hmlo_optimize(GeneratorBackend& backend, const Image8& crop, const BitMask& crop_mask,
                         const std::optional<Keypoints>& keypoints, const Eigen::VectorXd& init_latent,
                         const HmloOptions& opt) {
    Objective objective(backend, crop, crop_mask, keypoints, opt);
    HmloResult result;
    result.latent = init_latent;
    auto [loss, y] = objective.hard(init_latent);
    result.crop = std::move(y);
    result.trace.push_back(loss);
    if (loss < opt.loss_threshold) {
        result.converged = true;
        return result;
    }

    try {
        LossGrad current = objective.soft(result.latent);
        double step = opt.initial_step;
        while (result.steps < opt.max_steps && step >= opt.min_step) {
            ++result.steps;
            const Eigen::VectorXd candidate = result.latent - step * current.grad;
            auto [cand_loss, cand_crop] = objective.hard(candidate);
            bool accept = cand_loss < loss;
            LossGrad cand_soft;
            if (cand_loss <= loss) {
                cand_soft = objective.soft(candidate);
                accept = accept || cand_soft.loss < current.loss;
            }
            if (!accept) {
                step /= 2;
                continue;
            }
            result.latent = candidate;
            result.crop = std::move(cand_crop);
            loss = cand_loss;
            result.trace.push_back(loss);
            current = std::move(cand_soft);
            if (loss < opt.loss_threshold) {
                result.converged = true;
                break;
            }
            step *= opt.step_growth;
        }
    } catch (const std::exception& e) {
        result.error = e.what();
    }
    return result;
}

}  // namespace anonypipe
