#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fruitsplat/dataset.hpp"
#include "fruitsplat/gaussian.hpp"
#include "fruitsplat/losses.hpp"
#include "fruitsplat/rasterizer.hpp"

namespace fruitsplat {

struct TrainConfig {
    int steps = 15000;
    double lambda_dssim = 0.2;
    double w_strawberry = 1.0;
    double w_bruise = 1.0;

    double lr_mean = 1.6e-4;       // decays exponentially to lr_mean_final over `steps`
    double lr_mean_final = 1.6e-6;
    double lr_scale = 2.5e-3;
    double lr_rotation = 2.5e-3;
    double lr_opacity = 2.5e-3;
    double lr_color = 2.5e-3;
    double lr_semantic = 2.5e-2;

    double prune_opacity_threshold = 0.005;
    int prune_interval = 500;
    std::uint64_t seed = 0;
    SsimOptions ssim;
    RenderConfig render;

    void validate() const;
};

struct LossBreakdown {
    double l1 = 0.0;
    double dssim = 0.0;
    double bce_strawberry = 0.0;
    double bce_bruise = 0.0;
    double total = 0.0;
};

/// Adaptive-moment state, one row per Gaussian.
struct AdamState {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-15;

    ParamMatrix first;
    ParamMatrix second;
    std::size_t step = 0;

    explicit AdamState(std::size_t n = 0);
    std::size_t size() const { return static_cast<std::size_t>(first.rows()); }
};

/// Per-column learning rates at a given step.
Eigen::Matrix<double, 1, ParamLayout::kCount> learning_rates(const TrainConfig& config, std::size_t step);

/// One Adam update of `params` in place. Rotation rows are renormalized afterwards.
void adam_update(ParamMatrix& params, const ParamMatrix& grads, AdamState& state,
                 const Eigen::Matrix<double, 1, ParamLayout::kCount>& lr);

/// Losses of a rendered frame against a sample; fills dLoss/dOutput when `upstream` is given.
LossBreakdown compute_losses(const RenderOutput& rendered, const TrainingSample& sample, const TrainConfig& config,
                             RenderOutput* upstream = nullptr);

/// Render, loss, backward, Adam update.
LossBreakdown train_step(GaussianCloud& cloud, const TrainingSample& sample, const TrainConfig& config, AdamState& state);

/// Removes Gaussians with activated opacity below the threshold, together with their optimizer rows.
std::size_t prune_by_opacity(GaussianCloud& cloud, AdamState& state, double threshold);

struct TrainResult {
    GaussianCloud cloud;
    std::vector<LossBreakdown> losses;
};

using StepCallback = std::function<void(std::size_t step, const LossBreakdown&, const GaussianCloud&)>;

TrainResult train(GaussianCloud cloud, const std::vector<TrainingSample>& samples, const TrainConfig& config,
                  const StepCallback& on_step = {});

} // namespace fruitsplat
