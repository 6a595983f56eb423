#include "fruitsplat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace fruitsplat {

void TrainConfig::validate() const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid train config: " + what); };
    if (steps <= 0) fail("steps must be > 0");
    if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) fail("lambda_dssim must be in [0, 1]");
    if (!(w_strawberry >= 0.0) || !(w_bruise >= 0.0)) fail("semantic loss weights must be >= 0");
    for (double lr : {lr_mean, lr_mean_final, lr_scale, lr_rotation, lr_opacity, lr_color, lr_semantic})
        if (!(lr > 0.0)) fail("learning rates must be > 0");
    if (!(prune_opacity_threshold >= 0.0 && prune_opacity_threshold < 1.0)) fail("prune threshold must be in [0, 1)");
    if (prune_interval <= 0) fail("prune_interval must be > 0");
    if (ssim.window <= 0 || ssim.window % 2 == 0) fail("ssim window must be odd");
}

AdamState::AdamState(std::size_t n)
    : first(ParamMatrix::Zero(static_cast<Eigen::Index>(n), ParamLayout::kCount)),
      second(ParamMatrix::Zero(static_cast<Eigen::Index>(n), ParamLayout::kCount))
{
}

Eigen::Matrix<double, 1, ParamLayout::kCount> learning_rates(const TrainConfig& config, std::size_t step)
{
    const double progress = std::clamp(static_cast<double>(step) / config.steps, 0.0, 1.0);
    const double lr_mean = std::exp((1.0 - progress) * std::log(config.lr_mean) + progress * std::log(config.lr_mean_final));

    Eigen::Matrix<double, 1, ParamLayout::kCount> lr;
    lr.segment<3>(ParamLayout::kMean).setConstant(lr_mean);
    lr.segment<3>(ParamLayout::kLogScale).setConstant(config.lr_scale);
    lr.segment<4>(ParamLayout::kRotation).setConstant(config.lr_rotation);
    lr(ParamLayout::kOpacity) = config.lr_opacity;
    lr.segment<3>(ParamLayout::kColor).setConstant(config.lr_color);
    lr(ParamLayout::kStrawberry) = config.lr_semantic;
    lr(ParamLayout::kBruise) = config.lr_semantic;
    return lr;
}

void adam_update(ParamMatrix& params, const ParamMatrix& grads, AdamState& state,
                 const Eigen::Matrix<double, 1, ParamLayout::kCount>& lr)
{
    if (params.rows() != grads.rows() || static_cast<std::size_t>(params.rows()) != state.size())
        throw std::invalid_argument("adam_update: optimizer state does not match the cloud");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
    const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);

    state.first = AdamState::kBeta1 * state.first + (1.0 - AdamState::kBeta1) * grads;
    state.second = AdamState::kBeta2 * state.second.array() + (1.0 - AdamState::kBeta2) * grads.array().square();

    const auto m_hat = state.first.array() / c1;
    const auto v_hat = state.second.array() / c2;
    const ParamMatrix step = (m_hat / (v_hat.sqrt() + AdamState::kEpsilon)).matrix();
    params -= (step.array().rowwise() * lr.array()).matrix();

    for (Eigen::Index i = 0; i < params.rows(); ++i) {
        auto q = params.row(i).segment<4>(ParamLayout::kRotation);
        const double n = q.norm();
        if (n > 0.0 && std::abs(n - 1.0) > 1e-12) q /= n;
    }
}

LossBreakdown compute_losses(const RenderOutput& rendered, const TrainingSample& sample, const TrainConfig& config,
                             RenderOutput* upstream)
{
    LossBreakdown loss;
    ColorImage g_l1, g_dssim;
    Plane g_s, g_b;
    const bool want = upstream != nullptr;

    loss.l1 = l1_loss(rendered.color, sample.image, want ? &g_l1 : nullptr);
    loss.dssim = dssim_loss(rendered.color, sample.image, config.ssim, want ? &g_dssim : nullptr);

    const int h = rendered.height(), w = rendered.width();
    static const Mask empty;
    const Mask& s_mask = sample.strawberry_mask ? *sample.strawberry_mask : empty;
    const Mask& b_mask = sample.bruise_mask ? *sample.bruise_mask : empty;
    const Plane no_pred;
    loss.bce_strawberry = bce_loss(sample.strawberry_mask ? rendered.strawberry : no_pred, s_mask,
                                   sample.strawberry_mask.has_value(), want ? &g_s : nullptr);
    loss.bce_bruise = bce_loss(sample.bruise_mask ? rendered.bruise : no_pred, b_mask, sample.bruise_mask.has_value(),
                               want ? &g_b : nullptr);

    const double lambda = config.lambda_dssim;
    loss.total = (1.0 - lambda) * loss.l1 + lambda * loss.dssim + config.w_strawberry * loss.bce_strawberry +
                 config.w_bruise * loss.bce_bruise;

    if (want) {
        *upstream = RenderOutput(h, w);
        for (int c = 0; c < 3; ++c) upstream->color[c] = (1.0 - lambda) * g_l1[c] + lambda * g_dssim[c];
        if (sample.strawberry_mask) upstream->strawberry = config.w_strawberry * g_s;
        if (sample.bruise_mask) upstream->bruise = config.w_bruise * g_b;
    }
    return loss;
}

LossBreakdown train_step(GaussianCloud& cloud, const TrainingSample& sample, const TrainConfig& config, AdamState& state)
{
    if (cloud.empty()) throw std::invalid_argument("train_step: empty cloud");
    if (state.size() != cloud.size()) throw std::invalid_argument("train_step: optimizer state not sized to the cloud");

    const FrameRasterizer raster(cloud, sample.frame, config.render);
    RenderOutput upstream;
    const LossBreakdown loss = compute_losses(raster.output(), sample, config, &upstream);
    if (!std::isfinite(loss.total))
        throw std::runtime_error("non-finite loss at step " + std::to_string(state.step));

    const CloudGradients grads = raster.backward(upstream);
    ParamMatrix params = pack_parameters(cloud);
    adam_update(params, grads.values, state, learning_rates(config, state.step));
    unpack_parameters(params, cloud);
    return loss;
}

std::size_t prune_by_opacity(GaussianCloud& cloud, AdamState& state, double threshold)
{
    std::vector<Eigen::Index> keep;
    keep.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (cloud.gaussians[i].opacity() >= threshold) keep.push_back(static_cast<Eigen::Index>(i));
    const std::size_t removed = cloud.size() - keep.size();
    if (removed == 0) return 0;

    std::vector<Gaussian> kept;
    kept.reserve(keep.size());
    for (const auto i : keep) kept.push_back(cloud.gaussians[static_cast<std::size_t>(i)]);
    cloud.gaussians = std::move(kept);
    state.first = state.first(keep, Eigen::all).eval();
    state.second = state.second(keep, Eigen::all).eval();
    return removed;
}

TrainResult train(GaussianCloud cloud, const std::vector<TrainingSample>& samples, const TrainConfig& config,
                  const StepCallback& on_step)
{
    config.validate();
    if (samples.empty()) throw std::invalid_argument("train: no training samples");
    cloud.validate();

    TrainResult result;
    result.losses.reserve(static_cast<std::size_t>(config.steps));
    AdamState state(cloud.size());
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(samples.size());
    std::size_t cursor = order.size();

    for (int step = 0; step < config.steps; ++step) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const LossBreakdown loss = train_step(cloud, samples[order[cursor++]], config, state);
        result.losses.push_back(loss);
        cloud.metadata.step = static_cast<std::size_t>(step) + 1;

        if ((step + 1) % config.prune_interval == 0) {
            prune_by_opacity(cloud, state, config.prune_opacity_threshold);
            if (cloud.empty()) throw std::runtime_error("pruning removed every Gaussian at step " + std::to_string(step + 1));
        }
        if (on_step) on_step(static_cast<std::size_t>(step), loss, cloud);
    }
    result.cloud = std::move(cloud);
    return result;
}

} // namespace fruitsplat
