#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "fruitsplat/colmap.hpp"
#include "fruitsplat/gaussian.hpp"
#include "fruitsplat/image.hpp"

namespace fruitsplat {

struct RenderConfig {
    double near_clip = 0.01;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    int tile_size = 16;
    double blur_regularizer = 0.3; // px^2 added to the projected covariance diagonal
    int threads = 0;               // 0: hardware concurrency; FRUITSPLAT_THREADS caps either
};

/// Transmittance below which compositing stops.
inline constexpr double kTransmittanceFloor = 1e-4;
/// Upper bound on a single contribution's alpha.
inline constexpr double kMaxAlpha = 0.999;
/// Mahalanobis half-power beyond which a splat has no footprint (5 sigma).
inline constexpr double kCutoffPower = 12.5;

/// Splat kernel exp(-p), shifted and tilted so that value and slope vanish at kCutoffPower.
/// The deviation from exp(-p) is below 5.1e-5 everywhere.
template <typename Scalar>
Scalar splat_kernel(Scalar power)
{
    using std::exp;
    const Scalar tail = exp(Scalar(-kCutoffPower));
    return exp(-power) - tail * (Scalar(1) + Scalar(kCutoffPower) - power);
}

/// d splat_kernel / d power.
template <typename Scalar>
Scalar splat_kernel_slope(Scalar power)
{
    using std::exp;
    return exp(Scalar(-kCutoffPower)) - exp(-power);
}

template <typename Scalar>
struct ContributionT {
    Scalar alpha;
    Eigen::Matrix<Scalar, 3, 1> color;
    Scalar strawberry;
    Scalar bruise;
};
using Contribution = ContributionT<double>;

template <typename Scalar>
struct CompositeT {
    Eigen::Matrix<Scalar, 3, 1> color;
    Scalar strawberry;
    Scalar bruise;
    Scalar alpha;
};
using Composite = CompositeT<double>;

/// Front-to-back accumulator shared by composite_pixel and the tile renderer.
template <typename Scalar>
struct Accumulator {
    Eigen::Matrix<Scalar, 3, 1> color = Eigen::Matrix<Scalar, 3, 1>::Zero();
    Scalar strawberry = Scalar(0);
    Scalar bruise = Scalar(0);
    Scalar transmittance = Scalar(1);

    /// Adds one contribution; returns false once transmittance fell below the floor.
    bool add(Scalar alpha, const Eigen::Matrix<Scalar, 3, 1>& c, Scalar s, Scalar b)
    {
        const Scalar w = alpha * transmittance;
        color += w * c;
        strawberry += w * s;
        bruise += w * b;
        transmittance *= Scalar(1) - alpha;
        return transmittance >= Scalar(kTransmittanceFloor);
    }

    CompositeT<Scalar> finish(const Eigen::Matrix<Scalar, 3, 1>& background) const
    {
        return {color + transmittance * background, strawberry, bruise, Scalar(1) - transmittance};
    }
};

/// Composites depth-ordered contributions. Masks composite over zero, color over `background`.
template <typename Scalar>
CompositeT<Scalar> composite_pixel(std::span<const ContributionT<Scalar>> contributions,
                                   const Eigen::Matrix<Scalar, 3, 1>& background = Eigen::Matrix<Scalar, 3, 1>::Zero())
{
    for (const auto& c : contributions)
        if (!(c.alpha >= Scalar(0) && c.alpha < Scalar(1)))
            throw std::invalid_argument("composite_pixel: alpha outside [0, 1)");
    Accumulator<Scalar> acc;
    for (const auto& c : contributions)
        if (!acc.add(c.alpha, c.color, c.strawberry, c.bruise)) break;
    return acc.finish(background);
}

struct ProjectedGaussian {
    Eigen::Vector2d pixel_mean;
    Eigen::Matrix2d cov2d;
    double depth;
    std::size_t parent_index;
};

/// Perspective projection of every Gaussian in front of near_clip, in input order.
std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const CameraFrame& frame, double near_clip,
                                       double blur_regularizer = 0.3);

struct RenderOutput {
    ColorImage color;
    Plane strawberry;
    Plane bruise;
    Plane alpha;

    RenderOutput() = default;
    RenderOutput(int height, int width)
        : color(height, width), strawberry(Plane::Zero(height, width)), bruise(Plane::Zero(height, width)),
          alpha(Plane::Zero(height, width))
    {
    }
    int height() const { return color.height(); }
    int width() const { return color.width(); }
};

/// Per-Gaussian parameter layout shared by gradients and the optimizer.
struct ParamLayout {
    static constexpr int kMean = 0;
    static constexpr int kLogScale = 3;
    static constexpr int kRotation = 6;
    static constexpr int kOpacity = 10;
    static constexpr int kColor = 11;
    static constexpr int kStrawberry = 14;
    static constexpr int kBruise = 15;
    static constexpr int kCount = 16;
};

using ParamMatrix = Eigen::Matrix<double, Eigen::Dynamic, ParamLayout::kCount, Eigen::RowMajor>;

/// Gradients w.r.t. raw parameters, one row per Gaussian in cloud order.
struct CloudGradients {
    ParamMatrix values;

    explicit CloudGradients(std::size_t n = 0) : values(ParamMatrix::Zero(static_cast<Eigen::Index>(n), ParamLayout::kCount)) {}
    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
};

ParamMatrix pack_parameters(const GaussianCloud& cloud);
void unpack_parameters(const ParamMatrix& params, GaussianCloud& cloud);

/// Forward pass for one frame; keeps what the backward pass needs.
class FrameRasterizer {
public:
    FrameRasterizer(const GaussianCloud& cloud, const CameraFrame& frame, const RenderConfig& config);
    ~FrameRasterizer();
    FrameRasterizer(FrameRasterizer&&) noexcept;
    FrameRasterizer& operator=(FrameRasterizer&&) noexcept;

    const RenderOutput& output() const;

    /// Color and alpha upstream grads reach every parameter; strawberry and bruise upstream grads
    /// reach only s_logit and b_logit.
    CloudGradients backward(const RenderOutput& upstream) const;

private:
    struct State;
    std::unique_ptr<State> state_;
};

RenderOutput render(const GaussianCloud& cloud, const CameraFrame& frame, const RenderConfig& config = {});

CloudGradients render_backward(const GaussianCloud& cloud, const CameraFrame& frame, const RenderConfig& config,
                               const RenderOutput& upstream);

} // namespace fruitsplat
