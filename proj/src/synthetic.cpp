#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "fruitsplat/dataset.hpp"

namespace fruitsplat {
namespace {

constexpr double kHighLogit = 8.0;
constexpr double kOpacityLogit = 4.0;
constexpr double kColorNoise = 0.04;
constexpr double kRingInner = 1.35; // in units of the largest horizontal semiaxis
constexpr double kRingOuter = 1.7;
constexpr double kFootprint = 0.55; // Gaussian sigma relative to mean sample spacing

const Eigen::Vector3d kFruitColor(0.78, 0.10, 0.12);
const Eigen::Vector3d kBruiseColor(0.42, 0.22, 0.10);
const Eigen::Vector3d kRingColor(0.85, 0.82, 0.75);

// Knud Thomsen's approximation, within ~1% for any ellipsoid.
double ellipsoid_area(const Eigen::Vector3d& s)
{
    constexpr double p = 1.6075;
    const double ap = std::pow(s.x(), p), bp = std::pow(s.y(), p), cp = std::pow(s.z(), p);
    return 4.0 * std::numbers::pi * std::pow((ap * bp + ap * cp + bp * cp) / 3.0, 1.0 / p);
}

Eigen::Vector3d noisy(const Eigen::Vector3d& base, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-kColorNoise, kColorNoise);
    Eigen::Vector3d c;
    for (int i = 0; i < 3; ++i) c[i] = std::clamp(base[i] + u(rng), 0.0, 1.0);
    return c;
}

/// Area-uniform samples on the ellipsoid via rejection on the sphere parametrization.
/// Consumes `rng` before any other draw so the positions depend on the seed alone.
std::vector<Eigen::Vector3d> sample_fruit_surface(const SyntheticSceneSpec& spec, std::mt19937_64& rng)
{
    const Eigen::Vector3d& axes = spec.fruit_semiaxes;
    const double max_area_element = std::max({axes.y() * axes.z(), axes.x() * axes.z(), axes.x() * axes.y()});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Eigen::Vector3d> points;
    points.reserve(static_cast<std::size_t>(spec.n_gaussians));
    while (static_cast<int>(points.size()) < spec.n_gaussians) {
        const double z = 2.0 * unit(rng) - 1.0;
        const double phi = 2.0 * std::numbers::pi * unit(rng);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const Eigen::Vector3d dir(r * std::cos(phi), r * std::sin(phi), z);
        const double element = Eigen::Vector3d(axes.y() * axes.z() * dir.x(), axes.x() * axes.z() * dir.y(),
                                               axes.x() * axes.y() * dir.z())
                                   .norm();
        if (unit(rng) * max_area_element > element) continue;
        points.push_back(axes.cwiseProduct(dir));
    }
    return points;
}

/// World-to-camera pose looking from `eye` at the origin, z up.
std::pair<Eigen::Quaterniond, Eigen::Vector3d> look_at_origin(const Eigen::Vector3d& eye)
{
    const Eigen::Vector3d forward = -eye.normalized();
    Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
    if (right.norm() < 1e-6) right = forward.cross(Eigen::Vector3d::UnitY());
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return {q, -(q * eye)};
}

} // namespace

void SyntheticSceneSpec::validate() const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid synthetic scene: " + what); };
    if (n_gaussians <= 0) fail("n_gaussians must be > 0");
    if (!(fruit_semiaxes.array() > 0.0).all() || !fruit_semiaxes.allFinite()) fail("semiaxes must be positive");
    if (!(bruise_patch_angle > 0.0 && bruise_patch_angle < std::numbers::pi)) fail("bruise_patch_angle must be in (0, pi)");
    if (!(bruise_patch_center.norm() > 0.0) || !bruise_patch_center.allFinite()) fail("bruise_patch_center must be nonzero");
    if (n_cameras < 2) fail("n_cameras must be >= 2");
    if (image_size <= 0) fail("image_size must be > 0");
    if (n_ring_gaussians < 0) fail("n_ring_gaussians must be >= 0");
    if (!(point_jitter >= 0.0)) fail("point_jitter must be >= 0");
    const double extent = std::max(kRingOuter * fruit_semiaxes.head<2>().maxCoeff(), fruit_semiaxes.maxCoeff());
    if (!(camera_radius > 1.5 * extent)) fail("camera_radius too small for the scene");
}

double calibrate_bruise_angle(const SyntheticSceneSpec& spec, double fraction)
{
    if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("bruise fraction must be in [0, 1)");
    SyntheticSceneSpec probe = spec;
    probe.bruise_patch_angle = 1.0;
    probe.validate();

    std::mt19937_64 rng(spec.seed);
    const Eigen::Vector3d patch = spec.bruise_patch_center.normalized();
    std::vector<double> angles;
    for (const Eigen::Vector3d& p : sample_fruit_surface(spec, rng))
        angles.push_back(std::acos(std::clamp(p.normalized().dot(patch), -1.0, 1.0)));
    std::sort(angles.begin(), angles.end());

    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(angles.size())));
    if (k == 0) return 0.5 * angles.front();
    if (k == angles.size()) return 0.5 * (angles.back() + std::numbers::pi);
    return 0.5 * (angles[k - 1] + angles[k]);
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec, const RenderConfig& render_config)
{
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SyntheticScene scene;
    GaussianCloud& cloud = scene.cloud;
    cloud.metadata.source = "synthetic seed " + std::to_string(spec.seed);

    const Eigen::Vector3d& axes = spec.fruit_semiaxes;
    const Eigen::Vector3d patch = spec.bruise_patch_center.normalized();
    const double cos_patch = std::cos(spec.bruise_patch_angle);
    const double fruit_sigma = kFootprint * std::sqrt(ellipsoid_area(axes) / spec.n_gaussians);

    for (const Eigen::Vector3d& mean : sample_fruit_surface(spec, rng)) {
        Gaussian g;
        g.mean = mean;
        const bool bruised = mean.normalized().dot(patch) >= cos_patch;
        g.log_scale.setConstant(std::log(fruit_sigma));
        g.opacity_logit = kOpacityLogit;
        g.color = noisy(bruised ? kBruiseColor : kFruitColor, rng);
        g.s_logit = kHighLogit;
        g.b_logit = bruised ? kHighLogit : -kHighLogit;
        cloud.gaussians.push_back(g);
        scene.fruit_flags.push_back(true);
        scene.bruise_flags.push_back(bruised);
    }

    const double horizontal = axes.head<2>().maxCoeff();
    const double r_in = kRingInner * horizontal, r_out = kRingOuter * horizontal;
    if (spec.n_ring_gaussians > 0) {
        const double ring_sigma = kFootprint * std::sqrt(std::numbers::pi * (r_out * r_out - r_in * r_in) / spec.n_ring_gaussians);
        for (int i = 0; i < spec.n_ring_gaussians; ++i) {
            const double rad = std::sqrt(r_in * r_in + unit(rng) * (r_out * r_out - r_in * r_in));
            const double phi = 2.0 * std::numbers::pi * unit(rng);
            Gaussian g;
            g.mean = Eigen::Vector3d(rad * std::cos(phi), rad * std::sin(phi), 0.0);
            g.log_scale.setConstant(std::log(ring_sigma));
            g.opacity_logit = kOpacityLogit;
            g.color = noisy(kRingColor, rng);
            g.s_logit = -kHighLogit;
            g.b_logit = -kHighLogit;
            cloud.gaussians.push_back(g);
            scene.fruit_flags.push_back(false);
            scene.bruise_flags.push_back(false);
        }
    }

    auto& gt = scene.ground_truth;
    gt.strawberry_count = static_cast<std::size_t>(std::count(scene.fruit_flags.begin(), scene.fruit_flags.end(), true));
    gt.bruise_count = static_cast<std::size_t>(std::count(scene.bruise_flags.begin(), scene.bruise_flags.end(), true));
    gt.bruise_fraction = static_cast<double>(gt.bruise_count) / static_cast<double>(gt.strawberry_count);

    std::normal_distribution<double> jitter(0.0, 1.0);
    for (const Gaussian& g : cloud.gaussians) {
        SparsePoint p;
        p.position = g.mean;
        for (int k = 0; k < 3; ++k) p.position[k] += spec.point_jitter * jitter(rng);
        for (int k = 0; k < 3; ++k) p.color[k] = quantize_unit(g.color[k]);
        scene.sparse_points.push_back(p);
    }

    const double extent = 1.1 * std::max(r_out, axes.maxCoeff());
    CameraIntrinsics intrinsics;
    intrinsics.model = CameraModel::Pinhole;
    intrinsics.width = intrinsics.height = spec.image_size;
    intrinsics.fx = intrinsics.fy = 0.5 * spec.image_size / std::tan(std::asin(extent / spec.camera_radius));
    intrinsics.cx = intrinsics.cy = 0.5 * spec.image_size;

    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    scene.samples.resize(static_cast<std::size_t>(spec.n_cameras));
    for (int i = 0; i < spec.n_cameras; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / spec.n_cameras;
        const double r = std::sqrt(1.0 - z * z);
        const Eigen::Vector3d eye = spec.camera_radius * Eigen::Vector3d(r * std::cos(golden * i), r * std::sin(golden * i), z);
        CameraFrame frame;
        frame.frame_id = i + 1;
        frame.intrinsics = intrinsics;
        std::tie(frame.rotation, frame.translation) = look_at_origin(eye);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", i + 1);
        frame.image_name = name;
        scene.samples[static_cast<std::size_t>(i)].frame = frame;
    }

    for (auto& sample : scene.samples) {
        const RenderOutput out = render(cloud, sample.frame, render_config);
        sample.image = out.color;
        const Mask strawberry = (out.strawberry >= 0.5).cast<std::uint8_t>();
        sample.strawberry_mask = strawberry;
        sample.bruise_mask = ((out.bruise >= 0.5).cast<std::uint8_t>() * strawberry).eval();
    }
    return scene;
}

} // namespace fruitsplat
