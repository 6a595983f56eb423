#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fruitsplat/colmap.hpp"
#include "fruitsplat/gaussian.hpp"
#include "fruitsplat/image.hpp"
#include "fruitsplat/rasterizer.hpp"

namespace fruitsplat {

struct TrainingSample {
    CameraFrame frame;
    ColorImage image;
    std::optional<Mask> strawberry_mask;
    std::optional<Mask> bruise_mask;

    void validate() const;
};

/// Joins a COLMAP model with its images and optional pseudo-ground-truth masks.
/// Masks share the image's file stem and are binarized at > 127.
std::vector<TrainingSample> load_dataset(const std::filesystem::path& model_dir, const std::filesystem::path& image_dir,
                                         const std::optional<std::filesystem::path>& strawberry_mask_dir = std::nullopt,
                                         const std::optional<std::filesystem::path>& bruise_mask_dir = std::nullopt);

/// Mask file path for an image name: <dir>/<stem>.png.
std::filesystem::path mask_path_for(const std::filesystem::path& dir, const std::string& image_name);

/// Desk-scale closed-loop scene: an ellipsoidal fruit with a bruise cap and a background ring.
struct SyntheticSceneSpec {
    int n_gaussians = 1200;                     // fruit surface Gaussians
    Eigen::Vector3d fruit_semiaxes{0.030, 0.030, 0.034};
    Eigen::Vector3d bruise_patch_center{0.6, 0.0, 0.8};
    double bruise_patch_angle = 1.0471975511965976; // pi/3: a quarter of a sphere's area
    int n_cameras = 24;
    double camera_radius = 0.22;
    std::uint64_t seed = 7;

    int image_size = 96;            // square images
    int n_ring_gaussians = 300;     // background ring, not fruit
    double point_jitter = 0.0005;   // meters, noise on the exported sparse points

    void validate() const;
};

struct SyntheticGroundTruth {
    double bruise_fraction = 0.0;
    std::size_t strawberry_count = 0;
    std::size_t bruise_count = 0;
};

struct SyntheticScene {
    GaussianCloud cloud;                 // ground truth; fruit first, then ring
    std::vector<bool> fruit_flags;       // per Gaussian in `cloud`
    std::vector<bool> bruise_flags;
    std::vector<TrainingSample> samples; // one per camera, masks always present
    std::vector<SparsePoint> sparse_points;
    SyntheticGroundTruth ground_truth;
};

/// Patch half-angle for which round(fraction * n_gaussians) of the scene's fruit samples are bruised.
/// The result lies midway between neighbouring sample angles, so it is stable under rounding.
double calibrate_bruise_angle(const SyntheticSceneSpec& spec, double fraction);

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec, const RenderConfig& render_config = {});

} // namespace fruitsplat
