#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "fruitsplat/colmap.hpp"

namespace fruitsplat {

template <typename Scalar>
Scalar sigmoid(Scalar x)
{
    using std::exp;
    return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-x)) : exp(x) / (Scalar(1) + exp(x));
}

template <typename Scalar>
Scalar logit(Scalar p)
{
    using std::log;
    return log(p / (Scalar(1) - p));
}

/// Rotation matrix of the quaternion (w, x, y, z) after normalization.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_from_wxyz(const Eigen::Matrix<Scalar, 4, 1>& q_raw)
{
    const Eigen::Matrix<Scalar, 4, 1> q = q_raw / q_raw.norm();
    const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix<Scalar, 3, 3> r;
    r << Scalar(1) - Scalar(2) * (y * y + z * z), Scalar(2) * (x * y - w * z), Scalar(2) * (x * z + w * y),
        Scalar(2) * (x * y + w * z), Scalar(1) - Scalar(2) * (x * x + z * z), Scalar(2) * (y * z - w * x),
        Scalar(2) * (x * z - w * y), Scalar(2) * (y * z + w * x), Scalar(1) - Scalar(2) * (x * x + y * y);
    return r;
}

/// Sigma = R diag(exp(log_scale))^2 R^T.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> covariance_3d(const Eigen::Matrix<Scalar, 3, 1>& log_scale, const Eigen::Matrix<Scalar, 4, 1>& q_wxyz)
{
    const Eigen::Matrix<Scalar, 3, 3> m = rotation_from_wxyz(q_wxyz) * log_scale.array().exp().matrix().asDiagonal();
    return m * m.transpose();
}

/// One splat primitive. Rotation is stored as raw (w, x, y, z) and kept unit length.
struct Gaussian {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Constant(std::log(0.01));
    Eigen::Vector4d rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
    double opacity_logit = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double s_logit = 0.0; // strawberry membership
    double b_logit = 0.0; // bruise likelihood

    double opacity() const { return sigmoid(opacity_logit); }
    double strawberry() const { return sigmoid(s_logit); }
    double bruise() const { return sigmoid(b_logit); }
    Eigen::Matrix3d covariance() const { return covariance_3d(log_scale, rotation); }

    bool is_finite() const;
    bool operator==(const Gaussian&) const = default;
};

struct CloudMetadata {
    std::size_t step = 0;
    std::string source;
    bool operator==(const CloudMetadata&) const = default;
};

struct GaussianCloud {
    std::vector<Gaussian> gaussians;
    CloudMetadata metadata;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    /// Throws std::invalid_argument naming the first offending Gaussian.
    void validate() const;
};

struct InitOptions {
    double initial_opacity = 0.1;
    int knn_k = 3;
    double fallback_scale = 0.01; // meters, used when a point has no neighbours
};

/// One isotropic Gaussian per sparse point, scaled by mean distance to its knn_k neighbours.
GaussianCloud init_from_points(const std::vector<SparsePoint>& points, const InitOptions& options = {});

/// Binary little-endian PLY. With activated = true, opacity/strawberry/bruise hold probabilities.
void export_ply(const GaussianCloud& cloud, const std::filesystem::path& path, bool activated = false);

/// Reads a raw-logit PLY written by export_ply.
GaussianCloud import_ply(const std::filesystem::path& path);

} // namespace fruitsplat
