#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace fruitsplat {

/// Subset of COLMAP camera models. Numeric values are the COLMAP model ids.
enum class CameraModel : int {
    SimplePinhole = 0,
    Pinhole = 1,
    SimpleRadial = 2,
};

const char* camera_model_name(CameraModel model);

struct CameraIntrinsics {
    CameraModel model = CameraModel::Pinhole;
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double radial_k = 0.0; // only SIMPLE_RADIAL; ignored when rendering

    void validate() const;
    bool operator==(const CameraIntrinsics&) const = default;
};

/// One registered image. rotation/translation map world points into the camera frame
/// (x right, y down, z forward).
struct CameraFrame {
    int frame_id = 0;
    CameraIntrinsics intrinsics;
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    std::string image_name;

    Eigen::Matrix3d world_to_camera_rotation() const { return rotation.toRotationMatrix(); }
    Eigen::Vector3d camera_center() const { return -(rotation.conjugate() * translation); }

    void validate() const;
    bool operator==(const CameraFrame& o) const;
};

struct SparsePoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    std::array<std::uint8_t, 3> color{0, 0, 0};

    bool operator==(const SparsePoint& o) const { return position == o.position && color == o.color; }
};

struct SparseModel {
    std::vector<CameraFrame> frames;
    std::vector<SparsePoint> points;
};

enum class ModelFormat { Binary, Text, Auto };

/// Parses cameras/images/points3D from `dir`. Frames are returned sorted by frame_id and
/// quaternions normalized. Auto picks binary when cameras.bin exists.
SparseModel parse_colmap_model(const std::filesystem::path& dir, ModelFormat format = ModelFormat::Auto);

/// Writes a COLMAP sparse model. Frames sharing identical intrinsics share one camera id.
/// Auto writes binary.
void write_colmap_model(const std::vector<CameraFrame>& frames, const std::vector<SparsePoint>& points,
                        const std::filesystem::path& dir, ModelFormat format = ModelFormat::Binary);

} // namespace fruitsplat
