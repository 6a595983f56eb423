#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "fruitsplat/colmap.hpp"
#include "fruitsplat/gaussian.hpp"
#include "fruitsplat/image.hpp"

namespace testing {

using namespace fruitsplat;

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t")
    {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("fruitsplat-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Eigen::Vector4d random_unit_wxyz(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
    return q / q.norm();
}

/// World-to-camera pose looking from `eye` at `target`: x right, y down, z forward.
inline CameraFrame look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, int width, int height, double focal,
                           int frame_id = 1)
{
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up_hint = std::abs(forward.z()) > 0.9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d right = forward.cross(up_hint).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r;
    r.row(0) = right;
    r.row(1) = down;
    r.row(2) = forward;
    CameraFrame f;
    f.frame_id = frame_id;
    f.rotation = Eigen::Quaterniond(r).normalized();
    f.translation = -(r * eye);
    f.intrinsics.model = CameraModel::Pinhole;
    f.intrinsics.width = width;
    f.intrinsics.height = height;
    f.intrinsics.fx = f.intrinsics.fy = focal;
    f.intrinsics.cx = 0.5 * width;
    f.intrinsics.cy = 0.5 * height;
    f.image_name = "frame_" + std::to_string(frame_id) + ".png";
    return f;
}

/// Camera at the origin looking down +z.
inline CameraFrame axis_camera(int width, int height, double focal)
{
    CameraFrame f;
    f.frame_id = 1;
    f.intrinsics.model = CameraModel::Pinhole;
    f.intrinsics.width = width;
    f.intrinsics.height = height;
    f.intrinsics.fx = f.intrinsics.fy = focal;
    f.intrinsics.cx = 0.5 * width;
    f.intrinsics.cy = 0.5 * height;
    f.image_name = "axis.png";
    return f;
}

struct RandomSceneOptions {
    int count = 10;
    double max_opacity = 0.85;
    double extent = 0.6;     // half-width of the cube holding the means
    double depth = 4.0;      // distance of the cube center along +z
    double min_log_scale = -2.3;
    double max_log_scale = -1.2;
};

/// Gaussians in front of axis_camera with well-conditioned footprints.
inline GaussianCloud random_cloud(std::mt19937_64& rng, const RandomSceneOptions& o = {})
{
    GaussianCloud cloud;
    for (int i = 0; i < o.count; ++i) {
        Gaussian g;
        g.mean = Eigen::Vector3d(uniform(rng, -o.extent, o.extent), uniform(rng, -o.extent, o.extent),
                                 o.depth + uniform(rng, -o.extent, o.extent));
        for (int k = 0; k < 3; ++k) g.log_scale[k] = uniform(rng, o.min_log_scale, o.max_log_scale);
        g.rotation = random_unit_wxyz(rng);
        g.opacity_logit = logit(uniform(rng, 0.2, o.max_opacity));
        for (int k = 0; k < 3; ++k) g.color[k] = uniform(rng, 0.0, 1.0);
        g.s_logit = uniform(rng, -3.0, 3.0);
        g.b_logit = uniform(rng, -3.0, 3.0);
        cloud.gaussians.push_back(g);
    }
    return cloud;
}

inline ColorImage random_image(std::mt19937_64& rng, int h, int w)
{
    ColorImage img(h, w);
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < img[c].size(); ++i) img[c](i) = uniform(rng, 0.0, 1.0);
    return img;
}

inline Mask random_mask(std::mt19937_64& rng, int h, int w)
{
    Mask m(h, w);
    std::bernoulli_distribution b(0.5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = b(rng) ? 1 : 0;
    return m;
}

/// Random COLMAP model: shared and distinct intrinsics across all supported models, unique ids.
inline SparseModel random_model(std::mt19937_64& rng, int max_frames = 12, int max_points = 40)
{
    std::uniform_int_distribution<int> frames_n(1, max_frames), points_n(0, max_points), model_pick(0, 2),
        size_pick(16, 4000), color(0, 255);
    std::vector<CameraIntrinsics> pool(static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 3)(rng)));
    for (auto& c : pool) {
        c.model = static_cast<CameraModel>(model_pick(rng));
        c.width = size_pick(rng);
        c.height = size_pick(rng);
        c.fx = uniform(rng, 10.0, 5000.0);
        c.fy = c.model == CameraModel::Pinhole ? uniform(rng, 10.0, 5000.0) : c.fx;
        c.cx = uniform(rng, 0.0, c.width);
        c.cy = uniform(rng, 0.0, c.height);
        c.radial_k = c.model == CameraModel::SimpleRadial ? uniform(rng, -0.2, 0.2) : 0.0;
    }
    SparseModel m;
    const int n = frames_n(rng);
    std::vector<int> ids;
    for (int id = 1; static_cast<int>(ids.size()) < n; id += std::uniform_int_distribution<int>(1, 5)(rng)) ids.push_back(id);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int id : ids) {
        CameraFrame f;
        f.frame_id = id;
        f.intrinsics = pool[pick(rng)];
        const Eigen::Vector4d q = random_unit_wxyz(rng);
        f.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
        f.translation = Eigen::Vector3d(uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, -10, 10));
        f.image_name = "img_" + std::to_string(id) + ".png";
        m.frames.push_back(f);
    }
    const int np = points_n(rng);
    for (int i = 0; i < np; ++i) {
        SparsePoint p;
        p.position = Eigen::Vector3d(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
        p.color = {static_cast<std::uint8_t>(color(rng)), static_cast<std::uint8_t>(color(rng)),
                   static_cast<std::uint8_t>(color(rng))};
        m.points.push_back(p);
    }
    return m;
}

/// Silences std::clog for the lifetime of the guard.
class ClogSilencer {
public:
    ClogSilencer() : saved_(std::clog.rdbuf(nullptr)) {}
    ~ClogSilencer() { std::clog.rdbuf(saved_); }

private:
    std::streambuf* saved_;
};

} // namespace testing
