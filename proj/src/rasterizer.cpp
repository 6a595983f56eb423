#include "fruitsplat/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "fruitsplat/parallel.hpp"

namespace fruitsplat {
namespace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

struct Camera {
    Mat3 rotation;
    Vec3 translation;
    double fx, fy, cx, cy;
    int width, height;

    explicit Camera(const CameraFrame& f)
        : rotation(f.world_to_camera_rotation()), translation(f.translation), fx(f.intrinsics.fx), fy(f.intrinsics.fy),
          cx(f.intrinsics.cx), cy(f.intrinsics.cy), width(f.intrinsics.width), height(f.intrinsics.height)
    {
    }
};

/// Everything between a Gaussian's parameters and its screen-space footprint.
struct Geometry {
    Vec3 t;        // camera-space mean
    Mat23 jacobian;
    Mat3 rotation; // of the Gaussian
    Vec3 scale;
    Mat3 cov_camera;
    Mat2 cov2d;
    Vec2 mean2d;
};

Geometry compute_geometry(const Gaussian& g, const Camera& cam, double blur)
{
    Geometry geo;
    geo.t = cam.rotation * g.mean + cam.translation;
    const double x = geo.t.x(), y = geo.t.y(), z = geo.t.z();
    geo.jacobian << cam.fx / z, 0.0, -cam.fx * x / (z * z), 0.0, cam.fy / z, -cam.fy * y / (z * z);
    geo.rotation = rotation_from_wxyz<double>(g.rotation);
    geo.scale = g.log_scale.array().exp();
    const Mat3 m = geo.rotation * geo.scale.asDiagonal();
    geo.cov_camera = cam.rotation * (m * m.transpose()) * cam.rotation.transpose();
    geo.cov2d = geo.jacobian * geo.cov_camera * geo.jacobian.transpose();
    geo.cov2d.diagonal().array() += blur;
    geo.mean2d = Vec2(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
    return geo;
}

struct Splat {
    std::size_t parent;
    Vec2 mean2d;
    double conic_xx, conic_xy, conic_yy;
    double opacity;
    Vec3 color;
    double strawberry, bruise;
    double depth;
    int tile_x0, tile_x1, tile_y0, tile_y1; // inclusive
};

/// Half-power 0.5 d^T Q d for the pixel centre (px + 0.5, py + 0.5).
inline double half_power(const Splat& s, double dx, double dy)
{
    return 0.5 * (s.conic_xx * dx * dx + s.conic_yy * dy * dy) + s.conic_xy * dx * dy;
}

// Per-splat screen-space gradient accumulator.
struct ScreenGrad {
    double mean2d[2];
    double conic[3]; // d/dQ_xx, d/dQ_xy (each off-diagonal entry), d/dQ_yy
    double opacity;
    double color[3];
    double strawberry, bruise;
};

void add_into(ScreenGrad& into, const ScreenGrad& g)
{
    for (int i = 0; i < 2; ++i) into.mean2d[i] += g.mean2d[i];
    for (int i = 0; i < 3; ++i) into.conic[i] += g.conic[i];
    into.opacity += g.opacity;
    for (int i = 0; i < 3; ++i) into.color[i] += g.color[i];
    into.strawberry += g.strawberry;
    into.bruise += g.bruise;
}

/// d L / d q_raw for R = rotation_from_wxyz(q_raw), given d L / d R.
Eigen::Vector4d rotation_gradient(const Eigen::Vector4d& q_raw, const Mat3& g)
{
    const double norm = q_raw.norm();
    const Eigen::Vector4d q = q_raw / norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Vector4d d;
    d[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1) -
                  2.0 * x * g(2, 2));
    d[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1) -
                  2.0 * y * g(2, 2));
    d[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2) +
                  x * g(2, 0) + y * g(2, 1));
    // Through the normalization q = q_raw / |q_raw|.
    return (d - q * q.dot(d)) / norm;
}

} // namespace

std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const CameraFrame& frame, double near_clip,
                                       double blur_regularizer)
{
    const Camera cam(frame);
    std::vector<ProjectedGaussian> out;
    out.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 t = cam.rotation * cloud.gaussians[i].mean + cam.translation;
        if (!(t.z() > near_clip)) continue;
        const Geometry geo = compute_geometry(cloud.gaussians[i], cam, blur_regularizer);
        out.push_back({geo.mean2d, geo.cov2d, geo.t.z(), i});
    }
    return out;
}

ParamMatrix pack_parameters(const GaussianCloud& cloud)
{
    ParamMatrix p(static_cast<Eigen::Index>(cloud.size()), ParamLayout::kCount);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        auto row = p.row(static_cast<Eigen::Index>(i));
        row.segment<3>(ParamLayout::kMean) = g.mean.transpose();
        row.segment<3>(ParamLayout::kLogScale) = g.log_scale.transpose();
        row.segment<4>(ParamLayout::kRotation) = g.rotation.transpose();
        row(ParamLayout::kOpacity) = g.opacity_logit;
        row.segment<3>(ParamLayout::kColor) = g.color.transpose();
        row(ParamLayout::kStrawberry) = g.s_logit;
        row(ParamLayout::kBruise) = g.b_logit;
    }
    return p;
}

void unpack_parameters(const ParamMatrix& p, GaussianCloud& cloud)
{
    cloud.gaussians.resize(static_cast<std::size_t>(p.rows()));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Gaussian& g = cloud.gaussians[i];
        const auto row = p.row(static_cast<Eigen::Index>(i));
        g.mean = row.segment<3>(ParamLayout::kMean).transpose();
        g.log_scale = row.segment<3>(ParamLayout::kLogScale).transpose();
        g.rotation = row.segment<4>(ParamLayout::kRotation).transpose();
        g.opacity_logit = row(ParamLayout::kOpacity);
        g.color = row.segment<3>(ParamLayout::kColor).transpose();
        g.s_logit = row(ParamLayout::kStrawberry);
        g.b_logit = row(ParamLayout::kBruise);
    }
}

struct FrameRasterizer::State {
    const GaussianCloud* cloud;
    Camera camera;
    RenderConfig config;
    std::vector<Splat> splats; // depth order
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> tile_lists;
    RenderOutput output;
    Plane final_transmittance;
    Eigen::ArrayXXi contributor_end; // per pixel, one past the last composited list position

    State(const GaussianCloud& c, const CameraFrame& f, const RenderConfig& cfg) : cloud(&c), camera(f), config(cfg) {}

    void prepare();
    void forward();
    template <typename Fn>
    void for_each_tile(Fn&& fn) const
    {
        parallel_for(tile_lists.size(), resolve_thread_count(config.threads), fn);
    }
};

void FrameRasterizer::State::prepare()
{
    const int ts = config.tile_size;
    tiles_x = (camera.width + ts - 1) / ts;
    tiles_y = (camera.height + ts - 1) / ts;
    const double radius_factor = std::sqrt(2.0 * kCutoffPower);

    splats.clear();
    for (std::size_t i = 0; i < cloud->size(); ++i) {
        const Gaussian& g = cloud->gaussians[i];
        const Vec3 t = camera.rotation * g.mean + camera.translation;
        if (!(t.z() > config.near_clip)) continue;
        const Geometry geo = compute_geometry(g, camera, config.blur_regularizer);
        if (!geo.mean2d.allFinite() || !geo.cov2d.allFinite()) continue;

        const double a = geo.cov2d(0, 0), b = geo.cov2d(0, 1), c = geo.cov2d(1, 1);
        const double det = a * c - b * b;
        if (!(det > 0.0)) continue;
        const double mid = 0.5 * (a + c);
        const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
        const double radius = radius_factor * std::sqrt(lambda_max);

        const double x0 = std::floor(geo.mean2d.x() - radius), x1 = std::ceil(geo.mean2d.x() + radius);
        const double y0 = std::floor(geo.mean2d.y() - radius), y1 = std::ceil(geo.mean2d.y() + radius);
        if (x1 < 0.0 || y1 < 0.0 || x0 > camera.width - 1 || y0 > camera.height - 1) continue;

        Splat s;
        s.parent = i;
        s.mean2d = geo.mean2d;
        s.conic_xx = c / det;
        s.conic_xy = -b / det;
        s.conic_yy = a / det;
        s.opacity = g.opacity();
        s.color = g.color;
        s.strawberry = g.strawberry();
        s.bruise = g.bruise();
        s.depth = t.z();
        s.tile_x0 = static_cast<int>(std::max(0.0, x0)) / ts;
        s.tile_x1 = static_cast<int>(std::min<double>(camera.width - 1, x1)) / ts;
        s.tile_y0 = static_cast<int>(std::max(0.0, y0)) / ts;
        s.tile_y1 = static_cast<int>(std::min<double>(camera.height - 1, y1)) / ts;
        splats.push_back(s);
    }
    std::stable_sort(splats.begin(), splats.end(), [](const Splat& l, const Splat& r) { return l.depth < r.depth; });

    tile_lists.assign(static_cast<std::size_t>(tiles_x) * tiles_y, {});
    for (std::size_t k = 0; k < splats.size(); ++k) {
        const Splat& s = splats[k];
        for (int ty = s.tile_y0; ty <= s.tile_y1; ++ty)
            for (int tx = s.tile_x0; tx <= s.tile_x1; ++tx)
                tile_lists[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
    }
}

void FrameRasterizer::State::forward()
{
    const int w = camera.width, h = camera.height, ts = config.tile_size;
    output = RenderOutput(h, w);
    final_transmittance = Plane::Ones(h, w);
    contributor_end = Eigen::ArrayXXi::Zero(h, w);
    const Vec3 background = config.background;

    for_each_tile([&](std::size_t tile) {
        const auto& list = tile_lists[tile];
        const int tx = static_cast<int>(tile) % tiles_x, ty = static_cast<int>(tile) / tiles_x;
        for (int py = ty * ts; py < std::min(h, (ty + 1) * ts); ++py) {
            for (int px = tx * ts; px < std::min(w, (tx + 1) * ts); ++px) {
                Accumulator<double> acc;
                int end = 0;
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const Splat& s = splats[list[k]];
                    const double dx = px + 0.5 - s.mean2d.x(), dy = py + 0.5 - s.mean2d.y();
                    const double power = half_power(s, dx, dy);
                    if (power > kCutoffPower) continue;
                    const double alpha = std::min(kMaxAlpha, s.opacity * splat_kernel(power));
                    end = static_cast<int>(k) + 1;
                    if (!acc.add(alpha, s.color, s.strawberry, s.bruise)) break;
                }
                const Composite out = acc.finish(background);
                for (int c = 0; c < 3; ++c) output.color[c](py, px) = out.color[c];
                output.strawberry(py, px) = out.strawberry;
                output.bruise(py, px) = out.bruise;
                output.alpha(py, px) = out.alpha;
                final_transmittance(py, px) = acc.transmittance;
                contributor_end(py, px) = end;
            }
        }
    });
}

FrameRasterizer::FrameRasterizer(const GaussianCloud& cloud, const CameraFrame& frame, const RenderConfig& config)
    : state_(std::make_unique<State>(cloud, frame, config))
{
    if (config.tile_size <= 0) throw std::invalid_argument("tile_size must be positive");
    state_->prepare();
    state_->forward();
}

FrameRasterizer::~FrameRasterizer() = default;
FrameRasterizer::FrameRasterizer(FrameRasterizer&&) noexcept = default;
FrameRasterizer& FrameRasterizer::operator=(FrameRasterizer&&) noexcept = default;

const RenderOutput& FrameRasterizer::output() const { return state_->output; }

CloudGradients FrameRasterizer::backward(const RenderOutput& upstream) const
{
    const State& st = *state_;
    const int w = st.camera.width, h = st.camera.height, ts = st.config.tile_size;
    if (upstream.width() != w || upstream.height() != h || upstream.strawberry.rows() != h ||
        upstream.strawberry.cols() != w || upstream.bruise.rows() != h || upstream.bruise.cols() != w ||
        upstream.alpha.rows() != h || upstream.alpha.cols() != w)
        throw std::invalid_argument("render_backward: upstream gradient shape mismatch");
    for (int c = 0; c < 3; ++c)
        if (!upstream.color[c].allFinite()) throw std::invalid_argument("render_backward: non-finite upstream gradient");
    if (!upstream.strawberry.allFinite() || !upstream.bruise.allFinite() || !upstream.alpha.allFinite())
        throw std::invalid_argument("render_backward: non-finite upstream gradient");

    const Vec3 background = st.config.background;
    std::vector<std::vector<ScreenGrad>> tile_grads(st.tile_lists.size());

    st.for_each_tile([&](std::size_t tile) {
        const auto& list = st.tile_lists[tile];
        auto& grads = tile_grads[tile];
        grads.assign(list.size(), ScreenGrad{});
        const int tx = static_cast<int>(tile) % st.tiles_x, ty = static_cast<int>(tile) / st.tiles_x;
        for (int py = ty * ts; py < std::min(h, (ty + 1) * ts); ++py) {
            for (int px = tx * ts; px < std::min(w, (tx + 1) * ts); ++px) {
                const Vec3 g_color(upstream.color[0](py, px), upstream.color[1](py, px), upstream.color[2](py, px));
                const double g_s = upstream.strawberry(py, px);
                const double g_b = upstream.bruise(py, px);
                const double g_a = upstream.alpha(py, px);

                double transmittance = st.final_transmittance(py, px);
                Vec3 rest_color = background; // what lies behind the current contribution
                double rest_alpha = 0.0;
                for (int k = st.contributor_end(py, px) - 1; k >= 0; --k) {
                    const Splat& s = st.splats[list[static_cast<std::size_t>(k)]];
                    const double dx = px + 0.5 - s.mean2d.x(), dy = py + 0.5 - s.mean2d.y();
                    const double power = half_power(s, dx, dy);
                    if (power > kCutoffPower) continue;
                    const double kernel = splat_kernel(power);
                    const double raw_alpha = s.opacity * kernel;
                    const double alpha = std::min(kMaxAlpha, raw_alpha);
                    const double t_before = transmittance / (1.0 - alpha);
                    const double weight = alpha * t_before;

                    ScreenGrad& g = grads[static_cast<std::size_t>(k)];
                    for (int c = 0; c < 3; ++c) g.color[c] += g_color[c] * weight;
                    g.strawberry += g_s * weight;
                    g.bruise += g_b * weight;

                    // Only color and alpha reach alpha; the semantic channels are stop-gradded here.
                    const double d_alpha = t_before * (g_color.dot(s.color - rest_color) + g_a * (1.0 - rest_alpha));
                    rest_color = alpha * s.color + (1.0 - alpha) * rest_color;
                    rest_alpha = alpha + (1.0 - alpha) * rest_alpha;
                    transmittance = t_before;

                    if (raw_alpha >= kMaxAlpha) continue;
                    g.opacity += d_alpha * kernel;
                    const double d_power = d_alpha * s.opacity * splat_kernel_slope(power);
                    g.mean2d[0] -= d_power * (s.conic_xx * dx + s.conic_xy * dy);
                    g.mean2d[1] -= d_power * (s.conic_xy * dx + s.conic_yy * dy);
                    g.conic[0] += d_power * 0.5 * dx * dx;
                    g.conic[1] += d_power * 0.5 * dx * dy;
                    g.conic[2] += d_power * 0.5 * dy * dy;
                }
            }
        }
    });

    // Fixed-order reduction keeps results independent of scheduling.
    std::vector<ScreenGrad> screen(st.splats.size(), ScreenGrad{});
    for (std::size_t tile = 0; tile < st.tile_lists.size(); ++tile) {
        const auto& list = st.tile_lists[tile];
        for (std::size_t k = 0; k < list.size(); ++k) add_into(screen[list[k]], tile_grads[tile][k]);
    }

    CloudGradients out(st.cloud->size());
    const Camera& cam = st.camera;
    parallel_for(st.splats.size(), resolve_thread_count(st.config.threads), [&](std::size_t k) {
        const Splat& s = st.splats[k];
        const ScreenGrad& sg = screen[k];
        const Gaussian& gaussian = st.cloud->gaussians[s.parent];
        auto row = out.values.row(static_cast<Eigen::Index>(s.parent));

        for (int c = 0; c < 3; ++c) row(ParamLayout::kColor + c) = sg.color[c];
        row(ParamLayout::kStrawberry) = sg.strawberry * s.strawberry * (1.0 - s.strawberry);
        row(ParamLayout::kBruise) = sg.bruise * s.bruise * (1.0 - s.bruise);
        row(ParamLayout::kOpacity) = sg.opacity * s.opacity * (1.0 - s.opacity);

        const Geometry geo = compute_geometry(gaussian, cam, st.config.blur_regularizer);
        const double x = geo.t.x(), y = geo.t.y(), z = geo.t.z();

        // Conic Q = cov2d^-1, so dL/dcov2d = -Q G_Q Q.
        Mat2 conic;
        conic << s.conic_xx, s.conic_xy, s.conic_xy, s.conic_yy;
        Mat2 g_conic;
        g_conic << sg.conic[0], sg.conic[1], sg.conic[1], sg.conic[2];
        const Mat2 g_cov2d = -conic * g_conic * conic;

        const Mat3 g_cov_camera = geo.jacobian.transpose() * g_cov2d * geo.jacobian;
        const Mat23 g_jacobian = 2.0 * g_cov2d * geo.jacobian * geo.cov_camera;

        Vec3 g_t;
        g_t.x() = sg.mean2d[0] * cam.fx / z - g_jacobian(0, 2) * cam.fx / (z * z);
        g_t.y() = sg.mean2d[1] * cam.fy / z - g_jacobian(1, 2) * cam.fy / (z * z);
        g_t.z() = -sg.mean2d[0] * cam.fx * x / (z * z) - sg.mean2d[1] * cam.fy * y / (z * z) -
                  g_jacobian(0, 0) * cam.fx / (z * z) + g_jacobian(0, 2) * 2.0 * cam.fx * x / (z * z * z) -
                  g_jacobian(1, 1) * cam.fy / (z * z) + g_jacobian(1, 2) * 2.0 * cam.fy * y / (z * z * z);
        row.segment<3>(ParamLayout::kMean) = (cam.rotation.transpose() * g_t).transpose();

        // Sigma = M M^T with M = R S.
        const Mat3 g_sigma = cam.rotation.transpose() * g_cov_camera * cam.rotation;
        const Mat3 m = geo.rotation * geo.scale.asDiagonal();
        const Mat3 g_m = 2.0 * g_sigma * m;
        for (int j = 0; j < 3; ++j)
            row(ParamLayout::kLogScale + j) = geo.rotation.col(j).dot(g_m.col(j)) * geo.scale[j];
        const Mat3 g_rotation = g_m * geo.scale.asDiagonal();
        row.segment<4>(ParamLayout::kRotation) = rotation_gradient(gaussian.rotation, g_rotation).transpose();
    });
    return out;
}

RenderOutput render(const GaussianCloud& cloud, const CameraFrame& frame, const RenderConfig& config)
{
    return FrameRasterizer(cloud, frame, config).output();
}

CloudGradients render_backward(const GaussianCloud& cloud, const CameraFrame& frame, const RenderConfig& config,
                               const RenderOutput& upstream)
{
    return FrameRasterizer(cloud, frame, config).backward(upstream);
}

} // namespace fruitsplat
