#include <doctest.h>

#include <Eigen/LU>

#include "composite_oracle.hpp"
#include "gradcheck.hpp"

using namespace fruitsplat;
using testing::direct_sum;
using testing::random_list;
using testing::DirectComposite;

namespace {

/// Pixel-by-pixel renderer built from project(): no tiles, no culling radius.
RenderOutput brute_force_render(const GaussianCloud& cloud, const CameraFrame& frame, const RenderConfig& config)
{
    const int h = frame.intrinsics.height, w = frame.intrinsics.width;
    auto projected = project(cloud, frame, config.near_clip, config.blur_regularizer);
    std::stable_sort(projected.begin(), projected.end(), [](const auto& a, const auto& b) { return a.depth < b.depth; });
    RenderOutput out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::vector<Contribution> list;
            for (const auto& p : projected) {
                const Eigen::Vector2d d = Eigen::Vector2d(x + 0.5, y + 0.5) - p.pixel_mean;
                const double power = 0.5 * d.dot(p.cov2d.inverse() * d);
                if (power > kCutoffPower) continue;
                const Gaussian& g = cloud.gaussians[p.parent_index];
                list.push_back({std::min(kMaxAlpha, g.opacity() * splat_kernel(power)), g.color, g.strawberry(), g.bruise()});
            }
            const Composite c = composite_pixel<double>(list, config.background);
            for (int k = 0; k < 3; ++k) out.color[k](y, x) = c.color[k];
            out.strawberry(y, x) = c.strawberry;
            out.bruise(y, x) = c.bruise;
            out.alpha(y, x) = c.alpha;
        }
    }
    return out;
}

double max_abs_diff(const RenderOutput& a, const RenderOutput& b)
{
    double m = 0.0;
    for (int c = 0; c < 3; ++c) m = std::max(m, (a.color[c] - b.color[c]).abs().maxCoeff());
    m = std::max(m, (a.strawberry - b.strawberry).abs().maxCoeff());
    m = std::max(m, (a.bruise - b.bruise).abs().maxCoeff());
    return std::max(m, (a.alpha - b.alpha).abs().maxCoeff());
}

bool identical(const RenderOutput& a, const RenderOutput& b)
{
    return a.color == b.color && (a.strawberry == b.strawberry).all() && (a.bruise == b.bruise).all() &&
           (a.alpha == b.alpha).all();
}

} // namespace

TEST_CASE("splat kernel tapers to zero value and slope at the cutoff")
{
    CHECK(splat_kernel(kCutoffPower) == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(std::abs(splat_kernel_slope(kCutoffPower)) < 1e-18);
    double worst = 0.0;
    for (double p = 0.0; p <= kCutoffPower; p += 0.01) {
        worst = std::max(worst, std::abs(splat_kernel(p) - std::exp(-p)));
        const double fd = (splat_kernel(p + 1e-6) - splat_kernel(p - 1e-6)) / 2e-6;
        CHECK(splat_kernel_slope(p) == doctest::Approx(fd).epsilon(1e-6));
        CHECK(splat_kernel(p) >= 0.0);
    }
    CHECK(worst < 5.1e-5);
    CHECK(splat_kernel(0.0f) == doctest::Approx(splat_kernel(0.0)).epsilon(1e-6));
}

TEST_CASE("composite_pixel matches the direct ordered sum")
{
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto list = random_list(rng);
        const Composite got = composite_pixel<double>(list);
        const DirectComposite want = direct_sum(list);
        for (int c = 0; c < 3; ++c) {
            CHECK(std::abs(got.color[c] - want.color[c]) <= 1e-9);
            CHECK(std::abs(want.untruncated_color[c] - want.color[c]) <= kTransmittanceFloor);
        }
        CHECK(std::abs(got.strawberry - want.strawberry) <= 1e-9);
        CHECK(std::abs(got.bruise - want.bruise) <= 1e-9);
        CHECK(std::abs(got.alpha - want.alpha) <= 1e-9);
        CHECK(got.alpha >= 0.0);
        CHECK(got.alpha <= 1.0);
    }
}

TEST_CASE("composite_pixel background, trivial cases and invalid alpha")
{
    const Eigen::Vector3d bg(0.2, 0.4, 0.6);
    const Composite empty = composite_pixel<double>({}, bg);
    CHECK(empty.color == bg);
    CHECK(empty.alpha == 0.0);
    CHECK(empty.strawberry == 0.0);

    const std::vector<Contribution> one = {{0.5, Eigen::Vector3d(1, 0, 0), 1.0, 0.0}};
    const Composite c = composite_pixel<double>(one, bg);
    CHECK(c.color[0] == doctest::Approx(0.5 + 0.5 * 0.2));
    CHECK(c.color[2] == doctest::Approx(0.3));
    CHECK(c.strawberry == doctest::Approx(0.5));
    CHECK(c.alpha == doctest::Approx(0.5));

    for (double bad : {1.0, -0.1, std::nan("")}) {
        const std::vector<Contribution> l = {{bad, Eigen::Vector3d::Zero(), 0.0, 0.0}};
        CHECK_THROWS_AS(composite_pixel<double>(l), std::invalid_argument);
    }

    const std::vector<ContributionT<float>> lf = {{0.25f, Eigen::Vector3f(1, 1, 1), 1.0f, 1.0f}};
    CHECK(composite_pixel<float>(lf).alpha == doctest::Approx(0.25f));
}

TEST_CASE("project follows the pinhole model and the linearized covariance")
{
    std::mt19937_64 rng(22);
    const CameraFrame frame = testing::look_at({0.3, -2.0, 0.5}, {0, 0, 0}, 64, 48, 50.0);
    GaussianCloud cloud = testing::random_cloud(rng, {.count = 6, .extent = 0.4, .depth = 0.0});
    cloud.gaussians.push_back(cloud.gaussians[0]);
    cloud.gaussians.back().mean = frame.camera_center() + 0.001 * (Eigen::Vector3d(0, 0, 0) - frame.camera_center());

    const auto projected = project(cloud, frame, 0.01, 0.3);
    REQUIRE(projected.size() == 6);
    const Eigen::Matrix3d r = frame.world_to_camera_rotation();
    const auto& in = frame.intrinsics;
    auto pixel_of = [&](const Eigen::Vector3d& world) {
        const Eigen::Vector3d t = r * world + frame.translation;
        return Eigen::Vector2d(in.fx * t.x() / t.z() + in.cx, in.fy * t.y() / t.z() + in.cy);
    };
    for (std::size_t k = 0; k < projected.size(); ++k) {
        const auto& p = projected[k];
        CHECK(p.parent_index == k);
        const Gaussian& g = cloud.gaussians[k];
        CHECK((p.pixel_mean - pixel_of(g.mean)).norm() < 1e-9);
        CHECK(p.depth == doctest::Approx((r * g.mean + frame.translation).z()));

        // Jacobian of world -> pixel by central differences.
        Eigen::Matrix<double, 2, 3> jw;
        for (int a = 0; a < 3; ++a) {
            Eigen::Vector3d e = Eigen::Vector3d::Zero();
            e[a] = 1e-6;
            jw.col(a) = (pixel_of(g.mean + e) - pixel_of(g.mean - e)) / 2e-6;
        }
        const Eigen::Matrix2d want = jw * g.covariance() * jw.transpose() + 0.3 * Eigen::Matrix2d::Identity();
        CHECK((p.cov2d - want).norm() <= 1e-6 * want.norm());
        CHECK(p.cov2d.determinant() > 0.0);
    }
}

TEST_CASE("tile renderer equals a brute-force per-pixel renderer")
{
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const GaussianCloud cloud = testing::random_cloud(rng, {.count = 30, .max_opacity = 0.99});
        const CameraFrame frame = testing::axis_camera(40, 28, 35.0);
        RenderConfig cfg;
        cfg.background = Eigen::Vector3d(0.1, 0.5, 0.9);
        const RenderOutput a = render(cloud, frame, cfg);
        const RenderOutput b = brute_force_render(cloud, frame, cfg);
        CHECK(max_abs_diff(a, b) <= 1e-12);
    }
}

TEST_CASE("render output does not depend on tile size, thread count or input order")
{
    std::mt19937_64 rng(24);
    GaussianCloud cloud = testing::random_cloud(rng, {.count = 40});
    const CameraFrame frame = testing::axis_camera(50, 37, 40.0);
    RenderConfig base;
    base.threads = 1;
    const RenderOutput ref = render(cloud, frame, base);
    for (int tile : {1, 5, 8, 64}) {
        RenderConfig c = base;
        c.tile_size = tile;
        c.threads = 4;
        CHECK(identical(render(cloud, frame, c), ref));
    }
    std::reverse(cloud.gaussians.begin(), cloud.gaussians.end());
    CHECK(identical(render(cloud, frame, base), ref));
}

TEST_CASE("output channels respect their ranges")
{
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 10; ++trial) {
        const GaussianCloud cloud = testing::random_cloud(rng, {.count = 50, .max_opacity = 0.999});
        RenderConfig cfg;
        cfg.background = Eigen::Vector3d(1, 1, 1);
        const RenderOutput out = render(cloud, testing::axis_camera(32, 32, 40.0), cfg);
        CHECK(out.alpha.minCoeff() >= 0.0);
        CHECK(out.alpha.maxCoeff() <= 1.0);
        CHECK((out.strawberry <= out.alpha + 1e-12).all());
        CHECK((out.bruise <= out.alpha + 1e-12).all());
        CHECK(out.strawberry.minCoeff() >= 0.0);
        for (int c = 0; c < 3; ++c) CHECK(out.color[c].maxCoeff() <= 1.0 + 1e-12);
    }
}

TEST_CASE("culled scene renders background with empty masks")
{
    GaussianCloud cloud;
    cloud.gaussians.resize(2);
    cloud.gaussians[0].mean = Eigen::Vector3d(0, 0, -1.0);
    cloud.gaussians[1].mean = Eigen::Vector3d(0, 0, 0.005);
    RenderConfig cfg;
    cfg.background = Eigen::Vector3d(0.25, 0.5, 0.75);
    const RenderOutput out = render(cloud, testing::axis_camera(8, 6, 5.0), cfg);
    for (int c = 0; c < 3; ++c) CHECK((out.color[c] == cfg.background[c]).all());
    CHECK((out.alpha == 0.0).all());
    CHECK((out.strawberry == 0.0).all());
    CHECK((out.bruise == 0.0).all());
}

TEST_CASE("an opaque frame-filling Gaussian with high strawberry score makes the mask track alpha")
{
    GaussianCloud cloud;
    Gaussian g;
    g.mean = Eigen::Vector3d(0, 0, 2.0);
    g.log_scale.setConstant(std::log(5.0));
    g.opacity_logit = 6.0;
    g.color = Eigen::Vector3d(0, 1, 0);
    g.s_logit = 25.0;
    cloud.gaussians.push_back(g);
    const RenderOutput out = render(cloud, testing::axis_camera(24, 24, 20.0));
    CHECK((out.strawberry - out.alpha).abs().maxCoeff() < 1e-10);
    CHECK(out.alpha.minCoeff() > 0.9);
    CHECK((out.color[1] - out.alpha).abs().maxCoeff() < 1e-12);
    CHECK(out.color[0].maxCoeff() == 0.0);
}

TEST_CASE("nearer Gaussians occlude farther ones regardless of input order")
{
    GaussianCloud cloud;
    Gaussian front, back;
    front.mean = Eigen::Vector3d(0, 0, 2.0);
    back.mean = Eigen::Vector3d(0, 0, 3.0);
    front.log_scale.setConstant(std::log(2.0));
    back.log_scale.setConstant(std::log(2.0));
    front.opacity_logit = back.opacity_logit = 8.0;
    front.color = Eigen::Vector3d(1, 0, 0);
    back.color = Eigen::Vector3d(0, 1, 0);
    cloud.gaussians = {back, front};
    const RenderOutput out = render(cloud, testing::axis_camera(16, 16, 10.0));
    CHECK(out.color[0](8, 8) > 0.99);
    CHECK(out.color[1](8, 8) < 0.01);
}

TEST_CASE("analytic gradients match central differences and honor the stop-gradient")
{
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 10; ++trial) {
        const auto [cloud, frame] = testing::random_gradcheck_scene(rng);
        const auto report = testing::check_gradients(cloud, frame, RenderConfig{}, rng);
        INFO(report.first_failure);
        CHECK(report.ok);
        CHECK(report.stop_grad_exact);
        CHECK(report.compared > 0);
    }
}

TEST_CASE("gradients are deterministic across thread counts")
{
    std::mt19937_64 rng(27);
    const GaussianCloud cloud = testing::random_cloud(rng, {.count = 60});
    const CameraFrame frame = testing::axis_camera(48, 40, 40.0);
    const RenderOutput up = testing::random_upstream(rng, 40, 48, true, true, true);
    RenderConfig one, many;
    one.threads = 1;
    many.threads = 8;
    const CloudGradients a = render_backward(cloud, frame, one, up);
    const CloudGradients b = render_backward(cloud, frame, many, up);
    CHECK(a.values == b.values);
}

TEST_CASE("backward rejects bad upstream gradients and maps zero to zero")
{
    std::mt19937_64 rng(28);
    const GaussianCloud cloud = testing::random_cloud(rng, {.count = 5});
    const CameraFrame frame = testing::axis_camera(16, 16, 20.0);
    const FrameRasterizer raster(cloud, frame, RenderConfig{});
    RenderOutput up(16, 16);
    CHECK(raster.backward(up).values.isZero(0.0));
    up.bruise(3, 3) = std::nan("");
    CHECK_THROWS_AS(raster.backward(up), std::invalid_argument);
    CHECK_THROWS_AS(raster.backward(RenderOutput(15, 16)), std::invalid_argument);
}

TEST_CASE("parameter packing round-trips")
{
    std::mt19937_64 rng(29);
    const GaussianCloud cloud = testing::random_cloud(rng, {.count = 9});
    GaussianCloud back;
    unpack_parameters(pack_parameters(cloud), back);
    CHECK(back.gaussians == cloud.gaussians);
}

TEST_CASE("two half-transparent entries and order sensitivity")
{
    const std::vector<Contribution> wb = {{0.5, Eigen::Vector3d::Ones(), 0.0, 0.0}, {0.5, Eigen::Vector3d::Zero(), 0.0, 0.0}};
    const Composite c = composite_pixel<double>(wb);
    CHECK(c.color.isApprox(Eigen::Vector3d::Constant(0.5), 1e-15));
    CHECK(c.alpha == doctest::Approx(0.75).epsilon(1e-15));

    const std::vector<Contribution> one = {{0.6, Eigen::Vector3d(1, 0, 0), 1.0, 0.0}};
    const Composite d = composite_pixel<double>(one);
    CHECK(d.color.isApprox(Eigen::Vector3d(0.6, 0, 0), 1e-15));
    CHECK(d.strawberry == doctest::Approx(0.6));
    CHECK(d.bruise == 0.0);

    std::mt19937_64 rng(27);
    for (int trial = 0; trial < 500; ++trial) {
        Contribution a{testing::uniform(rng, 0.01, 0.99), Eigen::Vector3d::Zero(), testing::uniform(rng, 0, 1), 0.0};
        Contribution b{testing::uniform(rng, 0.01, 0.99), Eigen::Vector3d::Zero(), testing::uniform(rng, 0, 1), 0.0};
        while (std::abs(a.strawberry - b.strawberry) < 1e-3) b.strawberry = testing::uniform(rng, 0, 1);
        // Swapping two entries changes the result by alpha_a * alpha_b * (s_a - s_b).
        const std::vector<Contribution> ab = {a, b}, ba = {b, a};
        const double swap = composite_pixel<double>(ab).strawberry - composite_pixel<double>(ba).strawberry;
        CHECK(std::abs(swap - a.alpha * b.alpha * (a.strawberry - b.strawberry)) <= 1e-14);
        CHECK(swap != 0.0);
        a.alpha = 0.0;
        const std::vector<Contribution> zab = {a, b}, zba = {b, a};
        CHECK(composite_pixel<double>(zab).strawberry == composite_pixel<double>(zba).strawberry);
    }
}
