#include "fruitsplat/gaussian.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "fruitsplat/parallel.hpp"

namespace fruitsplat {

bool Gaussian::is_finite() const
{
    return mean.allFinite() && log_scale.allFinite() && rotation.allFinite() && std::isfinite(opacity_logit) &&
           color.allFinite() && std::isfinite(s_logit) && std::isfinite(b_logit);
}

void GaussianCloud::validate() const
{
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const Gaussian& g = gaussians[i];
        if (!g.is_finite()) throw std::invalid_argument("gaussian " + std::to_string(i) + " has non-finite fields");
        if (std::abs(g.rotation.norm() - 1.0) > 1e-6)
            throw std::invalid_argument("gaussian " + std::to_string(i) + " rotation is not unit length");
    }
}

GaussianCloud init_from_points(const std::vector<SparsePoint>& points, const InitOptions& options)
{
    if (points.empty()) throw std::invalid_argument("init_from_points: empty point list");
    if (!(options.initial_opacity > 0.0 && options.initial_opacity < 1.0))
        throw std::invalid_argument("init_from_points: initial_opacity must be in (0, 1)");
    if (options.knn_k < 1) throw std::invalid_argument("init_from_points: knn_k must be >= 1");

    const std::size_t n = points.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(options.knn_k), n - 1);

    GaussianCloud cloud;
    cloud.metadata.source = "sparse points";
    cloud.gaussians.resize(n);

    // Brute force neighbour search; desk-scale models stay in the low thousands of points.
    parallel_for(n, resolve_thread_count(), [&](std::size_t i) {
        double scale = options.fallback_scale;
        if (k > 0) {
            std::vector<double> d2;
            d2.reserve(n - 1);
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) d2.push_back((points[j].position - points[i].position).squaredNorm());
            std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(k), d2.end());
            double sum = 0.0;
            for (std::size_t m = 0; m < k; ++m) sum += std::sqrt(d2[m]);
            const double mean_dist = sum / static_cast<double>(k);
            if (mean_dist > 0.0) scale = mean_dist;
        }
        Gaussian& g = cloud.gaussians[i];
        g.mean = points[i].position;
        g.log_scale.setConstant(std::log(scale));
        g.rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
        g.opacity_logit = logit(options.initial_opacity);
        for (int c = 0; c < 3; ++c) g.color[c] = points[i].color[c] / 255.0;
        g.s_logit = 0.0;
        g.b_logit = 0.0;
    });
    return cloud;
}

} // namespace fruitsplat
