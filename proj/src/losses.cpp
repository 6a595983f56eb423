#include "fruitsplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace fruitsplat {
namespace {

void require_same_shape(const ColorImage& a, const ColorImage& b, const char* what)
{
    if (a.width() != b.width() || a.height() != b.height())
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                    std::to_string(b.height()) + ")");
}

std::vector<double> gaussian_window(int size, double sigma)
{
    std::vector<double> w(static_cast<std::size_t>(size));
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - size / 2;
        w[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

/// Separable "same" filtering with zero padding. Symmetric kernels make this self-adjoint.
Plane filter(const Plane& in, const std::vector<double>& k)
{
    const Eigen::Index h = in.rows(), w = in.cols();
    const Eigen::Index r = static_cast<Eigen::Index>(k.size() / 2);
    Plane tmp = Plane::Zero(h, w);
    for (Eigen::Index x = 0; x < w; ++x)
        for (Eigen::Index j = -r; j <= r; ++j) {
            const Eigen::Index sx = x + j;
            if (sx < 0 || sx >= w) continue;
            tmp.col(x) += k[static_cast<std::size_t>(j + r)] * in.col(sx);
        }
    Plane out = Plane::Zero(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index j = -r; j <= r; ++j) {
            const Eigen::Index sy = y + j;
            if (sy < 0 || sy >= h) continue;
            out.row(y) += k[static_cast<std::size_t>(j + r)] * tmp.row(sy);
        }
    return out;
}

void validate(const SsimOptions& o)
{
    if (o.window <= 0 || o.window % 2 == 0) throw std::invalid_argument("SSIM window must be odd and positive");
}

/// Sum of the SSIM map over all channels; optionally d(sum)/d(a) into grad.
double ssim_sum(const ColorImage& a, const ColorImage& b, const SsimOptions& o, ColorImage* grad)
{
    const auto k = gaussian_window(o.window, o.sigma);
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const Plane& x = a[c];
        const Plane& y = b[c];
        const Plane mu_x = filter(x, k), mu_y = filter(y, k);
        const Plane e_xx = filter(x * x, k), e_yy = filter(y * y, k), e_xy = filter(x * y, k);
        const Plane a1 = 2.0 * mu_x * mu_y + o.c1;
        const Plane a2 = 2.0 * (e_xy - mu_x * mu_y) + o.c2;
        const Plane b1 = mu_x * mu_x + mu_y * mu_y + o.c1;
        const Plane b2 = (e_xx - mu_x * mu_x) + (e_yy - mu_y * mu_y) + o.c2;
        const Plane map = (a1 * a2) / (b1 * b2);
        total += map.sum();
        if (grad) {
            const Plane denom = b1 * b2;
            const Plane d_mu = (2.0 * mu_y * a2 - 2.0 * mu_y * a1) / denom - map * (2.0 * mu_x / b1 - 2.0 * mu_x / b2);
            const Plane d_exy = 2.0 * a1 / denom;
            const Plane d_exx = -map / b2;
            (*grad)[c] = filter(d_mu, k) + 2.0 * x * filter(d_exx, k) + y * filter(d_exy, k);
        }
    }
    return total;
}

} // namespace

double l1_loss(const ColorImage& pred, const ColorImage& gt, ColorImage* grad)
{
    require_same_shape(pred, gt, "l1_loss");
    const double n = 3.0 * pred.width() * pred.height();
    double sum = 0.0;
    if (grad) *grad = ColorImage(pred.height(), pred.width());
    for (int c = 0; c < 3; ++c) {
        const Plane diff = pred[c] - gt[c];
        sum += diff.abs().sum();
        if (grad) (*grad)[c] = diff.sign() / n;
    }
    return sum / n;
}

double ssim(const ColorImage& a, const ColorImage& b, const SsimOptions& options)
{
    require_same_shape(a, b, "ssim");
    validate(options);
    return ssim_sum(a, b, options, nullptr) / (3.0 * a.width() * a.height());
}

double dssim_loss(const ColorImage& pred, const ColorImage& gt, const SsimOptions& options, ColorImage* grad)
{
    require_same_shape(pred, gt, "dssim_loss");
    validate(options);
    const double n = 3.0 * pred.width() * pred.height();
    if (grad) *grad = ColorImage(pred.height(), pred.width());
    const double mean = ssim_sum(pred, gt, options, grad) / n;
    if (grad)
        for (int c = 0; c < 3; ++c) (*grad)[c] *= -0.5 / n;
    return 0.5 * (1.0 - mean);
}

double bce_loss(const Plane& pred, const Mask& gt, bool valid, Plane* grad)
{
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw std::invalid_argument("bce_loss: shape mismatch");
    if (grad) *grad = Plane::Zero(pred.rows(), pred.cols());
    if (!valid || pred.size() == 0) return 0.0;

    const double n = static_cast<double>(pred.size());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double raw = pred(i);
        const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
        const bool y = gt(i) != 0;
        sum += y ? -std::log(p) : -std::log(1.0 - p);
        if (grad && raw == p) (*grad)(i) = (y ? -1.0 / p : 1.0 / (1.0 - p)) / n;
    }
    return sum / n;
}

double psnr(const ColorImage& a, const ColorImage& b)
{
    require_same_shape(a, b, "psnr");
    double se = 0.0;
    for (int c = 0; c < 3; ++c) se += (a[c] - b[c]).square().sum();
    const double mse = se / (3.0 * a.width() * a.height());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

} // namespace fruitsplat
