#pragma once

#include "fruitsplat/image.hpp"

namespace fruitsplat {

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// Mean absolute per-channel difference. When `grad` is given it receives dL/dpred.
double l1_loss(const ColorImage& pred, const ColorImage& gt, ColorImage* grad = nullptr);

/// Mean SSIM over all pixels and channels, Gaussian-weighted windows with zero padding.
double ssim(const ColorImage& a, const ColorImage& b, const SsimOptions& options = {});

/// (1 - SSIM) / 2. When `grad` is given it receives dL/dpred.
double dssim_loss(const ColorImage& pred, const ColorImage& gt, const SsimOptions& options = {},
                  ColorImage* grad = nullptr);

inline constexpr double kBceClamp = 1e-6;

/// Mean binary cross entropy of pred (clamped to [1e-6, 1 - 1e-6]) against a 0/1 mask.
/// Returns 0 (and a zero gradient) when valid is false.
double bce_loss(const Plane& pred, const Mask& gt, bool valid = true, Plane* grad = nullptr);

/// Peak signal-to-noise ratio in dB for images in [0, 1].
double psnr(const ColorImage& a, const ColorImage& b);

} // namespace fruitsplat
