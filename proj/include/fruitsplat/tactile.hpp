#pragma once

#include <span>
#include <string>

#include "fruitsplat/image.hpp"

namespace fruitsplat {

struct TactileFrame {
    ColorImage image;
    std::string sensor_id;
    double timestamp = 0.0;
};

struct ContactConfig {
    double tau = 0.0;
    TactileFrame reference;
};

/// ITU-R BT.601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

Plane to_grayscale(const ColorImage& image);

/// Per-pixel mean over channels of |frame - reference|.
Plane diff_image(const TactileFrame& frame, const TactileFrame& reference);

/// Sum over pixels of squared grayscale differences.
double contact_energy(const TactileFrame& frame, const TactileFrame& reference);

/// True iff the contact energy strictly exceeds tau.
bool detect_contact(const TactileFrame& frame, const ContactConfig& config);

/// mean + 5 sigma of the energies of a contact-free clip against the reference.
double calibrate_tau(std::span<const TactileFrame> no_contact_frames, const TactileFrame& reference);

} // namespace fruitsplat
