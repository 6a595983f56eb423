#include "fruitsplat/tactile.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fruitsplat {
namespace {

void require_same_shape(const ColorImage& a, const ColorImage& b)
{
    if (a.width() != b.width() || a.height() != b.height())
        throw std::invalid_argument("tactile frames differ in size: " + std::to_string(a.width()) + "x" +
                                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                    std::to_string(b.height()));
}

} // namespace

Plane to_grayscale(const ColorImage& image) { return kLumaR * image[0] + kLumaG * image[1] + kLumaB * image[2]; }

Plane diff_image(const TactileFrame& frame, const TactileFrame& reference)
{
    if (frame.sensor_id != reference.sensor_id)
        throw std::invalid_argument("diff_image: sensor mismatch (" + frame.sensor_id + " vs " + reference.sensor_id + ")");
    require_same_shape(frame.image, reference.image);
    return ((frame.image[0] - reference.image[0]).abs() + (frame.image[1] - reference.image[1]).abs() +
            (frame.image[2] - reference.image[2]).abs()) /
           3.0;
}

double contact_energy(const TactileFrame& frame, const TactileFrame& reference)
{
    require_same_shape(frame.image, reference.image);
    return (to_grayscale(frame.image) - to_grayscale(reference.image)).square().sum();
}

bool detect_contact(const TactileFrame& frame, const ContactConfig& config)
{
    return contact_energy(frame, config.reference) > config.tau;
}

double calibrate_tau(std::span<const TactileFrame> frames, const TactileFrame& reference)
{
    if (frames.empty()) throw std::invalid_argument("calibrate_tau: no calibration frames");
    std::vector<double> energies;
    energies.reserve(frames.size());
    for (const auto& f : frames) energies.push_back(contact_energy(f, reference));
    double mean = 0.0;
    for (double e : energies) mean += e;
    mean /= static_cast<double>(energies.size());
    double var = 0.0;
    for (double e : energies) var += (e - mean) * (e - mean);
    var /= static_cast<double>(energies.size());
    const double tau = mean + 5.0 * std::sqrt(var);
    // A perfectly static clip would give tau = 0, which detects noise-free frames only.
    return tau > 0.0 ? tau : 1e-12;
}

} // namespace fruitsplat
