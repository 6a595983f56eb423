#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <Eigen/Core>

namespace fruitsplat {

/// Single-channel image, rows = height, cols = width, indexed (y, x).
template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Plane = PlaneT<double>;

/// Binary mask with values 0 or 1.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Planar RGB image with values nominally in [0, 1].
template <typename Scalar>
struct ColorImageT {
    std::array<PlaneT<Scalar>, 3> channels;

    ColorImageT() = default;
    ColorImageT(int height, int width, Scalar fill = Scalar(0))
    {
        for (auto& c : channels) c = PlaneT<Scalar>::Constant(height, width, fill);
    }

    int height() const { return static_cast<int>(channels[0].rows()); }
    int width() const { return static_cast<int>(channels[0].cols()); }

    PlaneT<Scalar>& operator[](int c) { return channels[c]; }
    const PlaneT<Scalar>& operator[](int c) const { return channels[c]; }

    bool operator==(const ColorImageT& o) const
    {
        for (int c = 0; c < 3; ++c) {
            if (channels[c].rows() != o.channels[c].rows() || channels[c].cols() != o.channels[c].cols()) return false;
            if ((channels[c] != o.channels[c]).any()) return false;
        }
        return true;
    }
};
using ColorImage = ColorImageT<double>;

/// Reads an 8-bit (or 16-bit, downscaled) PNG as RGB in [0, 1]. Gray inputs are replicated.
ColorImage read_png_rgb(const std::filesystem::path& path);

/// Reads a PNG as 8-bit gray; color inputs are converted with libpng's default weights.
Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> read_png_gray8(const std::filesystem::path& path);

/// Writes RGB quantized to 8 bits (round to nearest, clamped).
void write_png_rgb(const std::filesystem::path& path, const ColorImage& image);

/// Writes a [0,1] plane quantized to 8-bit gray.
void write_png_gray(const std::filesystem::path& path, const Plane& plane);

/// Writes a mask as 0 / 255 gray.
void write_png_mask(const std::filesystem::path& path, const Mask& mask);

inline std::uint8_t quantize_unit(double v)
{
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(c * 255.0 + 0.5);
}

} // namespace fruitsplat
