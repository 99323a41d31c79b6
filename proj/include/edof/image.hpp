#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "edof/grid.hpp"

namespace edof
{

// Planar multi-channel image; every channel has the same height and width.
struct Image
{
    std::vector<RealGrid> channels;

    static Image zeros(std::size_t channel_count, std::size_t height, std::size_t width)
    {
        return Image{std::vector<RealGrid>(channel_count, RealGrid(height, width))};
    }

    std::size_t channel_count() const { return channels.size(); }
    std::size_t height() const { return channels.empty() ? 0 : channels.front().rows(); }
    std::size_t width() const { return channels.empty() ? 0 : channels.front().cols(); }

    void validate() const
    {
        for (const auto &c : channels)
            require_same_shape(c, channels.front(), "image channels");
    }
};

// 8- or 16-bit PNG, mapped linearly to [0, 1]. Gray images give one channel,
// colour images three (alpha is dropped).
Image read_png(const std::filesystem::path &path);
// One- or three-channel image, values clamped to [0, 1].
void write_png(const std::filesystem::path &path, const Image &image, int bit_depth = 8);
// Grayscale 16-bit PNG with [lo, hi] mapped linearly onto [0, 65535].
void write_png_gray16(const std::filesystem::path &path, const RealGrid &grid, double lo, double hi);

} // namespace edof
