#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "edof/grid.hpp"

// Float raster file format.
//
// A 64-byte ASCII header followed by little-endian samples, band-major then
// row-major. The header is space padded and terminated by '\n':
//
//   EDOFRAST <type> <rows> <cols> <bands> <pitch_m> <wavelength_m>
//
// <type> is f32 for the interchange format. f64 is accepted for optimizer
// state that must round-trip exactly (checkpoints).
namespace edof
{

inline constexpr std::size_t kRasterHeaderBytes = 64;

enum class SampleType { Float32, Float64 };

struct Raster
{
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t bands = 1;
    double pitch_m = 0.0;
    double wavelength_m = 0.0;
    SampleType type = SampleType::Float32;
    std::vector<double> values;

    RealGrid band(std::size_t b) const;

    static Raster from_grid(const RealGrid &grid, double pitch_m, double wavelength_m,
                            SampleType type = SampleType::Float32);
    static Raster from_bands(const std::vector<RealGrid> &bands, double pitch_m, double wavelength_m,
                             SampleType type = SampleType::Float32);
};

void write_raster(std::ostream &out, const Raster &raster);
Raster read_raster(std::istream &in);

void save_raster(const std::filesystem::path &path, const Raster &raster);
Raster load_raster(const std::filesystem::path &path);

// Plain comma-separated dump of a grid, one row per line, full double precision.
void write_grid_csv(std::ostream &out, const RealGrid &grid);
void save_grid_csv(const std::filesystem::path &path, const RealGrid &grid);

} // namespace edof
