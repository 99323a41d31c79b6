#pragma once

#include <cstddef>

#include "edof/optics.hpp"

namespace edof::pipeline
{

struct ExportConfig
{
    double fabrication_pitch_m = 3e-6;
    double max_depth_m = 1.2e-6;
    std::size_t levels = 98; // 0: no quantization

    void validate() const;
};

struct DoeExport
{
    HeightMap height;            // at the fabrication pitch
    double wrap_period_m = 0.0;  // thickness period used for wrapping
    double level_step_m = 0.0;   // 0 when not quantized
    double upsampling = 1.0;     // optimization pitch / fabrication pitch
    std::size_t max_level = 0;
};

// Keys cubic convolution (a = -0.5) on sample centres with edge clamping.
// Output sample j sits at (j + 0.5) out_pitch / in_pitch - 0.5 input samples.
RealGrid bicubic_resample(const RealGrid &in, double in_pitch_m, std::size_t out_rows, std::size_t out_cols,
                          double out_pitch_m);

// Nominal phase -> thickness (index of the nominal channel), bicubic upsampling
// to the fabrication pitch, wrapping modulo the largest whole number of 2 pi
// thickness periods that fits in max_depth, then rounding to the level lattice
// k * max_depth / (levels - 1).
DoeExport export_doe(const PhaseMap &phase, const SpectralModel &spectral, double optimization_pitch_m,
                     const ExportConfig &config);

// Largest |wrap(Phi_export - Phi_design)| over samples, where the export is read
// back at the fabrication samples that coincide with optimization samples
// (integer upsampling only) and wrap maps to (-pi, pi].
double export_round_trip_error(const DoeExport &doe, const PhaseMap &phase, const SpectralModel &spectral,
                               double optimization_pitch_m);

// Phase of one quantization step at the nominal wavelength.
double level_phase_step(const DoeExport &doe, const SpectralModel &spectral);

} // namespace edof::pipeline
