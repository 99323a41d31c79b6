#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "edof/depth.hpp"
#include "edof/grid.hpp"
#include "edof/image.hpp"
#include "edof/optics.hpp"

// Forward image formation on the sensor and the Wiener baseline.
//
// Convolutions use half-sample symmetric (reflect) boundary handling: sample -1
// mirrors sample 0, sample H mirrors sample H-1. They are evaluated as circular
// convolutions on the 2H x 2W mirrored image, which is exact for any kernel size.
namespace edof
{

// Index into [0, n) of position i under half-sample symmetric extension.
std::size_t mirror_index(std::ptrdiff_t i, std::size_t n);

// One image plane prepared for repeated convolution with centred odd kernels.
// Keeps the spectrum of the mirrored image so that forward passes and kernel
// gradients share one transform.
class ReflectConvolver
{
public:
    explicit ReflectConvolver(const RealGrid &image);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    // out(y, x) = sum_{u,v} k(u, v) I(y - u + c, x - v + c), c = K/2, I reflect-extended.
    RealGrid convolve(const RealGrid &kernel) const;
    // Gradient of sum(upstream * convolve(k)) with respect to k, for a K_r x K_c kernel.
    RealGrid kernel_grad(const RealGrid &upstream, std::size_t kernel_rows, std::size_t kernel_cols) const;

private:
    std::size_t rows_, cols_;
    ComplexGrid spectrum_; // rfft of the 2H x 2W mirrored image
};

RealGrid convolve_reflect(const RealGrid &image, const RealGrid &kernel);

// Adds N(0, sigma^2) noise and clamps to [0, 1]. Channel c draws from the stream
// (seed, stream, c), so the result does not depend on evaluation order.
void add_noise_and_clamp(Image &image, double sigma, std::uint64_t seed, std::uint64_t stream = 0);

struct SensorImage
{
    Image image;
    double noise_sigma = 0.0;
};

// Per-channel convolution with psfs[c], then noise and clamp.
SensorImage render_planar(const Image &scene, const std::vector<Psf> &psfs, double sigma_s, std::uint64_t seed);
// Same without noise or clamp; the linear part of render_planar.
Image blur_planar(const Image &scene, const std::vector<Psf> &psfs);

using PsfProvider = std::function<std::vector<Psf>(Depth)>;

struct DepthLayer
{
    Depth depth = Depth::infinity();
    RealGrid mask; // 1 where the pixel belongs to the layer
};

// Groups depth-map pixels (meters, +inf allowed) into layers of width `step`
// starting at the nearest finite depth. Each layer is represented by the mean
// inverse depth of its pixels. Layers are ordered near to far.
std::vector<DepthLayer> quantize_depth_map(const RealGrid &depth_map_m, double step_m);

// Sum over layers of (masked scene) * PSF(layer depth); no occlusion handling.
SensorImage render_layered(const Image &scene, const RealGrid &depth_map_m, const PsfProvider &psfs_at,
                           double sigma_s, double depth_step_m, std::uint64_t seed);

// Per-band response of the red, green and blue sensor channels.
struct SpectralResponse
{
    std::vector<double> wavelengths_m;
    std::vector<std::array<double, 3>> weights;

    std::size_t bands() const { return weights.size(); }
    void validate() const;
    // Copy with each channel's weights scaled to sum to one.
    SpectralResponse normalized() const;

    // Rows of "wavelength_nm,r,g,b"; a non-numeric first line is treated as a header.
    static SpectralResponse load_csv(const std::filesystem::path &path);
    // Hat-shaped responses centred on 611/543/482 nm, for synthetic experiments.
    static SpectralResponse triangular(const std::vector<double> &wavelengths_m);
};

// Evenly spaced band centres in [first, last], inclusive.
std::vector<double> band_wavelengths(double first_m, double last_m, std::size_t count);

// Channel c = sum_b w(b, c) * (cube_b * psf_b) with normalized weights; then noise and clamp.
SensorImage render_broadband(const std::vector<RealGrid> &cube, const SpectralResponse &response,
                             const std::vector<Psf> &psf_per_band, double sigma_s, std::uint64_t seed);

// Per-channel H* / (|H|^2 + nsr) on the mirrored image, clamped to [0, 1].
Image wiener_deconvolve(const Image &sensor, const std::vector<Psf> &psfs, double nsr);

// 10 log10(1 / MSE) over all pixels and channels; +inf when the images are identical.
double psnr(const Image &reference, const Image &test);
double mse(const Image &reference, const Image &test);

} // namespace edof
