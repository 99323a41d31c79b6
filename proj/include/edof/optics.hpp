#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "edof/depth.hpp"
#include "edof/grid.hpp"

// Scalar, paraxial, on-axis wave-optics model of a refractive lens with a
// diffractive element in its aperture. All functions here are pure.
namespace edof
{

struct CameraGeometry
{
    double aperture_radius_m = 2.5e-3;
    double sensor_distance_m = 36.9e-3;
    double lens_radius_of_curvature_m = 16.51e-3;
    double lens_center_thickness_m = 2.0e-3;
    double pupil_pitch_m = 21e-6;
    double sensor_pixel_pitch_m = 6e-6;
    std::size_t grid_side = 239;
    // The pupil is zero padded to the next power of two >= padding_factor * grid_side.
    double padding_factor = 2.0;
    // Odd side length of the sensor-plane PSF kernel, in sensor pixels.
    std::size_t psf_size = 181;

    void validate() const;

    std::size_t padded_side() const;
    // Physical coordinate of pupil sample i along either axis, centred on the optical axis.
    double pupil_coordinate(std::size_t i) const;
    // Sample pitch of the DFT-based PSF before resampling: lambda z_i / (N_pad ds).
    double native_psf_pitch(double wavelength_m) const;
    // Smallest odd kernel side that holds the whole native PSF field at this wavelength.
    std::size_t field_covering_psf_size(double wavelength_m) const;

    // Full-scale camera: 2.5 mm aperture, 21 um pupil sampling, 6 um pixels.
    static CameraGeometry reference();
    // Reduced camera for desk-scale training: 64x64 pupil at the sampling bound.
    static CameraGeometry toy();
};

std::size_t grid_side_for(double aperture_radius_m, double pupil_pitch_m);

struct SpectralModel
{
    std::vector<double> wavelengths_m;
    std::vector<double> doe_index;
    std::vector<double> lens_index;
    std::size_t nominal = 0;

    void validate() const;
    std::size_t channels() const { return wavelengths_m.size(); }
    double nominal_wavelength() const { return wavelengths_m.at(nominal); }
    // Factor mapping the nominal DOE phase to channel c: lambda0 (n_c - 1) / (lambda_c (n0 - 1)).
    double transfer_factor(std::size_t channel) const;
    std::size_t channel_of(double wavelength_m) const;

    // Red/green/blue at 611/543/482 nm with silica indices 1.457/1.460/1.463; green is nominal.
    static SpectralModel rgb();
    // Nominal channel of `base` followed by the given bands, with fused-silica indices for the bands.
    static SpectralModel with_bands(const SpectralModel &base, const std::vector<double> &band_wavelengths_m);
};

// Malitson Sellmeier fit for fused silica.
double fused_silica_index(double wavelength_m);

struct HeightMap
{
    RealGrid values_m;
    double pitch_m = 0.0;
};

struct PhaseMap
{
    RealGrid values_rad;
    double wavelength_m = 0.0;
};

struct ComplexPupil
{
    ComplexGrid values;
    double wavelength_m = 0.0;
    double defocus = 0.0;
};

struct Psf
{
    RealGrid values;
    double pitch_m = 0.0;
    double wavelength_m = 0.0;
    std::optional<Depth> depth;
};

// Centred modulation transfer function (zero frequency at rows/2, cols/2).
struct Mtf
{
    RealGrid values;
    double frequency_pitch = 0.0; // cycles per meter
};

double lens_focal_length(const CameraGeometry &geometry, double lens_index);

// Psi = (pi / lambda) (1/z + 1/z_i - 1/f) r^2.
double defocus_coefficient(Depth z, double wavelength_m, const CameraGeometry &geometry, double focal_length_m);

// Object depth imaged sharply on the sensor; empty when it lies beyond infinity.
std::optional<Depth> in_focus_depth(const CameraGeometry &geometry, double focal_length_m);

RealGrid aperture_mask(const CameraGeometry &geometry);
PhaseMap zero_phase(const CameraGeometry &geometry, double wavelength_m);

// Exact plano-convex spherical lens phase k (n - 1) d_l(s, t), zero outside the aperture.
PhaseMap lens_phase(const CameraGeometry &geometry, double wavelength_m, double lens_index);
// Thin-lens approximation k (n - 1) d_0 - k (s^2 + t^2) / (2 f).
PhaseMap paraxial_lens_phase(const CameraGeometry &geometry, double wavelength_m, double lens_index);
// Exact minus paraxial lens phase. The paraxial focusing power is already part of
// the defocus coefficient, so this residual (spherical aberration) is what the
// generalized pupil needs.
PhaseMap lens_aberration_phase(const CameraGeometry &geometry, double wavelength_m, double lens_index);

PhaseMap thickness_to_phase(const HeightMap &height, double wavelength_m, double index);
HeightMap phase_to_thickness(const PhaseMap &phase, double index, double pitch_m);

PhaseMap phase_transfer(const PhaseMap &phase_at_nominal, double target_wavelength_m, const SpectralModel &spectral);
PhaseMap phase_transfer_to_channel(const PhaseMap &phase_at_nominal, std::size_t channel,
                                   const SpectralModel &spectral);

ComplexPupil generalized_pupil(const PhaseMap &doe_phase, const PhaseMap &lens_phase, double defocus,
                               const CameraGeometry &geometry);

// Pupil embedded in the top-left corner of an N_pad x N_pad zero grid.
ComplexGrid pad_pupil(const ComplexPupil &pupil, const CameraGeometry &geometry);

// Area-integrating (box filter) resampler from the centred native PSF grid to a
// K x K sensor grid. Linear and separable; the transpose is exposed for
// gradient pull-back.
class SensorResampler
{
public:
    SensorResampler(std::size_t native_side, double native_pitch_m, std::size_t sensor_side,
                    double sensor_pitch_m);

    RealGrid apply(const RealGrid &native) const;
    RealGrid apply_transpose(const RealGrid &sensor) const;

    std::size_t native_side() const { return native_side_; }
    std::size_t sensor_side() const { return rows_.size(); }

private:
    struct Row
    {
        std::size_t first = 0;
        std::vector<double> weights;
    };
    std::size_t native_side_;
    std::vector<Row> rows_;
};

SensorResampler sensor_resampler(const CameraGeometry &geometry, double wavelength_m);

// |DFT(Q)|^2 on the native grid, centred and normalized to unit sum.
Psf native_psf(const ComplexPupil &pupil, const CameraGeometry &geometry);
// Native PSF resampled to the sensor pitch and renormalized to unit sum.
Psf psf(const ComplexPupil &pupil, const CameraGeometry &geometry);

Mtf mtf(const Psf &psf);
// MTF along the positive horizontal frequency axis, starting at zero frequency.
std::vector<double> mtf_axis_profile(const Mtf &m);
// Azimuthal average in one-sample-wide rings around zero frequency.
std::vector<double> mtf_radial_profile(const Mtf &m);
// Diffraction cutoff 2r / (lambda z_i) of the incoherent system, cycles per meter.
double incoherent_cutoff(const CameraGeometry &geometry, double wavelength_m);
// L2 distance between the first `count` entries of two MTF profiles.
double profile_distance(const std::vector<double> &a, const std::vector<double> &b, std::size_t count);

// Instantaneous bandwidth of the defocus chirp at the pupil edge, 2 Psi / r (rad/m).
double chirp_bandwidth(double defocus, double aperture_radius_m);
// Largest pupil pitch that avoids aliasing: r pi / (8 Psi_max). Infinite for Psi_max = 0.
double min_sampling_pitch(double psi_max, double aperture_radius_m);
// max over wavelengths and both range endpoints of |Psi|.
double max_defocus(const DepthRange &range, const SpectralModel &spectral, const CameraGeometry &geometry);

// Cubic phase plate a (s^3 + t^3) on pupil coordinates normalized by the aperture radius.
PhaseMap cubic_mask(double strength, const CameraGeometry &geometry, double wavelength_m);

} // namespace edof
