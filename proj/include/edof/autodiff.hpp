#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "edof/grid.hpp"
#include "edof/optics.hpp"

// Differentiable PSF layer: forward pass with a tape, and the analytic
// gradient of a loss on the PSF with respect to the DOE phase.
namespace edof
{

struct PsfTape
{
    CameraGeometry geometry;
    ComplexPupil pupil;      // Q, N x N
    ComplexGrid spectrum;    // DFT of the zero-padded Q, N_pad x N_pad, not shifted
    double energy = 0.0;     // sum of the pre-normalization PSF
    RealGrid normalized;     // output PSF h
    std::optional<SensorResampler> resampler; // empty for native-grid PSFs

    std::size_t padded_side() const { return spectrum.rows(); }
};

struct PsfForward
{
    Psf psf;
    PsfTape tape;
};

// Same numbers as psf() (or native_psf() when resample_to_sensor is false), plus the tape.
PsfForward psf_forward(const PhaseMap &doe_phase, const PhaseMap &lens_phase, double defocus,
                       const CameraGeometry &geometry, bool resample_to_sensor = true);

// Applies the transposes of normalization, sensor resampling and fftshift to dL/dh,
// giving dL/d|Q^|^2 on the unshifted N_pad x N_pad grid.
RealGrid pull_back(const PsfTape &tape, const RealGrid &dl_dh);

// dL/dPhi = 2 M N Im(IDFT(G o Q^) o conj(Q)), M = N = N_pad, with G = dL/d|Q^|^2
// and IDFT scaled by 1/(M N). Cropped to the N x N pupil grid.
RealGrid psf_backward(const PsfTape &tape, const RealGrid &dl_dintensity);

// pull_back followed by psf_backward.
RealGrid psf_vjp(const PsfTape &tape, const RealGrid &dl_dh);

// dL/dPhi_0 = sum_c t_c dL/dPhi_c with t_c the phase transfer factor of channel c.
RealGrid wavelength_grad_accumulate(const std::vector<RealGrid> &per_channel, const SpectralModel &spectral);

// Nominal phase plus N(0, s^2) per sample, s = (2 pi / lambda_0)(n_0 - 1) sigma_d.
PhaseMap inject_phase_noise(const PhaseMap &phase_at_nominal, double sigma_d_m, const SpectralModel &spectral,
                            std::uint64_t seed);
double phase_noise_std(double sigma_d_m, const SpectralModel &spectral);

struct GradCheckResult
{
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t samples = 0;
};

using ScalarLoss = std::function<double(const RealGrid &)>;
using LossGradient = std::function<RealGrid(const RealGrid &)>;

// Central differences of `loss` at `samples` random points drawn from `support`
// (nonzero entries; all points when empty) compared with `gradient`.
// Relative error is |a - n| / max(|a|, |n|, floor) with floor = 1e-6 * max|a| over the grid.
GradCheckResult finite_diff_check(const ScalarLoss &loss, const LossGradient &gradient, const RealGrid &point,
                                  double step, std::size_t samples, std::uint64_t seed,
                                  const RealGrid &support = {});

// Writes Q, |Q^|^2 and h as float rasters into `dir` with the given file prefix.
void dump_tape(const PsfTape &tape, const std::filesystem::path &dir, const std::string &prefix);

} // namespace edof
