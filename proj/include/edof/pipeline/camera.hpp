#pragma once

#include <cstdint>
#include <vector>

#include "edof/autodiff.hpp"
#include "edof/optics.hpp"
#include "edof/sensor.hpp"

namespace edof::pipeline
{

// Fixed hardware of the camera: geometry, spectral channels, the refractive
// lens. The DOE phase at the nominal wavelength is the free input.
class CameraModel
{
public:
    CameraModel(CameraGeometry geometry, SpectralModel spectral);

    const CameraGeometry &geometry() const { return geometry_; }
    const SpectralModel &spectral() const { return spectral_; }
    std::size_t channels() const { return spectral_.channels(); }

    double focal_length(std::size_t channel) const { return focal_[channel]; }
    const PhaseMap &lens_residual(std::size_t channel) const { return lens_[channel]; }
    double defocus(Depth z, std::size_t channel) const;
    double max_defocus(const DepthRange &range) const;

    PsfForward psf_forward(const PhaseMap &nominal_phase, Depth z, std::size_t channel) const;
    std::vector<Psf> psfs(const PhaseMap &nominal_phase, Depth z) const;
    PsfProvider provider(PhaseMap nominal_phase) const;

    PhaseMap zero_phase() const;

private:
    CameraGeometry geometry_;
    SpectralModel spectral_;
    std::vector<double> focal_;
    std::vector<PhaseMap> lens_;
};

// Unit impulse kernels, one per channel.
std::vector<Psf> delta_psfs(std::size_t channels, double pitch_m);

} // namespace edof::pipeline
