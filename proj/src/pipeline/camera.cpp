#include "edof/pipeline/camera.hpp"

namespace edof::pipeline
{

CameraModel::CameraModel(CameraGeometry geometry, SpectralModel spectral)
    : geometry_(std::move(geometry)), spectral_(std::move(spectral))
{
    geometry_.validate();
    spectral_.validate();
    for (std::size_t c = 0; c < spectral_.channels(); ++c) {
        focal_.push_back(lens_focal_length(geometry_, spectral_.lens_index[c]));
        lens_.push_back(lens_aberration_phase(geometry_, spectral_.wavelengths_m[c], spectral_.lens_index[c]));
    }
}

double CameraModel::defocus(Depth z, std::size_t channel) const
{
    return defocus_coefficient(z, spectral_.wavelengths_m.at(channel), geometry_, focal_.at(channel));
}

double CameraModel::max_defocus(const DepthRange &range) const
{
    return edof::max_defocus(range, spectral_, geometry_);
}

PsfForward CameraModel::psf_forward(const PhaseMap &nominal_phase, Depth z, std::size_t channel) const
{
    const PhaseMap phi = phase_transfer_to_channel(nominal_phase, channel, spectral_);
    return edof::psf_forward(phi, lens_.at(channel), defocus(z, channel), geometry_);
}

std::vector<Psf> CameraModel::psfs(const PhaseMap &nominal_phase, Depth z) const
{
    std::vector<Psf> out;
    for (std::size_t c = 0; c < channels(); ++c) {
        const PhaseMap phi = phase_transfer_to_channel(nominal_phase, c, spectral_);
        Psf p = psf(generalized_pupil(phi, lens_[c], defocus(z, c), geometry_), geometry_);
        p.depth = z;
        out.push_back(std::move(p));
    }
    return out;
}

PsfProvider CameraModel::provider(PhaseMap nominal_phase) const
{
    return [this, phase = std::move(nominal_phase)](Depth z) { return psfs(phase, z); };
}

PhaseMap CameraModel::zero_phase() const
{
    return edof::zero_phase(geometry_, spectral_.nominal_wavelength());
}

std::vector<Psf> delta_psfs(std::size_t channels, double pitch_m)
{
    RealGrid k(1, 1, 1.0);
    return std::vector<Psf>(channels, Psf{k, pitch_m, 0.0, std::nullopt});
}

} // namespace edof::pipeline
