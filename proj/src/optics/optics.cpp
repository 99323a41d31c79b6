#include "edof/optics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "edof/error.hpp"
#include "edof/fft.hpp"

namespace edof
{

namespace
{
constexpr double kPi = std::numbers::pi;

void require_finite(const RealGrid &g, const char *what)
{
    for (double v : g)
        if (!std::isfinite(v))
            throw NumericError(std::string(what) + ": non-finite value");
}

void require_pupil_grid(const RealGrid &g, const CameraGeometry &geometry, const char *what)
{
    if (g.rows() != geometry.grid_side || g.cols() != geometry.grid_side)
        throw ShapeError(std::string(what) + ": grid is " + std::to_string(g.rows()) + "x" +
                         std::to_string(g.cols()) + ", geometry expects " + std::to_string(geometry.grid_side));
}

template <typename F>
PhaseMap fill_in_aperture(const CameraGeometry &geometry, double wavelength_m, F &&value_at)
{
    PhaseMap out{RealGrid(geometry.grid_side, geometry.grid_side), wavelength_m};
    const double r2 = geometry.aperture_radius_m * geometry.aperture_radius_m;
    for (std::size_t i = 0; i < geometry.grid_side; ++i) {
        const double s = geometry.pupil_coordinate(i);
        for (std::size_t j = 0; j < geometry.grid_side; ++j) {
            const double t = geometry.pupil_coordinate(j);
            const double rho2 = s * s + t * t;
            if (rho2 <= r2)
                out.values_rad(i, j) = value_at(s, t, rho2);
        }
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// CameraGeometry / SpectralModel

void CameraGeometry::validate() const
{
    if (!(aperture_radius_m > 0.0) || !(sensor_distance_m > 0.0) || !(pupil_pitch_m > 0.0) ||
        !(sensor_pixel_pitch_m > 0.0))
        throw DomainError("camera geometry: aperture radius, sensor distance and pitches must be positive");
    if (grid_side == 0)
        throw DomainError("camera geometry: grid side must be positive");
    if (static_cast<double>(grid_side) * pupil_pitch_m < 2.0 * aperture_radius_m * (1.0 - 1e-12))
        throw DomainError("camera geometry: pupil grid does not cover the aperture");
    if (psf_size == 0 || psf_size % 2 == 0)
        throw DomainError("camera geometry: psf size must be odd and positive");
    if (!(padding_factor >= 1.0))
        throw DomainError("camera geometry: padding factor must be >= 1");
}

std::size_t CameraGeometry::padded_side() const
{
    return fft::next_pow2(static_cast<std::size_t>(std::ceil(padding_factor * static_cast<double>(grid_side))));
}

double CameraGeometry::pupil_coordinate(std::size_t i) const
{
    return (static_cast<double>(i) - 0.5 * static_cast<double>(grid_side - 1)) * pupil_pitch_m;
}

double CameraGeometry::native_psf_pitch(double wavelength_m) const
{
    return wavelength_m * sensor_distance_m / (static_cast<double>(padded_side()) * pupil_pitch_m);
}

std::size_t CameraGeometry::field_covering_psf_size(double wavelength_m) const
{
    const double field = wavelength_m * sensor_distance_m / pupil_pitch_m;
    const auto half = static_cast<std::size_t>(std::ceil(field / (2.0 * sensor_pixel_pitch_m)));
    return 2 * half + 1;
}

CameraGeometry CameraGeometry::reference()
{
    CameraGeometry g;
    g.grid_side = grid_side_for(g.aperture_radius_m, g.pupil_pitch_m);
    g.psf_size = g.field_covering_psf_size(611e-9);
    return g;
}

CameraGeometry CameraGeometry::toy()
{
    CameraGeometry g;
    g.aperture_radius_m = 1.3e-3;
    g.pupil_pitch_m = 41e-6;
    g.grid_side = grid_side_for(g.aperture_radius_m, g.pupil_pitch_m);
    g.psf_size = g.field_covering_psf_size(611e-9);
    return g;
}

std::size_t grid_side_for(double aperture_radius_m, double pupil_pitch_m)
{
    // Tolerate round-off so that e.g. 2r/ds = 64.0000000001 stays 64.
    return static_cast<std::size_t>(std::ceil(2.0 * aperture_radius_m / pupil_pitch_m - 1e-9));
}

void SpectralModel::validate() const
{
    const auto n = wavelengths_m.size();
    if (n == 0 || doe_index.size() != n || lens_index.size() != n)
        throw ShapeError("spectral model: wavelengths and index tables must have the same non-zero length");
    if (nominal >= n)
        throw DomainError("spectral model: nominal channel out of range");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(wavelengths_m[i] > 0.0))
            throw DomainError("spectral model: wavelengths must be positive");
        if (!(doe_index[i] > 1.0) || !(lens_index[i] > 1.0))
            throw DomainError("spectral model: refractive indices must exceed 1");
        for (std::size_t j = 0; j < i; ++j)
            if (wavelengths_m[i] == wavelengths_m[j])
                throw DomainError("spectral model: wavelengths must be distinct");
    }
}

double SpectralModel::transfer_factor(std::size_t channel) const
{
    const double l0 = wavelengths_m.at(nominal);
    const double n0 = doe_index.at(nominal);
    return l0 * (doe_index.at(channel) - 1.0) / (wavelengths_m.at(channel) * (n0 - 1.0));
}

std::size_t SpectralModel::channel_of(double wavelength_m) const
{
    for (std::size_t i = 0; i < wavelengths_m.size(); ++i)
        if (wavelengths_m[i] == wavelength_m)
            return i;
    throw DomainError("spectral model: wavelength " + std::to_string(wavelength_m) + " m is not a model channel");
}

SpectralModel SpectralModel::rgb()
{
    return SpectralModel{{611e-9, 543e-9, 482e-9}, {1.457, 1.460, 1.463}, {1.457, 1.460, 1.463}, 1};
}

SpectralModel SpectralModel::with_bands(const SpectralModel &base, const std::vector<double> &band_wavelengths_m)
{
    SpectralModel out;
    out.wavelengths_m.push_back(base.nominal_wavelength());
    out.doe_index.push_back(base.doe_index.at(base.nominal));
    out.lens_index.push_back(base.lens_index.at(base.nominal));
    out.nominal = 0;
    for (double w : band_wavelengths_m) {
        if (w == base.nominal_wavelength())
            continue;
        const double n = fused_silica_index(w);
        out.wavelengths_m.push_back(w);
        out.doe_index.push_back(n);
        out.lens_index.push_back(n);
    }
    out.validate();
    return out;
}

double fused_silica_index(double wavelength_m)
{
    const double l2 = std::pow(wavelength_m * 1e6, 2);
    const double n2 = 1.0 + 0.6961663 * l2 / (l2 - 0.0684043 * 0.0684043) +
                      0.4079426 * l2 / (l2 - 0.1162414 * 0.1162414) + 0.8974794 * l2 / (l2 - 9.896161 * 9.896161);
    return std::sqrt(n2);
}

// ---------------------------------------------------------------------------
// Defocus and lens

double lens_focal_length(const CameraGeometry &geometry, double lens_index)
{
    if (!(lens_index > 1.0))
        throw DomainError("lens index must exceed 1");
    return geometry.lens_radius_of_curvature_m / (lens_index - 1.0);
}

double defocus_coefficient(Depth z, double wavelength_m, const CameraGeometry &geometry, double focal_length_m)
{
    if (!(focal_length_m > 0.0))
        throw DomainError("focal length must be positive");
    if (!(wavelength_m > 0.0))
        throw DomainError("wavelength must be positive");
    const double r = geometry.aperture_radius_m;
    return kPi / wavelength_m * (z.diopters() + 1.0 / geometry.sensor_distance_m - 1.0 / focal_length_m) * r * r;
}

std::optional<Depth> in_focus_depth(const CameraGeometry &geometry, double focal_length_m)
{
    const double d = 1.0 / focal_length_m - 1.0 / geometry.sensor_distance_m;
    if (d < 0.0)
        return std::nullopt;
    return Depth::diopters(d);
}

RealGrid aperture_mask(const CameraGeometry &geometry)
{
    return fill_in_aperture(geometry, 0.0, [](double, double, double) { return 1.0; }).values_rad;
}

PhaseMap zero_phase(const CameraGeometry &geometry, double wavelength_m)
{
    return PhaseMap{RealGrid(geometry.grid_side, geometry.grid_side), wavelength_m};
}

PhaseMap lens_phase(const CameraGeometry &geometry, double wavelength_m, double lens_index)
{
    const double R = geometry.lens_radius_of_curvature_m;
    if (geometry.aperture_radius_m > R)
        throw DomainError("lens phase: aperture radius exceeds the radius of curvature");
    const double k = 2.0 * kPi / wavelength_m;
    const double d0 = geometry.lens_center_thickness_m;
    return fill_in_aperture(geometry, wavelength_m, [&](double, double, double rho2) {
        const double thickness = d0 - (R - std::sqrt(R * R - rho2));
        return k * (lens_index - 1.0) * thickness;
    });
}

PhaseMap paraxial_lens_phase(const CameraGeometry &geometry, double wavelength_m, double lens_index)
{
    const double k = 2.0 * kPi / wavelength_m;
    const double f = lens_focal_length(geometry, lens_index);
    const double d0 = geometry.lens_center_thickness_m;
    return fill_in_aperture(geometry, wavelength_m, [&](double, double, double rho2) {
        return k * (lens_index - 1.0) * d0 - k * rho2 / (2.0 * f);
    });
}

PhaseMap lens_aberration_phase(const CameraGeometry &geometry, double wavelength_m, double lens_index)
{
    const double R = geometry.lens_radius_of_curvature_m;
    if (geometry.aperture_radius_m > R)
        throw DomainError("lens phase: aperture radius exceeds the radius of curvature");
    const double k = 2.0 * kPi / wavelength_m;
    // sqrt(R^2 - rho^2) - R + rho^2 / (2R) = -R u^2 / (2 (1 + sqrt(1 - u))^2) with u = rho^2 / R^2,
    // which avoids cancelling two nearly equal terms.
    return fill_in_aperture(geometry, wavelength_m, [&](double, double, double rho2) {
        const double u = rho2 / (R * R);
        const double root = 1.0 + std::sqrt(1.0 - u);
        return k * (lens_index - 1.0) * (-R * u * u / (2.0 * root * root));
    });
}

PhaseMap thickness_to_phase(const HeightMap &height, double wavelength_m, double index)
{
    if (!(index > 1.0))
        throw DomainError("thickness_to_phase: index must exceed 1");
    const double scale = 2.0 * kPi / wavelength_m * (index - 1.0);
    PhaseMap out{RealGrid(height.values_m.rows(), height.values_m.cols()), wavelength_m};
    for (std::size_t i = 0; i < out.values_rad.size(); ++i)
        out.values_rad[i] = scale * height.values_m[i];
    return out;
}

HeightMap phase_to_thickness(const PhaseMap &phase, double index, double pitch_m)
{
    if (!(index > 1.0))
        throw DomainError("phase_to_thickness: index must exceed 1");
    const double scale = phase.wavelength_m / (2.0 * kPi * (index - 1.0));
    HeightMap out{RealGrid(phase.values_rad.rows(), phase.values_rad.cols()), pitch_m};
    for (std::size_t i = 0; i < out.values_m.size(); ++i)
        out.values_m[i] = scale * phase.values_rad[i];
    return out;
}

PhaseMap phase_transfer_to_channel(const PhaseMap &phase_at_nominal, std::size_t channel,
                                   const SpectralModel &spectral)
{
    if (channel == spectral.nominal)
        return PhaseMap{phase_at_nominal.values_rad, spectral.nominal_wavelength()};
    const double factor = spectral.transfer_factor(channel);
    PhaseMap out{phase_at_nominal.values_rad, spectral.wavelengths_m.at(channel)};
    for (auto &v : out.values_rad)
        v *= factor;
    return out;
}

PhaseMap phase_transfer(const PhaseMap &phase_at_nominal, double target_wavelength_m, const SpectralModel &spectral)
{
    return phase_transfer_to_channel(phase_at_nominal, spectral.channel_of(target_wavelength_m), spectral);
}

// ---------------------------------------------------------------------------
// Pupil and PSF

ComplexPupil generalized_pupil(const PhaseMap &doe_phase, const PhaseMap &lens_phase_map, double defocus,
                               const CameraGeometry &geometry)
{
    require_pupil_grid(doe_phase.values_rad, geometry, "generalized_pupil (doe phase)");
    require_pupil_grid(lens_phase_map.values_rad, geometry, "generalized_pupil (lens phase)");
    require_finite(doe_phase.values_rad, "generalized_pupil (doe phase)");
    require_finite(lens_phase_map.values_rad, "generalized_pupil (lens phase)");
    if (!std::isfinite(defocus))
        throw NumericError("generalized_pupil: non-finite defocus");

    const std::size_t n = geometry.grid_side;
    const double r2 = geometry.aperture_radius_m * geometry.aperture_radius_m;
    ComplexPupil out{ComplexGrid(n, n), doe_phase.wavelength_m, defocus};
    for (std::size_t i = 0; i < n; ++i) {
        const double s = geometry.pupil_coordinate(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double t = geometry.pupil_coordinate(j);
            const double rho2 = s * s + t * t;
            if (rho2 > r2)
                continue;
            const double phase = doe_phase.values_rad(i, j) + lens_phase_map.values_rad(i, j) + defocus * rho2 / r2;
            out.values(i, j) = std::polar(1.0, phase);
        }
    }
    return out;
}

ComplexGrid pad_pupil(const ComplexPupil &pupil, const CameraGeometry &geometry)
{
    const std::size_t n = geometry.grid_side;
    if (pupil.values.rows() != n || pupil.values.cols() != n)
        throw ShapeError("pad_pupil: pupil does not match geometry grid");
    const std::size_t np = geometry.padded_side();
    ComplexGrid padded(np, np);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            padded(i, j) = pupil.values(i, j);
    return padded;
}

SensorResampler::SensorResampler(std::size_t native_side, double native_pitch_m, std::size_t sensor_side,
                                 double sensor_pitch_m)
    : native_side_(native_side), rows_(sensor_side)
{
    // Native sample j is a pixel of width native_pitch centred at (j - N/2) * native_pitch
    // (the zero-frequency bin after fftshift); sensor pixel i is centred at (i - (K-1)/2) * sensor_pitch.
    const double half_native = 0.5 * static_cast<double>(native_side);
    const double half_sensor = 0.5 * static_cast<double>(sensor_side - 1);
    for (std::size_t i = 0; i < sensor_side; ++i) {
        const double lo = (static_cast<double>(i) - half_sensor - 0.5) * sensor_pitch_m;
        const double hi = lo + sensor_pitch_m;
        // Native pixel j covers [(j - N/2 - 1/2) p, (j - N/2 + 1/2) p].
        const double jlo = std::floor(lo / native_pitch_m + half_native - 0.5);
        const double jhi = std::ceil(hi / native_pitch_m + half_native + 0.5);
        Row row;
        bool started = false;
        for (double jd = std::max(0.0, jlo); jd <= std::min(jhi, static_cast<double>(native_side) - 1.0); jd += 1.0) {
            const double c = (jd - half_native) * native_pitch_m;
            const double overlap =
                std::min(hi, c + 0.5 * native_pitch_m) - std::max(lo, c - 0.5 * native_pitch_m);
            if (overlap <= 0.0) {
                if (started)
                    break;
                continue;
            }
            if (!started) {
                row.first = static_cast<std::size_t>(jd);
                started = true;
            }
            row.weights.push_back(overlap / native_pitch_m);
        }
        rows_[i] = std::move(row);
    }
}

RealGrid SensorResampler::apply(const RealGrid &native) const
{
    if (native.rows() != native_side_ || native.cols() != native_side_)
        throw ShapeError("SensorResampler::apply: native grid size mismatch");
    const std::size_t k = rows_.size(), n = native_side_;
    RealGrid tmp(k, n);
    for (std::size_t i = 0; i < k; ++i) {
        const auto &row = rows_[i];
        for (std::size_t w = 0; w < row.weights.size(); ++w) {
            const double wt = row.weights[w];
            const double *src = &native(row.first + w, 0);
            double *dst = &tmp(i, 0);
            for (std::size_t c = 0; c < n; ++c)
                dst[c] += wt * src[c];
        }
    }
    RealGrid out(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const auto &row = rows_[j];
            double acc = 0.0;
            for (std::size_t w = 0; w < row.weights.size(); ++w)
                acc += row.weights[w] * tmp(i, row.first + w);
            out(i, j) = acc;
        }
    return out;
}

RealGrid SensorResampler::apply_transpose(const RealGrid &sensor) const
{
    const std::size_t k = rows_.size(), n = native_side_;
    if (sensor.rows() != k || sensor.cols() != k)
        throw ShapeError("SensorResampler::apply_transpose: sensor grid size mismatch");
    // tmp = sensor * W  (k x n)
    RealGrid tmp(k, n);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double g = sensor(i, j);
            if (g == 0.0)
                continue;
            const auto &row = rows_[j];
            for (std::size_t w = 0; w < row.weights.size(); ++w)
                tmp(i, row.first + w) += g * row.weights[w];
        }
    // out = W^T * tmp  (n x n)
    RealGrid out(n, n);
    for (std::size_t i = 0; i < k; ++i) {
        const auto &row = rows_[i];
        for (std::size_t w = 0; w < row.weights.size(); ++w) {
            const double wt = row.weights[w];
            double *dst = &out(row.first + w, 0);
            const double *src = &tmp(i, 0);
            for (std::size_t c = 0; c < n; ++c)
                dst[c] += wt * src[c];
        }
    }
    return out;
}

SensorResampler sensor_resampler(const CameraGeometry &geometry, double wavelength_m)
{
    return SensorResampler(geometry.padded_side(), geometry.native_psf_pitch(wavelength_m), geometry.psf_size,
                           geometry.sensor_pixel_pitch_m);
}

namespace
{

RealGrid centred_intensity(const ComplexPupil &pupil, const CameraGeometry &geometry)
{
    ComplexGrid spectrum = pad_pupil(pupil, geometry);
    fft::forward(spectrum);
    RealGrid raw(spectrum.rows(), spectrum.cols());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = std::norm(spectrum[i]);
    return fftshift(raw);
}

void normalize_unit_sum(RealGrid &g, const char *what)
{
    double sum = 0.0;
    for (double v : g)
        sum += v;
    if (!(sum > 0.0) || !std::isfinite(sum))
        throw NumericError(std::string(what) + ": PSF has no energy");
    for (auto &v : g)
        v /= sum;
}

} // namespace

Psf native_psf(const ComplexPupil &pupil, const CameraGeometry &geometry)
{
    Psf out{centred_intensity(pupil, geometry), geometry.native_psf_pitch(pupil.wavelength_m), pupil.wavelength_m,
            std::nullopt};
    normalize_unit_sum(out.values, "native_psf");
    return out;
}

Psf psf(const ComplexPupil &pupil, const CameraGeometry &geometry)
{
    const RealGrid native = centred_intensity(pupil, geometry);
    Psf out{sensor_resampler(geometry, pupil.wavelength_m).apply(native), geometry.sensor_pixel_pitch_m,
            pupil.wavelength_m, std::nullopt};
    normalize_unit_sum(out.values, "psf");
    return out;
}

Mtf mtf(const Psf &p)
{
    ComplexGrid spectrum(p.values.rows(), p.values.cols());
    for (std::size_t i = 0; i < spectrum.size(); ++i)
        spectrum[i] = p.values[i];
    fft::forward(spectrum);
    const double dc = std::abs(spectrum[0]);
    if (!(dc > 0.0))
        throw NumericError("mtf: PSF has zero sum");
    RealGrid mag(spectrum.rows(), spectrum.cols());
    for (std::size_t i = 0; i < mag.size(); ++i)
        mag[i] = std::min(1.0, std::abs(spectrum[i]) / dc);
    mag[0] = 1.0;
    return Mtf{fftshift(mag), 1.0 / (static_cast<double>(p.values.cols()) * p.pitch_m)};
}

std::vector<double> mtf_axis_profile(const Mtf &m)
{
    const std::size_t r0 = m.values.rows() / 2, c0 = m.values.cols() / 2;
    std::vector<double> out;
    for (std::size_t c = c0; c < m.values.cols(); ++c)
        out.push_back(m.values(r0, c));
    return out;
}

std::vector<double> mtf_radial_profile(const Mtf &m)
{
    const auto r0 = static_cast<double>(m.values.rows() / 2), c0 = static_cast<double>(m.values.cols() / 2);
    const std::size_t bins = std::min(m.values.rows(), m.values.cols()) / 2;
    std::vector<double> sum(bins, 0.0), count(bins, 0.0);
    for (std::size_t i = 0; i < m.values.rows(); ++i)
        for (std::size_t j = 0; j < m.values.cols(); ++j) {
            const double rad = std::hypot(static_cast<double>(i) - r0, static_cast<double>(j) - c0);
            const auto b = static_cast<std::size_t>(std::lround(rad));
            if (b < bins) {
                sum[b] += m.values(i, j);
                count[b] += 1.0;
            }
        }
    for (std::size_t b = 0; b < bins; ++b)
        sum[b] = count[b] > 0.0 ? sum[b] / count[b] : 0.0;
    return sum;
}

double incoherent_cutoff(const CameraGeometry &geometry, double wavelength_m)
{
    return 2.0 * geometry.aperture_radius_m / (wavelength_m * geometry.sensor_distance_m);
}

double profile_distance(const std::vector<double> &a, const std::vector<double> &b, std::size_t count)
{
    if (count > a.size() || count > b.size())
        throw ShapeError("profile_distance: profiles shorter than requested count");
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i)
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Sampling analysis

double chirp_bandwidth(double defocus, double aperture_radius_m)
{
    if (!(aperture_radius_m > 0.0))
        throw DomainError("chirp_bandwidth: aperture radius must be positive");
    return 2.0 * defocus / aperture_radius_m;
}

double min_sampling_pitch(double psi_max, double aperture_radius_m)
{
    if (psi_max < 0.0)
        throw DomainError("min_sampling_pitch: psi_max must be non-negative");
    if (psi_max == 0.0)
        return std::numeric_limits<double>::infinity();
    return aperture_radius_m * kPi / (8.0 * psi_max);
}

double max_defocus(const DepthRange &range, const SpectralModel &spectral, const CameraGeometry &geometry)
{
    range.validate();
    double worst = 0.0;
    for (std::size_t c = 0; c < spectral.channels(); ++c) {
        const double f = lens_focal_length(geometry, spectral.lens_index[c]);
        const double wl = spectral.wavelengths_m[c];
        worst = std::max({worst, std::abs(defocus_coefficient(range.near, wl, geometry, f)),
                          std::abs(defocus_coefficient(range.far, wl, geometry, f))});
    }
    return worst;
}

PhaseMap cubic_mask(double strength, const CameraGeometry &geometry, double wavelength_m)
{
    if (!std::isfinite(strength))
        throw DomainError("cubic_mask: strength must be finite");
    const double r = geometry.aperture_radius_m;
    return fill_in_aperture(geometry, wavelength_m, [&](double s, double t, double) {
        const double sn = s / r, tn = t / r;
        return strength * (sn * sn * sn + tn * tn * tn);
    });
}

} // namespace edof
