#include "edof/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "edof/error.hpp"
#include "edof/fft.hpp"
#include "edof/random.hpp"
#include "edof/raster_io.hpp"

namespace edof
{

PsfForward psf_forward(const PhaseMap &doe_phase, const PhaseMap &lens_phase, double defocus,
                       const CameraGeometry &geometry, bool resample_to_sensor)
{
    PsfTape tape;
    tape.geometry = geometry;
    tape.pupil = generalized_pupil(doe_phase, lens_phase, defocus, geometry);
    tape.spectrum = pad_pupil(tape.pupil, geometry);
    fft::forward(tape.spectrum);

    RealGrid raw(tape.spectrum.rows(), tape.spectrum.cols());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = std::norm(tape.spectrum[i]);
    RealGrid g = fftshift(raw);
    double pitch = geometry.native_psf_pitch(tape.pupil.wavelength_m);
    if (resample_to_sensor) {
        tape.resampler = sensor_resampler(geometry, tape.pupil.wavelength_m);
        g = tape.resampler->apply(g);
        pitch = geometry.sensor_pixel_pitch_m;
    }

    double sum = 0.0;
    for (double v : g)
        sum += v;
    if (!(sum > 0.0) || !std::isfinite(sum))
        throw NumericError("psf_forward: PSF has no energy");
    for (auto &v : g)
        v /= sum;
    tape.energy = sum;
    tape.normalized = g;

    return PsfForward{Psf{std::move(g), pitch, tape.pupil.wavelength_m, std::nullopt}, std::move(tape)};
}

RealGrid pull_back(const PsfTape &tape, const RealGrid &dl_dh)
{
    require_same_shape(dl_dh, tape.normalized, "pull_back (upstream vs PSF)");
    // h = g / sum(g)  =>  dL/dg = (dL/dh - <dL/dh, h>) / sum(g)
    double dot = 0.0;
    for (std::size_t i = 0; i < dl_dh.size(); ++i)
        dot += dl_dh[i] * tape.normalized[i];
    RealGrid dg(dl_dh.rows(), dl_dh.cols());
    for (std::size_t i = 0; i < dg.size(); ++i)
        dg[i] = (dl_dh[i] - dot) / tape.energy;
    if (tape.resampler)
        dg = tape.resampler->apply_transpose(dg);
    return ifftshift(dg);
}

RealGrid psf_backward(const PsfTape &tape, const RealGrid &dl_dintensity)
{
    require_same_shape(dl_dintensity, tape.spectrum, "psf_backward (upstream vs tape)");
    const std::size_t np = tape.padded_side();
    ComplexGrid x(np, np);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = dl_dintensity[i] * tape.spectrum[i];
    fft::inverse(x);

    const double mn = static_cast<double>(np) * static_cast<double>(np);
    const std::size_t n = tape.pupil.values.rows();
    RealGrid out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out(i, j) = 2.0 * mn * std::imag(x(i, j) * std::conj(tape.pupil.values(i, j)));
    return out;
}

RealGrid psf_vjp(const PsfTape &tape, const RealGrid &dl_dh) { return psf_backward(tape, pull_back(tape, dl_dh)); }

RealGrid wavelength_grad_accumulate(const std::vector<RealGrid> &per_channel, const SpectralModel &spectral)
{
    if (per_channel.size() != spectral.channels())
        throw ShapeError("wavelength_grad_accumulate: " + std::to_string(per_channel.size()) +
                         " gradients for " + std::to_string(spectral.channels()) + " wavelengths");
    RealGrid out(per_channel.front().rows(), per_channel.front().cols());
    for (std::size_t c = 0; c < per_channel.size(); ++c) {
        require_same_shape(per_channel[c], out, "wavelength_grad_accumulate");
        const double t = c == spectral.nominal ? 1.0 : spectral.transfer_factor(c);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += t * per_channel[c][i];
    }
    return out;
}

double phase_noise_std(double sigma_d_m, const SpectralModel &spectral)
{
    if (!(sigma_d_m >= 0.0))
        throw DomainError("fabrication noise sigma must be non-negative");
    const double n0 = spectral.doe_index.at(spectral.nominal);
    return 2.0 * std::numbers::pi / spectral.nominal_wavelength() * (n0 - 1.0) * sigma_d_m;
}

PhaseMap inject_phase_noise(const PhaseMap &phase_at_nominal, double sigma_d_m, const SpectralModel &spectral,
                            std::uint64_t seed)
{
    const double s = phase_noise_std(sigma_d_m, spectral);
    PhaseMap out = phase_at_nominal;
    if (s == 0.0)
        return out;
    Rng rng = make_rng(seed, {0x70686173ull});
    std::normal_distribution<double> noise(0.0, s);
    for (auto &v : out.values_rad)
        v += noise(rng);
    return out;
}

GradCheckResult finite_diff_check(const ScalarLoss &loss, const LossGradient &gradient, const RealGrid &point,
                                  double step, std::size_t samples, std::uint64_t seed, const RealGrid &support)
{
    if (!(step > 0.0))
        throw DomainError("finite_diff_check: step must be positive");
    if (!support.empty())
        require_same_shape(support, point, "finite_diff_check (support)");
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < point.size(); ++i)
        if (support.empty() || support[i] != 0.0)
            candidates.push_back(i);
    if (candidates.empty())
        throw DomainError("finite_diff_check: empty support");

    const RealGrid analytic = gradient(point);
    require_same_shape(analytic, point, "finite_diff_check (gradient)");
    double scale = 0.0;
    for (double v : analytic)
        scale = std::max(scale, std::abs(v));
    const double floor = std::max(1e-6 * scale, std::numeric_limits<double>::min());

    Rng rng = make_rng(seed, {0x6664ull});
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    GradCheckResult result;
    RealGrid probe = point;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t idx = candidates[pick(rng)];
        const double x0 = probe[idx];
        probe[idx] = x0 + step;
        const double up = loss(probe);
        probe[idx] = x0 - step;
        const double down = loss(probe);
        probe[idx] = x0;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[idx];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        if (s == 0 || rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = idx;
            result.worst_analytic = a;
            result.worst_numeric = numeric;
        }
        ++result.samples;
    }
    return result;
}

void dump_tape(const PsfTape &tape, const std::filesystem::path &dir, const std::string &prefix)
{
    std::filesystem::create_directories(dir);
    const double wl = tape.pupil.wavelength_m;
    const auto &q = tape.pupil.values;
    RealGrid re(q.rows(), q.cols()), im(q.rows(), q.cols());
    for (std::size_t i = 0; i < q.size(); ++i) {
        re[i] = q[i].real();
        im[i] = q[i].imag();
    }
    save_raster(dir / (prefix + "_pupil.raw"), Raster::from_bands({re, im}, tape.geometry.pupil_pitch_m, wl));
    RealGrid power(tape.spectrum.rows(), tape.spectrum.cols());
    for (std::size_t i = 0; i < power.size(); ++i)
        power[i] = std::norm(tape.spectrum[i]);
    save_raster(dir / (prefix + "_spectrum_power.raw"),
                Raster::from_grid(fftshift(power), tape.geometry.native_psf_pitch(wl), wl));
    save_raster(dir / (prefix + "_psf.raw"),
                Raster::from_grid(tape.normalized,
                                  tape.resampler ? tape.geometry.sensor_pixel_pitch_m
                                                 : tape.geometry.native_psf_pitch(wl),
                                  wl));
}

} // namespace edof
