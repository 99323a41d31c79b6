#include "edof/pipeline/export.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "edof/error.hpp"

namespace edof::pipeline
{

void ExportConfig::validate() const
{
    if (!(fabrication_pitch_m > 0.0) || !(max_depth_m > 0.0))
        throw DomainError("export: fabrication pitch and maximum depth must be positive");
    if (levels == 1)
        throw DomainError("export: at least two gray levels are needed");
}

namespace
{

double keys(double x)
{
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0)
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0)
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

struct Taps
{
    std::ptrdiff_t first;
    double w[4];
};

std::vector<Taps> taps(std::size_t out, double ratio)
{
    std::vector<Taps> t(out);
    for (std::size_t j = 0; j < out; ++j) {
        const double x = (static_cast<double>(j) + 0.5) / ratio - 0.5;
        const double f = std::floor(x), d = x - f;
        t[j].first = static_cast<std::ptrdiff_t>(f) - 1;
        t[j].w[0] = keys(d + 1.0);
        t[j].w[1] = keys(d);
        t[j].w[2] = keys(1.0 - d);
        t[j].w[3] = keys(2.0 - d);
    }
    return t;
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n)
{
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

} // namespace

RealGrid bicubic_resample(const RealGrid &in, double in_pitch_m, std::size_t out_rows, std::size_t out_cols,
                          double out_pitch_m)
{
    if (in.empty())
        throw ShapeError("bicubic_resample: empty input");
    const double ratio = in_pitch_m / out_pitch_m;
    const auto tr = taps(out_rows, ratio), tc = taps(out_cols, ratio);
    RealGrid tmp(in.rows(), out_cols);
    for (std::size_t r = 0; r < in.rows(); ++r)
        for (std::size_t j = 0; j < out_cols; ++j) {
            double v = 0.0;
            for (int k = 0; k < 4; ++k)
                v += tc[j].w[k] * in(r, clamp_index(tc[j].first + k, in.cols()));
            tmp(r, j) = v;
        }
    RealGrid out(out_rows, out_cols);
    for (std::size_t i = 0; i < out_rows; ++i)
        for (std::size_t j = 0; j < out_cols; ++j) {
            double v = 0.0;
            for (int k = 0; k < 4; ++k)
                v += tr[i].w[k] * tmp(clamp_index(tr[i].first + k, in.rows()), j);
            out(i, j) = v;
        }
    return out;
}

DoeExport export_doe(const PhaseMap &phase, const SpectralModel &spectral, double optimization_pitch_m,
                     const ExportConfig &config)
{
    config.validate();
    spectral.validate();
    if (config.fabrication_pitch_m > optimization_pitch_m * (1 + 1e-12))
        throw DomainError("export: fabrication pitch must not exceed the optimization pitch");
    const double n0 = spectral.doe_index.at(spectral.nominal);
    const double lambda0 = spectral.nominal_wavelength();

    DoeExport out;
    out.upsampling = optimization_pitch_m / config.fabrication_pitch_m;
    const HeightMap thick = phase_to_thickness(PhaseMap{phase.values_rad, lambda0}, n0, optimization_pitch_m);
    const auto side = [&](std::size_t n) {
        return static_cast<std::size_t>(std::llround(static_cast<double>(n) * out.upsampling));
    };
    // Interpolating the continuous thickness first keeps the wrap edges sharp.
    RealGrid h = bicubic_resample(thick.values_m, optimization_pitch_m, side(thick.values_m.rows()),
                                  side(thick.values_m.cols()), config.fabrication_pitch_m);

    const double two_pi_thickness = lambda0 / (n0 - 1.0);
    const double periods = std::floor(config.max_depth_m / two_pi_thickness * (1 + 1e-12));
    out.wrap_period_m = periods >= 1.0 ? periods * two_pi_thickness : config.max_depth_m;
    for (auto &v : h) {
        v -= out.wrap_period_m * std::floor(v / out.wrap_period_m);
        v = std::min(v, config.max_depth_m);
    }
    if (config.levels >= 2) {
        out.level_step_m = config.max_depth_m / static_cast<double>(config.levels - 1);
        for (auto &v : h) {
            const auto k = std::min<long long>(std::llround(v / out.level_step_m),
                                               static_cast<long long>(config.levels - 1));
            out.max_level = std::max<std::size_t>(out.max_level, static_cast<std::size_t>(k));
            v = static_cast<double>(k) * out.level_step_m;
        }
    }
    out.height = HeightMap{std::move(h), config.fabrication_pitch_m};
    return out;
}

double export_round_trip_error(const DoeExport &doe, const PhaseMap &phase, const SpectralModel &spectral,
                               double optimization_pitch_m)
{
    const double f = optimization_pitch_m / doe.height.pitch_m;
    const auto fi = static_cast<std::size_t>(std::llround(f));
    if (std::abs(f - static_cast<double>(fi)) > 1e-9 || fi % 2 == 0)
        throw DomainError("round-trip check needs an odd integer upsampling factor");
    const double n0 = spectral.doe_index.at(spectral.nominal);
    const double k = 2.0 * std::numbers::pi / spectral.nominal_wavelength() * (n0 - 1.0);
    double worst = 0.0;
    for (std::size_t r = 0; r < phase.values_rad.rows(); ++r)
        for (std::size_t c = 0; c < phase.values_rad.cols(); ++c) {
            const double back = k * doe.height.values_m(r * fi + fi / 2, c * fi + fi / 2);
            double d = std::remainder(back - phase.values_rad(r, c), 2.0 * std::numbers::pi);
            worst = std::max(worst, std::abs(d));
        }
    return worst;
}

double level_phase_step(const DoeExport &doe, const SpectralModel &spectral)
{
    const double n0 = spectral.doe_index.at(spectral.nominal);
    return 2.0 * std::numbers::pi / spectral.nominal_wavelength() * (n0 - 1.0) * doe.level_step_m;
}

} // namespace edof::pipeline
