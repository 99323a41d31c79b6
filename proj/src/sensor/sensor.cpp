#include "edof/sensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "edof/error.hpp"
#include "edof/fft.hpp"
#include "edof/random.hpp"

namespace edof
{

namespace
{

RealGrid mirrored(const RealGrid &img)
{
    const std::size_t h = img.rows(), w = img.cols();
    RealGrid out(2 * h, 2 * w);
    for (std::size_t i = 0; i < 2 * h; ++i) {
        const std::size_t si = i < h ? i : 2 * h - 1 - i;
        for (std::size_t j = 0; j < 2 * w; ++j)
            out(i, j) = img(si, j < w ? j : 2 * w - 1 - j);
    }
    return out;
}

std::size_t wrap(std::ptrdiff_t i, std::size_t n)
{
    const auto m = static_cast<std::ptrdiff_t>(n);
    return static_cast<std::size_t>(((i % m) + m) % m);
}

// Centred kernel aliased onto an rows x cols periodic grid with its centre at the origin.
RealGrid fold_kernel(const RealGrid &kernel, std::size_t rows, std::size_t cols)
{
    if (kernel.rows() % 2 == 0 || kernel.cols() % 2 == 0)
        throw ShapeError("convolution kernel sides must be odd");
    const auto cr = static_cast<std::ptrdiff_t>(kernel.rows() / 2), cc = static_cast<std::ptrdiff_t>(kernel.cols() / 2);
    RealGrid out(rows, cols);
    for (std::size_t u = 0; u < kernel.rows(); ++u) {
        const std::size_t r = wrap(static_cast<std::ptrdiff_t>(u) - cr, rows);
        for (std::size_t v = 0; v < kernel.cols(); ++v)
            out(r, wrap(static_cast<std::ptrdiff_t>(v) - cc, cols)) += kernel(u, v);
    }
    return out;
}

RealGrid crop_top_left(const RealGrid &g, std::size_t rows, std::size_t cols)
{
    RealGrid out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        std::copy_n(&g(i, 0), cols, &out(i, 0));
    return out;
}

void require_psf_count(const Image &img, const std::vector<Psf> &psfs, const char *what)
{
    img.validate();
    if (psfs.size() != img.channel_count())
        throw ShapeError(std::string(what) + ": " + std::to_string(psfs.size()) + " PSFs for " +
                         std::to_string(img.channel_count()) + " channels");
}

} // namespace

std::size_t mirror_index(std::ptrdiff_t i, std::size_t n)
{
    const std::size_t m = wrap(i, 2 * n);
    return m < n ? m : 2 * n - 1 - m;
}

// ---------------------------------------------------------------------------
// Convolution

ReflectConvolver::ReflectConvolver(const RealGrid &image)
    : rows_(image.rows()), cols_(image.cols()), spectrum_(fft::rfft(mirrored(image)))
{
    if (image.empty())
        throw ShapeError("ReflectConvolver: empty image");
}

RealGrid ReflectConvolver::convolve(const RealGrid &kernel) const
{
    ComplexGrid k = fft::rfft(fold_kernel(kernel, 2 * rows_, 2 * cols_));
    for (std::size_t i = 0; i < k.size(); ++i)
        k[i] *= spectrum_[i];
    return crop_top_left(fft::irfft(k, 2 * cols_), rows_, cols_);
}

RealGrid ReflectConvolver::kernel_grad(const RealGrid &upstream, std::size_t kernel_rows,
                                       std::size_t kernel_cols) const
{
    if (upstream.rows() != rows_ || upstream.cols() != cols_)
        throw ShapeError("ReflectConvolver::kernel_grad: upstream shape differs from image");
    if (kernel_rows % 2 == 0 || kernel_cols % 2 == 0)
        throw ShapeError("convolution kernel sides must be odd");
    const std::size_t lr = 2 * rows_, lc = 2 * cols_;
    RealGrid g(lr, lc);
    for (std::size_t i = 0; i < rows_; ++i)
        std::copy_n(&upstream(i, 0), cols_, &g(i, 0));
    ComplexGrid fg = fft::rfft(g);
    for (std::size_t i = 0; i < fg.size(); ++i)
        fg[i] *= std::conj(spectrum_[i]);
    const RealGrid corr = fft::irfft(fg, lc);

    const auto cr = static_cast<std::ptrdiff_t>(kernel_rows / 2), cc = static_cast<std::ptrdiff_t>(kernel_cols / 2);
    RealGrid out(kernel_rows, kernel_cols);
    for (std::size_t u = 0; u < kernel_rows; ++u) {
        const std::size_t r = wrap(static_cast<std::ptrdiff_t>(u) - cr, lr);
        for (std::size_t v = 0; v < kernel_cols; ++v)
            out(u, v) = corr(r, wrap(static_cast<std::ptrdiff_t>(v) - cc, lc));
    }
    return out;
}

RealGrid convolve_reflect(const RealGrid &image, const RealGrid &kernel)
{
    return ReflectConvolver(image).convolve(kernel);
}

// ---------------------------------------------------------------------------
// Rendering

void add_noise_and_clamp(Image &image, double sigma, std::uint64_t seed, std::uint64_t stream)
{
    if (!(sigma >= 0.0))
        throw DomainError("noise sigma must be non-negative");
    for (std::size_t c = 0; c < image.channel_count(); ++c) {
        auto &ch = image.channels[c];
        if (sigma > 0.0) {
            Rng rng = make_rng(seed, {stream, c});
            std::normal_distribution<double> noise(0.0, sigma);
            for (auto &v : ch)
                v += noise(rng);
        }
        for (auto &v : ch)
            v = std::clamp(v, 0.0, 1.0);
    }
}

Image blur_planar(const Image &scene, const std::vector<Psf> &psfs)
{
    require_psf_count(scene, psfs, "render_planar");
    Image out;
    out.channels.reserve(scene.channel_count());
    for (std::size_t c = 0; c < scene.channel_count(); ++c)
        out.channels.push_back(convolve_reflect(scene.channels[c], psfs[c].values));
    return out;
}

SensorImage render_planar(const Image &scene, const std::vector<Psf> &psfs, double sigma_s, std::uint64_t seed)
{
    SensorImage out{blur_planar(scene, psfs), sigma_s};
    add_noise_and_clamp(out.image, sigma_s, seed);
    return out;
}

std::vector<DepthLayer> quantize_depth_map(const RealGrid &depth_map_m, double step_m)
{
    if (depth_map_m.empty())
        throw DomainError("render_layered: empty depth map");
    if (!(step_m > 0.0))
        throw DomainError("render_layered: depth step must be positive");
    double zmin = std::numeric_limits<double>::infinity();
    for (double z : depth_map_m) {
        if (std::isnan(z) || z <= 0.0)
            throw DomainError("render_layered: depth map values must be positive");
        zmin = std::min(zmin, z);
    }

    struct Acc
    {
        RealGrid mask;
        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -1.0;
        std::size_t count = 0;
    };
    // Pixels at infinity form their own layer, sorted last.
    constexpr auto kInfinite = std::numeric_limits<std::size_t>::max();
    std::map<std::size_t, Acc> layers;
    for (std::size_t i = 0; i < depth_map_m.size(); ++i) {
        const double z = depth_map_m[i];
        const std::size_t key =
            std::isinf(z) ? kInfinite : static_cast<std::size_t>(std::floor((z - zmin) / step_m));
        auto &acc = layers[key];
        if (acc.mask.empty())
            acc.mask = RealGrid(depth_map_m.rows(), depth_map_m.cols());
        acc.mask[i] = 1.0;
        const double d = std::isinf(z) ? 0.0 : 1.0 / z;
        acc.sum += d;
        acc.lo = std::min(acc.lo, d);
        acc.hi = std::max(acc.hi, d);
        ++acc.count;
    }

    std::vector<DepthLayer> out;
    for (auto &[key, acc] : layers) {
        const double d = acc.lo == acc.hi ? acc.lo : acc.sum / static_cast<double>(acc.count);
        out.push_back(DepthLayer{Depth::diopters(d), std::move(acc.mask)});
    }
    return out;
}

SensorImage render_layered(const Image &scene, const RealGrid &depth_map_m, const PsfProvider &psfs_at,
                           double sigma_s, double depth_step_m, std::uint64_t seed)
{
    scene.validate();
    if (scene.channel_count() == 0)
        throw ShapeError("render_layered: scene has no channels");
    if (!depth_map_m.empty())
        require_same_shape(depth_map_m, scene.channels.front(), "render_layered (depth map vs scene)");
    const auto layers = quantize_depth_map(depth_map_m, depth_step_m);

    SensorImage out{Image::zeros(scene.channel_count(), scene.height(), scene.width()), sigma_s};
    for (const auto &layer : layers) {
        const auto psfs = psfs_at(layer.depth);
        require_psf_count(scene, psfs, "render_layered");
        for (std::size_t c = 0; c < scene.channel_count(); ++c) {
            RealGrid masked = scene.channels[c];
            for (std::size_t i = 0; i < masked.size(); ++i)
                masked[i] *= layer.mask[i];
            const RealGrid blurred = convolve_reflect(masked, psfs[c].values);
            auto &dst = out.image.channels[c];
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += blurred[i];
        }
    }
    add_noise_and_clamp(out.image, sigma_s, seed);
    return out;
}

// ---------------------------------------------------------------------------
// Broadband

void SpectralResponse::validate() const
{
    if (weights.empty() || wavelengths_m.size() != weights.size())
        throw ShapeError("spectral response: need one wavelength per band row");
    std::array<double, 3> sums{};
    for (std::size_t b = 0; b < weights.size(); ++b) {
        if (!(wavelengths_m[b] > 0.0))
            throw DomainError("spectral response: wavelengths must be positive");
        for (std::size_t c = 0; c < 3; ++c) {
            if (!(weights[b][c] >= 0.0) || !std::isfinite(weights[b][c]))
                throw DomainError("spectral response: weights must be finite and non-negative");
            sums[c] += weights[b][c];
        }
    }
    for (double s : sums)
        if (!(s > 0.0))
            throw DomainError("spectral response: every channel needs a positive weight");
}

SpectralResponse SpectralResponse::normalized() const
{
    validate();
    SpectralResponse out = *this;
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (const auto &row : weights)
            s += row[c];
        for (auto &row : out.weights)
            row[c] /= s;
    }
    return out;
}

SpectralResponse SpectralResponse::load_csv(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    SpectralResponse out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::array<double, 4> v{};
        std::size_t field = 0, pos = 0;
        bool numeric = true;
        while (field < 4 && pos <= line.size()) {
            const std::size_t end = std::min(line.find(',', pos), line.size());
            std::size_t b = pos, e = end;
            while (b < e && std::isspace(static_cast<unsigned char>(line[b])))
                ++b;
            while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1])))
                --e;
            const auto res = std::from_chars(line.data() + b, line.data() + e, v[field]);
            if (res.ec != std::errc() || res.ptr != line.data() + e) {
                numeric = false;
                break;
            }
            ++field;
            pos = end + 1;
        }
        if (!numeric || field != 4) {
            if (out.weights.empty() && lineno == 1)
                continue; // header
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected wavelength_nm,r,g,b");
        }
        out.wavelengths_m.push_back(v[0] * 1e-9);
        out.weights.push_back({v[1], v[2], v[3]});
    }
    out.validate();
    return out;
}

SpectralResponse SpectralResponse::triangular(const std::vector<double> &wavelengths_m)
{
    constexpr std::array<double, 3> centres{611e-9, 543e-9, 482e-9};
    constexpr double half_width = 80e-9;
    SpectralResponse out;
    out.wavelengths_m = wavelengths_m;
    for (double w : wavelengths_m) {
        std::array<double, 3> row{};
        for (std::size_t c = 0; c < 3; ++c)
            row[c] = std::max(0.0, 1.0 - std::abs(w - centres[c]) / half_width);
        out.weights.push_back(row);
    }
    out.validate();
    return out;
}

std::vector<double> band_wavelengths(double first_m, double last_m, std::size_t count)
{
    if (count == 0)
        return {};
    if (count == 1)
        return {first_m};
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = first_m + (last_m - first_m) * static_cast<double>(i) / static_cast<double>(count - 1);
    return out;
}

SensorImage render_broadband(const std::vector<RealGrid> &cube, const SpectralResponse &response,
                             const std::vector<Psf> &psf_per_band, double sigma_s, std::uint64_t seed)
{
    if (cube.empty())
        throw ShapeError("render_broadband: empty cube");
    if (response.bands() != cube.size() || psf_per_band.size() != cube.size())
        throw ShapeError("render_broadband: cube has " + std::to_string(cube.size()) + " bands, response " +
                         std::to_string(response.bands()) + ", PSF list " + std::to_string(psf_per_band.size()));
    for (const auto &band : cube)
        require_same_shape(band, cube.front(), "render_broadband (bands)");
    const SpectralResponse w = response.normalized();

    SensorImage out{Image::zeros(3, cube.front().rows(), cube.front().cols()), sigma_s};
    for (std::size_t b = 0; b < cube.size(); ++b) {
        if (w.weights[b][0] == 0.0 && w.weights[b][1] == 0.0 && w.weights[b][2] == 0.0)
            continue;
        const RealGrid blurred = convolve_reflect(cube[b], psf_per_band[b].values);
        for (std::size_t c = 0; c < 3; ++c) {
            const double wt = w.weights[b][c];
            if (wt == 0.0)
                continue;
            auto &dst = out.image.channels[c];
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += wt * blurred[i];
        }
    }
    add_noise_and_clamp(out.image, sigma_s, seed);
    return out;
}

// ---------------------------------------------------------------------------
// Wiener baseline and metrics

Image wiener_deconvolve(const Image &sensor, const std::vector<Psf> &psfs, double nsr)
{
    if (!(nsr >= 0.0))
        throw DomainError("wiener_deconvolve: nsr must be non-negative");
    require_psf_count(sensor, psfs, "wiener_deconvolve");
    Image out;
    for (std::size_t c = 0; c < sensor.channel_count(); ++c) {
        const auto &ch = sensor.channels[c];
        const std::size_t lr = 2 * ch.rows(), lc = 2 * ch.cols();
        ComplexGrid y = fft::rfft(mirrored(ch));
        const ComplexGrid h = fft::rfft(fold_kernel(psfs[c].values, lr, lc));
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double denom = std::norm(h[i]) + nsr;
            y[i] = denom > 0.0 ? std::conj(h[i]) * y[i] / denom : 0.0;
        }
        RealGrid x = crop_top_left(fft::irfft(y, lc), ch.rows(), ch.cols());
        for (auto &v : x)
            v = std::clamp(v, 0.0, 1.0);
        out.channels.push_back(std::move(x));
    }
    return out;
}

double mse(const Image &reference, const Image &test)
{
    reference.validate();
    test.validate();
    if (reference.channel_count() != test.channel_count() || reference.channel_count() == 0)
        throw ShapeError("psnr: channel counts differ");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < reference.channel_count(); ++c) {
        require_same_shape(reference.channels[c], test.channels[c], "psnr");
        for (std::size_t i = 0; i < reference.channels[c].size(); ++i) {
            const double d = reference.channels[c][i] - test.channels[c][i];
            acc += d * d;
        }
        n += reference.channels[c].size();
    }
    return acc / static_cast<double>(n);
}

double psnr(const Image &reference, const Image &test)
{
    const double m = mse(reference, test);
    if (m == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

} // namespace edof
