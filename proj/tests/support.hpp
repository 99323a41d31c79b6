#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <unistd.h>
#include <string>

#include "edof/grid.hpp"
#include "edof/optics.hpp"

namespace edof::test
{

inline RealGrid random_grid(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    RealGrid g(rows, cols);
    for (auto &v : g)
        v = u(rng);
    return g;
}

// Geometry with the given pupil side; the aperture exactly fills the grid.
inline CameraGeometry geometry_with_side(std::size_t side)
{
    CameraGeometry g;
    g.aperture_radius_m = 1.3e-3;
    g.pupil_pitch_m = 2.0 * g.aperture_radius_m / static_cast<double>(side);
    g.grid_side = side;
    g.psf_size = 31;
    return g;
}

inline double max_abs_diff(const RealGrid &a, const RealGrid &b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double sum(const RealGrid &g)
{
    double s = 0.0;
    for (double v : g)
        s += v;
    return s;
}

// Direct O(n^4) forward DFT, unnormalized.
inline ComplexGrid naive_dft(const ComplexGrid &x)
{
    const std::size_t m = x.rows(), n = x.cols();
    ComplexGrid out(m, n);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            std::complex<double> acc = 0.0;
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < n; ++b) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(k * a % m) / static_cast<double>(m) +
                                        static_cast<double>(l * b % n) / static_cast<double>(n));
                    acc += x(a, b) * std::polar(1.0, ang);
                }
            out(k, l) = acc;
        }
    return out;
}

class TempDir
{
public:
    explicit TempDir(const std::string &name)
        : path_(std::filesystem::temp_directory_path() / ("edof_test_" + name + "_" + std::to_string(::getpid())))
    {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path &path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace edof::test
