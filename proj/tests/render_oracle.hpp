#pragma once

// Direct-definition convolution used as the rendering oracle.

#include <cmath>
#include <cstddef>

#include "edof/grid.hpp"
#include "support.hpp"

namespace edof::test
{

// Half-sample symmetric reflection by repeated folding.
inline std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n)
{
    while (i < 0 || i >= n)
        i = i < 0 ? -i - 1 : 2 * n - 1 - i;
    return i;
}

inline RealGrid nested_loop_convolution(const RealGrid &img, const RealGrid &k)
{
    const auto h = static_cast<std::ptrdiff_t>(img.rows()), w = static_cast<std::ptrdiff_t>(img.cols());
    const auto cr = static_cast<std::ptrdiff_t>(k.rows() / 2), cc = static_cast<std::ptrdiff_t>(k.cols() / 2);
    RealGrid out(img.rows(), img.cols());
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(k.rows()); ++u)
                for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(k.cols()); ++v)
                    acc += k(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) *
                           img(static_cast<std::size_t>(reflect(y - u + cr, h)),
                               static_cast<std::size_t>(reflect(x - v + cc, w)));
            out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
        }
    return out;
}

inline RealGrid gaussian_kernel(std::size_t side, double sigma)
{
    RealGrid k(side, side);
    const double c = static_cast<double>(side / 2);
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
            const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
            k(i, j) = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
        }
    const double s = sum(k);
    for (auto &v : k)
        v /= s;
    return k;
}

} // namespace edof::test
