#include "plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace edof::plot
{
namespace
{

using Rgb = std::array<double, 3>;

constexpr std::array<Rgb, 6> kPalette{{{0.12, 0.47, 0.71},
                                        {1.00, 0.50, 0.05},
                                        {0.17, 0.63, 0.17},
                                        {0.84, 0.15, 0.16},
                                        {0.58, 0.40, 0.74},
                                        {0.55, 0.34, 0.29}}};

void put(Image &im, long x, long y, const Rgb &c)
{
    if (x < 0 || y < 0 || x >= static_cast<long>(im.width()) || y >= static_cast<long>(im.height()))
        return;
    for (std::size_t ch = 0; ch < 3; ++ch)
        im.channels[ch](static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = c[ch];
}

void line(Image &im, long x0, long y0, long x1, long y1, const Rgb &c, int thick = 1)
{
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
        for (int a = 0; a < thick; ++a)
            for (int b = 0; b < thick; ++b)
                put(im, x0 + a - thick / 2, y0 + b - thick / 2, c);
        if (x0 == x1 && y0 == y1)
            break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

} // namespace

Image line_plot(const std::vector<Series> &series, std::size_t width, std::size_t height)
{
    Image im = Image::zeros(3, height, width);
    for (auto &ch : im.channels)
        std::fill(ch.begin(), ch.end(), 1.0);

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto &s : series)
        for (auto [x, y] : s)
            if (std::isfinite(x) && std::isfinite(y)) {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
    if (!std::isfinite(xmin))
        return im;
    if (xmax == xmin)
        xmax = xmin + 1.0;
    if (ymax == ymin)
        ymax = ymin + 1.0;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    const long left = 40, right = static_cast<long>(width) - 20, top = 20, bottom = static_cast<long>(height) - 30;
    const auto px = [&](double x) { return left + std::lround((x - xmin) / (xmax - xmin) * static_cast<double>(right - left)); };
    const auto py = [&](double y) { return bottom - std::lround((y - ymin) / (ymax - ymin) * static_cast<double>(bottom - top)); };

    const Rgb grid{0.9, 0.9, 0.9}, axis{0.0, 0.0, 0.0};
    for (int i = 1; i < 10; ++i) {
        const long gx = left + (right - left) * i / 10, gy = top + (bottom - top) * i / 10;
        line(im, gx, top, gx, bottom, grid);
        line(im, left, gy, right, gy, grid);
    }
    line(im, left, top, right, top, axis);
    line(im, left, bottom, right, bottom, axis);
    line(im, left, top, left, bottom, axis);
    line(im, right, top, right, bottom, axis);

    for (std::size_t k = 0; k < series.size(); ++k) {
        const Rgb &c = kPalette[k % kPalette.size()];
        bool have = false;
        long lx = 0, ly = 0;
        for (auto [x, y] : series[k]) {
            if (!std::isfinite(x) || !std::isfinite(y)) {
                have = false;
                continue;
            }
            const long cx = px(x), cy = py(y);
            if (have)
                line(im, lx, ly, cx, cy, c, 2);
            else
                line(im, cx, cy, cx, cy, c, 3);
            lx = cx;
            ly = cy;
            have = true;
        }
    }
    return im;
}

Image heatmap(const RealGrid &grid)
{
    Image im = Image::zeros(3, grid.rows(), grid.cols());
    if (grid.empty())
        return im;
    const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
    const double span = *hi > *lo ? *hi - *lo : 1.0;
    const Rgb a{0.07, 0.05, 0.35}, b{0.13, 0.57, 0.55}, c{0.99, 0.91, 0.15};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = (grid[i] - *lo) / span;
        const Rgb &p = t < 0.5 ? a : b, &q = t < 0.5 ? b : c;
        const double u = t < 0.5 ? 2.0 * t : 2.0 * t - 1.0;
        for (std::size_t ch = 0; ch < 3; ++ch)
            im.channels[ch][i] = p[ch] + (q[ch] - p[ch]) * u;
    }
    return im;
}

} // namespace edof::plot
