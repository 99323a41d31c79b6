#pragma once

// Double-precision forward model of the deblurring network written with plain
// loops, independent of the im2col/GEMM layers. Used as a finite-difference
// oracle for the single-precision backward pass.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "edof/net/deblur_net.hpp"

namespace edof::test
{

class ReferenceNet
{
public:
    using Vec = std::vector<double>;

    explicit ReferenceNet(net::DeblurNet &net) : cfg_(net.config())
    {
        for (auto *p : net.parameters())
            params.emplace_back(p->value.begin(), p->value.end());
    }

    // params[] in DeblurNet::parameters() order.
    std::vector<Vec> params;

    // x: n x c x h x w. Training-mode batch statistics.
    Vec forward(const Vec &x, std::size_t n, std::size_t h, std::size_t w) const
    {
        const std::size_t c = cfg_.channels, width = cfg_.width;
        Vec r = x;
        std::size_t in = c, k = 0;
        for (std::size_t d : cfg_.dilations) {
            Vec z = conv(r, n, in, width, h, w, d, params[k], nullptr);
            batch_norm(z, n, width, h * w, params[k + 1], params[k + 2]);
            for (auto &v : z)
                if (v < 0.0)
                    v *= static_cast<double>(cfg_.negative_slope);
            r = std::move(z);
            in = width;
            k += 3;
        }
        r = conv(r, n, in, c, h, w, 1, params[k], &params[k + 1]);
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] += x[i];
        r = conv_transpose(r, n, c, c, h, w, params[k + 2], params[k + 3]);
        r = conv_transpose(r, n, c, c, h, w, params[k + 4], params[k + 5]);
        for (auto &v : r)
            v = std::clamp(v, 0.0, 1.0);
        return r;
    }

private:
    static Vec conv(const Vec &x, std::size_t n, std::size_t in, std::size_t out, std::size_t h, std::size_t w,
                    std::size_t d, const Vec &weight, const Vec *bias)
    {
        Vec y(n * out * h * w, 0.0);
        const auto H = static_cast<long>(h), W = static_cast<long>(w), D = static_cast<long>(d);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t o = 0; o < out; ++o)
                for (long i = 0; i < H; ++i)
                    for (long j = 0; j < W; ++j) {
                        double acc = bias ? (*bias)[o] : 0.0;
                        for (std::size_t ci = 0; ci < in; ++ci)
                            for (long u = 0; u < 3; ++u)
                                for (long v = 0; v < 3; ++v) {
                                    const long yi = i + (u - 1) * D, xj = j + (v - 1) * D;
                                    if (yi < 0 || yi >= H || xj < 0 || xj >= W)
                                        continue;
                                    acc += weight[((o * in + ci) * 3 + static_cast<std::size_t>(u)) * 3 +
                                                  static_cast<std::size_t>(v)] *
                                           x[((b * in + ci) * h + static_cast<std::size_t>(yi)) * w +
                                             static_cast<std::size_t>(xj)];
                                }
                        y[((b * out + o) * h + static_cast<std::size_t>(i)) * w + static_cast<std::size_t>(j)] = acc;
                    }
        return y;
    }

    static Vec conv_transpose(const Vec &x, std::size_t n, std::size_t in, std::size_t out, std::size_t h,
                              std::size_t w, const Vec &weight, const Vec &bias)
    {
        Vec y(n * out * h * w, 0.0);
        const auto H = static_cast<long>(h), W = static_cast<long>(w);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ci = 0; ci < in; ++ci)
                for (long i = 0; i < H; ++i)
                    for (long j = 0; j < W; ++j) {
                        const double xv =
                            x[((b * in + ci) * h + static_cast<std::size_t>(i)) * w + static_cast<std::size_t>(j)];
                        for (std::size_t o = 0; o < out; ++o)
                            for (long u = 0; u < 3; ++u)
                                for (long v = 0; v < 3; ++v) {
                                    const long yi = i + u - 1, xj = j + v - 1;
                                    if (yi < 0 || yi >= H || xj < 0 || xj >= W)
                                        continue;
                                    y[((b * out + o) * h + static_cast<std::size_t>(yi)) * w +
                                      static_cast<std::size_t>(xj)] +=
                                        weight[((ci * out + o) * 3 + static_cast<std::size_t>(u)) * 3 +
                                               static_cast<std::size_t>(v)] *
                                        xv;
                                }
                    }
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] += bias[(i / (h * w)) % out];
        return y;
    }

    void batch_norm(Vec &z, std::size_t n, std::size_t c, std::size_t hw, const Vec &scale, const Vec &shift) const
    {
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0.0, ss = 0.0;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < hw; ++i)
                    s += z[(b * c + ch) * hw + i];
            const double mean = s / static_cast<double>(n * hw);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = z[(b * c + ch) * hw + i] - mean;
                    ss += d * d;
                }
            const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n * hw) + 1e-5);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < hw; ++i) {
                    double &v = z[(b * c + ch) * hw + i];
                    v = scale[ch] * (v - mean) * inv + shift[ch];
                }
        }
    }

    net::NetConfig cfg_;
};

} // namespace edof::test
