#include "edof/net/layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>

#include "edof/random.hpp"

namespace edof::net
{

bool Tensor4::finite() const
{
    return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

Parameter::Parameter(std::string name_, std::vector<std::size_t> shape_) : name(std::move(name_)), shape(std::move(shape_))
{
    std::size_t n = 1;
    for (auto s : shape)
        n *= s;
    value.assign(n, 0.0f);
    grad.assign(n, 0.0f);
    m.assign(n, 0.0f);
    v.assign(n, 0.0f);
}

void init_fan_in(Parameter &p, std::size_t fan_in, std::uint64_t seed)
{
    auto rng = make_rng(seed, {0x696e6974});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto &x : p.value)
        x = static_cast<float>(u(rng));
}

namespace detail
{

void im2col(const float *x, std::size_t c, std::size_t h, std::size_t w, std::size_t d, float *col)
{
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    const auto D = static_cast<std::ptrdiff_t>(d);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::ptrdiff_t u = 0; u < 3; ++u)
            for (std::ptrdiff_t v = 0; v < 3; ++v) {
                float *row = col + ((ch * 3 + static_cast<std::size_t>(u)) * 3 + static_cast<std::size_t>(v)) * h * w;
                const float *src = x + ch * h * w;
                const std::ptrdiff_t dy = (u - 1) * D, dx = (v - 1) * D;
                const std::ptrdiff_t x0 = std::clamp<std::ptrdiff_t>(-dx, 0, W), x1 = std::clamp<std::ptrdiff_t>(W - dx, 0, W);
                for (std::ptrdiff_t i = 0; i < H; ++i) {
                    float *out = row + i * W;
                    const std::ptrdiff_t yi = i + dy;
                    if (yi < 0 || yi >= H) {
                        std::fill(out, out + W, 0.0f);
                        continue;
                    }
                    std::fill(out, out + x0, 0.0f);
                    std::copy(src + yi * W + x0 + dx, src + yi * W + x1 + dx, out + x0);
                    std::fill(out + x1, out + W, 0.0f);
                }
            }
}

void col2im(const float *col, std::size_t c, std::size_t h, std::size_t w, std::size_t d, float *x)
{
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    const auto D = static_cast<std::ptrdiff_t>(d);
    std::fill(x, x + c * h * w, 0.0f);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::ptrdiff_t u = 0; u < 3; ++u)
            for (std::ptrdiff_t v = 0; v < 3; ++v) {
                const float *row =
                    col + ((ch * 3 + static_cast<std::size_t>(u)) * 3 + static_cast<std::size_t>(v)) * h * w;
                float *dst = x + ch * h * w;
                const std::ptrdiff_t dy = (u - 1) * D, dx = (v - 1) * D;
                const std::ptrdiff_t x0 = std::clamp<std::ptrdiff_t>(-dx, 0, W), x1 = std::clamp<std::ptrdiff_t>(W - dx, 0, W);
                for (std::ptrdiff_t i = 0; i < H; ++i) {
                    const std::ptrdiff_t yi = i + dy;
                    if (yi < 0 || yi >= H)
                        continue;
                    for (std::ptrdiff_t j = x0; j < x1; ++j)
                        dst[yi * W + j + dx] += row[i * W + j];
                }
            }
}

} // namespace detail

namespace
{

void require_channels(const Tensor4 &x, std::size_t c, const char *what)
{
    if (x.c != c)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(c) + " channels, got " +
                         std::to_string(x.c));
}

template <typename T>
const T &cached(const std::optional<T> &c, const char *what)
{
    if (!c)
        throw StateError(std::string(what) + ": backward called without a training-mode forward");
    return *c;
}

// C[m x n] (+)= op(A) op(B), row-major. BLAS runs single-threaded; the
// layers parallelize over batch items so that results do not depend on the
// thread count.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const float *a, const float *b, float beta,
          float *c)
{
    static std::once_flag serial;
    std::call_once(serial, [] { openblas_set_num_threads(1); });
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0f, a, static_cast<int>(ta ? m : k), b,
                static_cast<int>(tb ? k : n), beta, c, static_cast<int>(n));
}

// Adds per-item gradients in item order.
void reduce_items(const std::vector<std::vector<float>> &partial, std::vector<float> &grad)
{
    for (const auto &p : partial)
        for (std::size_t i = 0; i < grad.size(); ++i)
            grad[i] += p[i];
}

void add_bias_grad(const Tensor4 &dy, std::vector<float> &grad)
{
    const std::size_t hw = dy.plane();
    for (std::size_t b = 0; b < dy.n; ++b)
        for (std::size_t o = 0; o < dy.c; ++o) {
            const float *g = dy.channel(b, o);
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i)
                s += g[i];
            grad[o] += static_cast<float>(s);
        }
}

} // namespace

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t d, bool with_bias, std::string name)
    : weight(name + ".weight", {out, in, 3, 3}), in_channels(in), out_channels(out), dilation(d)
{
    if (with_bias)
        bias.emplace(name + ".bias", std::vector<std::size_t>{out});
}

Tensor4 Conv2d::forward(const Tensor4 &x, bool training)
{
    require_channels(x, in_channels, "Conv2d");
    const std::size_t hw = x.plane(), k = in_channels * 9;
    Tensor4 y(x.n, out_channels, x.h, x.w);
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < x.n; ++b) {
        std::vector<float> col(k * hw);
        detail::im2col(x.values.data() + b * x.item(), in_channels, x.h, x.w, dilation, col.data());
        float *out = y.values.data() + b * y.item();
        gemm(false, false, out_channels, hw, k, weight.value.data(), col.data(), 0.0f, out);
        if (bias)
            for (std::size_t o = 0; o < out_channels; ++o)
                for (std::size_t i = 0; i < hw; ++i)
                    out[o * hw + i] += bias->value[o];
    }
    if (training)
        input_ = x;
    else
        input_.reset();
    return y;
}

Tensor4 Conv2d::backward(const Tensor4 &dy)
{
    const Tensor4 &x = cached(input_, "Conv2d");
    if (dy.n != x.n || dy.c != out_channels || dy.h != x.h || dy.w != x.w)
        throw ShapeError("Conv2d: upstream gradient shape " + dy.shape_string());
    const std::size_t hw = x.plane(), k = in_channels * 9;
    Tensor4 dx(x.n, in_channels, x.h, x.w);
    std::vector<std::vector<float>> partial(x.n, std::vector<float>(weight.size()));
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < x.n; ++b) {
        std::vector<float> col(k * hw);
        const float *g = dy.values.data() + b * dy.item();
        detail::im2col(x.values.data() + b * x.item(), in_channels, x.h, x.w, dilation, col.data());
        gemm(false, true, out_channels, k, hw, g, col.data(), 0.0f, partial[b].data());
        gemm(true, false, k, hw, out_channels, weight.value.data(), g, 0.0f, col.data());
        detail::col2im(col.data(), in_channels, x.h, x.w, dilation, dx.values.data() + b * dx.item());
    }
    reduce_items(partial, weight.grad);
    if (bias)
        add_bias_grad(dy, bias->grad);
    return dx;
}

ConvTranspose2d::ConvTranspose2d(std::size_t in, std::size_t out, std::string name)
    : weight(name + ".weight", {in, out, 3, 3}), bias(name + ".bias", {out}), in_channels(in), out_channels(out)
{
}

void ConvTranspose2d::set_identity()
{
    std::fill(weight.value.begin(), weight.value.end(), 0.0f);
    for (std::size_t c = 0; c < std::min(in_channels, out_channels); ++c)
        weight.value[(c * out_channels + c) * 9 + 4] = 1.0f;
    std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

Tensor4 ConvTranspose2d::forward(const Tensor4 &x, bool training)
{
    require_channels(x, in_channels, "ConvTranspose2d");
    const std::size_t hw = x.plane(), k = out_channels * 9;
    Tensor4 y(x.n, out_channels, x.h, x.w);
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < x.n; ++b) {
        std::vector<float> col(k * hw);
        // W viewed as [in x out*9]; columns = W^T x, then scatter.
        gemm(true, false, k, hw, in_channels, weight.value.data(), x.values.data() + b * x.item(), 0.0f, col.data());
        float *out = y.values.data() + b * y.item();
        detail::col2im(col.data(), out_channels, x.h, x.w, 1, out);
        for (std::size_t o = 0; o < out_channels; ++o)
            for (std::size_t i = 0; i < hw; ++i)
                out[o * hw + i] += bias.value[o];
    }
    if (training)
        input_ = x;
    else
        input_.reset();
    return y;
}

Tensor4 ConvTranspose2d::backward(const Tensor4 &dy)
{
    const Tensor4 &x = cached(input_, "ConvTranspose2d");
    if (dy.n != x.n || dy.c != out_channels || dy.h != x.h || dy.w != x.w)
        throw ShapeError("ConvTranspose2d: upstream gradient shape " + dy.shape_string());
    const std::size_t hw = x.plane(), k = out_channels * 9;
    Tensor4 dx(x.n, in_channels, x.h, x.w);
    std::vector<std::vector<float>> partial(x.n, std::vector<float>(weight.size()));
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < x.n; ++b) {
        std::vector<float> col(k * hw);
        const float *g = dy.values.data() + b * dy.item();
        detail::im2col(g, out_channels, x.h, x.w, 1, col.data());
        gemm(false, false, in_channels, hw, k, weight.value.data(), col.data(), 0.0f, dx.values.data() + b * dx.item());
        gemm(false, true, in_channels, k, hw, x.values.data() + b * x.item(), col.data(), 0.0f, partial[b].data());
    }
    reduce_items(partial, weight.grad);
    add_bias_grad(dy, bias.grad);
    return dx;
}

BatchNorm2d::BatchNorm2d(std::size_t channels, std::string name, float momentum_, float eps_)
    : scale(name + ".scale", {channels}), shift(name + ".shift", {channels}), running_mean(channels, 0.0f),
      running_var(channels, 1.0f), momentum(momentum_), eps(eps_)
{
    std::fill(scale.value.begin(), scale.value.end(), 1.0f);
}

Tensor4 BatchNorm2d::forward(const Tensor4 &x, bool training)
{
    require_channels(x, scale.size(), "BatchNorm2d");
    const std::size_t hw = x.plane(), count = x.n * hw;
    Tensor4 y(x.n, x.c, x.h, x.w);
    if (!training) {
        xhat_.reset();
        for (std::size_t c = 0; c < x.c; ++c) {
            const float a = scale.value[c] / std::sqrt(running_var[c] + eps);
            const float b = shift.value[c] - a * running_mean[c];
            for (std::size_t n = 0; n < x.n; ++n) {
                const std::size_t off = (n * x.c + c) * hw;
                for (std::size_t i = 0; i < hw; ++i)
                    y.values[off + i] = a * x.values[off + i] + b;
            }
        }
        return y;
    }
    if (count < 2)
        throw ShapeError("BatchNorm2d: training needs more than one value per channel");
    Tensor4 xhat(x.n, x.c, x.h, x.w);
    inv_std_.assign(x.c, 0.0f);
    for (std::size_t c = 0; c < x.c; ++c) {
        double s = 0.0;
        for (std::size_t n = 0; n < x.n; ++n)
            for (std::size_t i = 0; i < hw; ++i)
                s += x.values[(n * x.c + c) * hw + i];
        const double mean = s / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t n = 0; n < x.n; ++n)
            for (std::size_t i = 0; i < hw; ++i) {
                const double d = x.values[(n * x.c + c) * hw + i] - mean;
                ss += d * d;
            }
        const double var = ss / static_cast<double>(count);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_[c] = static_cast<float>(inv);
        for (std::size_t n = 0; n < x.n; ++n) {
            const std::size_t off = (n * x.c + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                const float xh = static_cast<float>((x.values[off + i] - mean) * inv);
                xhat.values[off + i] = xh;
                y.values[off + i] = scale.value[c] * xh + shift.value[c];
            }
        }
        running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] + momentum * mean);
        const double unbiased = ss / static_cast<double>(count - 1);
        running_var[c] = static_cast<float>((1.0 - momentum) * running_var[c] + momentum * unbiased);
    }
    xhat_ = std::move(xhat);
    return y;
}

Tensor4 BatchNorm2d::backward(const Tensor4 &dy)
{
    const Tensor4 &xhat = cached(xhat_, "BatchNorm2d");
    require_same_shape(xhat, dy, "BatchNorm2d backward");
    const std::size_t hw = dy.plane();
    const double count = static_cast<double>(dy.n * hw);
    Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
    for (std::size_t c = 0; c < dy.c; ++c) {
        double sg = 0.0, sgx = 0.0;
        for (std::size_t n = 0; n < dy.n; ++n) {
            const std::size_t off = (n * dy.c + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                sg += dy.values[off + i];
                sgx += static_cast<double>(dy.values[off + i]) * xhat.values[off + i];
            }
        }
        scale.grad[c] += static_cast<float>(sgx);
        shift.grad[c] += static_cast<float>(sg);
        const double k = static_cast<double>(scale.value[c]) * inv_std_[c] / count;
        for (std::size_t n = 0; n < dy.n; ++n) {
            const std::size_t off = (n * dy.c + c) * hw;
            for (std::size_t i = 0; i < hw; ++i)
                dx.values[off + i] =
                    static_cast<float>(k * (count * dy.values[off + i] - sg - xhat.values[off + i] * sgx));
        }
    }
    return dx;
}

Tensor4 LeakyRelu::forward(const Tensor4 &x, bool training)
{
    Tensor4 y = x;
    for (auto &v : y.values)
        if (v < 0.0f)
            v *= slope;
    if (training)
        input_ = x;
    else
        input_.reset();
    return y;
}

Tensor4 LeakyRelu::backward(const Tensor4 &dy)
{
    const Tensor4 &x = cached(input_, "LeakyRelu");
    require_same_shape(x, dy, "LeakyRelu backward");
    Tensor4 dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (x.values[i] < 0.0f)
            dx.values[i] *= slope;
    return dx;
}

void LeakyRelu::append_pattern(std::vector<std::uint8_t> &out) const
{
    for (float v : cached(input_, "LeakyRelu").values)
        out.push_back(v < 0.0f ? 1 : 0);
}

Tensor4 Clamp::forward(const Tensor4 &x, bool training)
{
    Tensor4 y = x;
    for (auto &v : y.values)
        v = std::clamp(v, 0.0f, 1.0f);
    if (training)
        input_ = x;
    else
        input_.reset();
    return y;
}

Tensor4 Clamp::backward(const Tensor4 &dy)
{
    const Tensor4 &x = cached(input_, "Clamp");
    require_same_shape(x, dy, "Clamp backward");
    Tensor4 dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (x.values[i] < 0.0f || x.values[i] > 1.0f)
            dx.values[i] = 0.0f;
    return dx;
}

void Clamp::append_pattern(std::vector<std::uint8_t> &out) const
{
    for (float v : cached(input_, "Clamp").values)
        out.push_back(v < 0.0f ? 0 : v > 1.0f ? 2 : 1);
}

} // namespace edof::net
