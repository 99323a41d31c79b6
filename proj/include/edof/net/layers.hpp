#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "edof/net/tensor.hpp"

// Layers of the deblurring network. Each layer caches what its backward pass
// needs during a training-mode forward; backward without that cache raises
// StateError. Backward accumulates into Parameter::grad.
namespace edof::net
{

// 3x3 convolution (cross-correlation), zero padding equal to the dilation so the
// spatial shape is preserved. Weight layout [out][in][3][3].
class Conv2d
{
public:
    Conv2d(std::size_t in, std::size_t out, std::size_t dilation, bool bias, std::string name);

    Tensor4 forward(const Tensor4 &x, bool training);
    Tensor4 backward(const Tensor4 &dy);

    Parameter weight;
    std::optional<Parameter> bias;
    std::size_t in_channels, out_channels, dilation;

private:
    std::optional<Tensor4> input_;
};

// Stride-1 transposed 3x3 convolution y = C^T x, padding 1. Weight layout
// [in][out][3][3] as in the usual transposed-convolution convention.
class ConvTranspose2d
{
public:
    ConvTranspose2d(std::size_t in, std::size_t out, std::string name);

    Tensor4 forward(const Tensor4 &x, bool training);
    Tensor4 backward(const Tensor4 &dy);
    // Kernel with a single 1 at the centre tap of each matching channel pair.
    void set_identity();

    Parameter weight;
    Parameter bias;
    std::size_t in_channels, out_channels;

private:
    std::optional<Tensor4> input_;
};

// Per-channel batch normalization over (batch, height, width).
class BatchNorm2d
{
public:
    BatchNorm2d(std::size_t channels, std::string name, float momentum = 0.1f, float eps = 1e-5f);

    Tensor4 forward(const Tensor4 &x, bool training);
    Tensor4 backward(const Tensor4 &dy);

    Parameter scale, shift;
    std::vector<float> running_mean, running_var;
    float momentum, eps;

private:
    std::optional<Tensor4> xhat_;
    std::vector<float> inv_std_;
};

class LeakyRelu
{
public:
    explicit LeakyRelu(float negative_slope = 0.01f) : slope(negative_slope) {}

    Tensor4 forward(const Tensor4 &x, bool training);
    Tensor4 backward(const Tensor4 &dy);
    // Appends one byte per cached input: 1 where the input is negative.
    void append_pattern(std::vector<std::uint8_t> &out) const;

    float slope;

private:
    std::optional<Tensor4> input_;
};

// max(0, min(1, x)); gradient passes where 0 <= x <= 1.
class Clamp
{
public:
    Tensor4 forward(const Tensor4 &x, bool training);
    Tensor4 backward(const Tensor4 &dy);
    // Appends 0 / 1 / 2 per cached input for below / inside / above [0, 1].
    void append_pattern(std::vector<std::uint8_t> &out) const;

private:
    std::optional<Tensor4> input_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fan_in(Parameter &p, std::size_t fan_in, std::uint64_t seed);

namespace detail
{
// col[(c*3+u)*3+v][y*W+x] = x[c][y+(u-1)d][x+(v-1)d], zero outside.
void im2col(const float *x, std::size_t c, std::size_t h, std::size_t w, std::size_t d, float *col);
// Adjoint of im2col: scatter-add columns back into a zeroed image.
void col2im(const float *col, std::size_t c, std::size_t h, std::size_t w, std::size_t d, float *x);
} // namespace detail

} // namespace edof::net
