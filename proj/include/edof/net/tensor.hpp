#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "edof/error.hpp"

namespace edof::net
{

// Batch x channels x height x width, row-major, single precision.
struct Tensor4
{
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<float> values;
    std::vector<float> grad; // empty until a backward pass fills it

    Tensor4() = default;
    Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_), values(n_ * c_ * h_ * w_, fill)
    {
    }

    std::size_t size() const { return values.size(); }
    std::size_t plane() const { return h * w; }
    std::size_t item() const { return c * h * w; }

    float &at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x)
    {
        return values[((b * c + ch) * h + y) * w + x];
    }
    float at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const
    {
        return values[((b * c + ch) * h + y) * w + x];
    }

    float *channel(std::size_t b, std::size_t ch) { return values.data() + (b * c + ch) * h * w; }
    const float *channel(std::size_t b, std::size_t ch) const { return values.data() + (b * c + ch) * h * w; }

    bool same_shape(const Tensor4 &o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    std::string shape_string() const
    {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
    void zero_grad() { grad.assign(values.size(), 0.0f); }
    bool finite() const;
};

inline void require_same_shape(const Tensor4 &a, const Tensor4 &b, const char *what)
{
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": tensor shapes differ (" + a.shape_string() + " vs " +
                         b.shape_string() + ")");
}

// Trainable tensor with its gradient and Adam moments.
struct Parameter
{
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> value, grad, m, v;

    Parameter() = default;
    Parameter(std::string name_, std::vector<std::size_t> shape_);
    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

// Non-trainable state saved with the model (batch-norm running statistics).
struct Buffer
{
    std::string name;
    std::vector<float> *values = nullptr;
};

} // namespace edof::net
