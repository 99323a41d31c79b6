#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "edof/error.hpp"

namespace edof
{

// Dense row-major 2D array.
template <typename T>
class Grid2D
{
public:
    using value_type = T;

    Grid2D() = default;
    Grid2D(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T &operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    T &operator[](std::size_t i) { return data_[i]; }
    const T &operator[](std::size_t i) const { return data_[i]; }

    T *data() { return data_.data(); }
    const T *data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    void fill(const T &v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    bool same_shape(const Grid2D<U> &other) const
    {
        return rows_ == other.rows() && cols_ == other.cols();
    }

    bool operator==(const Grid2D &) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using RealGrid = Grid2D<double>;
using ComplexGrid = Grid2D<std::complex<double>>;

template <typename A, typename B>
void require_same_shape(const Grid2D<A> &a, const Grid2D<B> &b, const char *what)
{
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": grid shapes differ (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

// Circular shift moving index 0 to the centre (index n/2) along both axes.
template <typename T>
Grid2D<T> fftshift(const Grid2D<T> &in)
{
    Grid2D<T> out(in.rows(), in.cols());
    const std::size_t hr = in.rows() / 2, hc = in.cols() / 2;
    for (std::size_t r = 0; r < in.rows(); ++r) {
        const std::size_t rr = (r + hr) % in.rows();
        for (std::size_t c = 0; c < in.cols(); ++c)
            out(rr, (c + hc) % in.cols()) = in(r, c);
    }
    return out;
}

// Inverse of fftshift.
template <typename T>
Grid2D<T> ifftshift(const Grid2D<T> &in)
{
    Grid2D<T> out(in.rows(), in.cols());
    const std::size_t hr = in.rows() / 2, hc = in.cols() / 2;
    for (std::size_t r = 0; r < in.rows(); ++r) {
        const std::size_t rr = (r + hr) % in.rows();
        for (std::size_t c = 0; c < in.cols(); ++c)
            out(r, c) = in(rr, (c + hc) % in.cols());
    }
    return out;
}

} // namespace edof
