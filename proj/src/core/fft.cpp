#include "edof/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace edof::fft
{
namespace
{

enum class Kind { Forward, Backward, R2C, C2R };

struct PlanCache
{
    std::mutex mutex;
    std::map<std::tuple<std::size_t, std::size_t, Kind>, fftw_plan> plans;

    ~PlanCache()
    {
        for (auto &[key, plan] : plans)
            fftw_destroy_plan(plan);
    }
};

PlanCache &cache()
{
    static PlanCache instance;
    return instance;
}

fftw_plan plan_for(std::size_t rows, std::size_t cols, Kind kind)
{
    auto &pc = cache();
    std::lock_guard lock(pc.mutex);
    const auto key = std::make_tuple(rows, cols, kind);
    if (auto it = pc.plans.find(key); it != pc.plans.end())
        return it->second;

    const int r = static_cast<int>(rows), c = static_cast<int>(cols);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    switch (kind) {
    case Kind::Forward:
    case Kind::Backward: {
        auto *buf = fftw_alloc_complex(rows * cols);
        plan = fftw_plan_dft_2d(r, c, buf, buf, kind == Kind::Forward ? FFTW_FORWARD : FFTW_BACKWARD, flags);
        fftw_free(buf);
        break;
    }
    case Kind::R2C: {
        auto *in = fftw_alloc_real(rows * cols);
        auto *out = fftw_alloc_complex(rows * (cols / 2 + 1));
        plan = fftw_plan_dft_r2c_2d(r, c, in, out, flags);
        fftw_free(in);
        fftw_free(out);
        break;
    }
    case Kind::C2R: {
        auto *in = fftw_alloc_complex(rows * (cols / 2 + 1));
        auto *out = fftw_alloc_real(rows * cols);
        plan = fftw_plan_dft_c2r_2d(r, c, in, out, flags);
        fftw_free(in);
        fftw_free(out);
        break;
    }
    }
    pc.plans.emplace(key, plan);
    return plan;
}

fftw_complex *as_fftw(std::complex<double> *p) { return reinterpret_cast<fftw_complex *>(p); }

} // namespace

void forward(ComplexGrid &grid)
{
    if (grid.empty())
        return;
    auto plan = plan_for(grid.rows(), grid.cols(), Kind::Forward);
    fftw_execute_dft(plan, as_fftw(grid.data()), as_fftw(grid.data()));
}

void inverse(ComplexGrid &grid)
{
    if (grid.empty())
        return;
    auto plan = plan_for(grid.rows(), grid.cols(), Kind::Backward);
    fftw_execute_dft(plan, as_fftw(grid.data()), as_fftw(grid.data()));
    const double scale = 1.0 / static_cast<double>(grid.size());
    for (auto &v : grid)
        v *= scale;
}

ComplexGrid rfft(const RealGrid &in)
{
    ComplexGrid out(in.rows(), in.cols() / 2 + 1);
    auto plan = plan_for(in.rows(), in.cols(), Kind::R2C);
    // r2c out-of-place leaves the input untouched.
    fftw_execute_dft_r2c(plan, const_cast<double *>(in.data()), as_fftw(out.data()));
    return out;
}

RealGrid irfft(const ComplexGrid &half_spectrum, std::size_t cols)
{
    if (half_spectrum.cols() != cols / 2 + 1)
        throw ShapeError("irfft: half spectrum width does not match requested columns");
    ComplexGrid scratch = half_spectrum; // c2r destroys its input
    RealGrid out(half_spectrum.rows(), cols);
    auto plan = plan_for(half_spectrum.rows(), cols, Kind::C2R);
    fftw_execute_dft_c2r(plan, as_fftw(scratch.data()), out.data());
    const double scale = 1.0 / static_cast<double>(out.size());
    for (auto &v : out)
        v *= scale;
    return out;
}

std::size_t good_size(std::size_t n)
{
    if (n <= 1)
        return 1;
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2u, 3u, 5u})
            while (r % p == 0)
                r /= p;
        if (r == 1)
            return m;
    }
}

std::size_t next_pow2(std::size_t n)
{
    std::size_t p = 1;
    while (p < n)
        p <<= 1;
    return p;
}

} // namespace edof::fft
