#pragma once

#include <cstddef>

#include "edof/grid.hpp"

// Thin wrapper over FFTW. Plans are cached per shape and created under a lock;
// execution is reentrant. All plans use FFTW_ESTIMATE so results are identical
// from run to run.
namespace edof::fft
{

// Unnormalized forward DFT, in place: X[k] = sum_m x[m] exp(-2 pi i k m / N).
void forward(ComplexGrid &grid);

// Inverse DFT with 1/(rows*cols) scaling, in place.
void inverse(ComplexGrid &grid);

// Real-to-complex forward DFT. Output is rows x (cols/2 + 1).
ComplexGrid rfft(const RealGrid &in);

// Complex-to-real inverse DFT of a half spectrum, scaled by 1/(rows*cols).
RealGrid irfft(const ComplexGrid &half_spectrum, std::size_t cols);

// Smallest n' >= n of the form 2^a 3^b 5^c.
std::size_t good_size(std::size_t n);

// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

} // namespace edof::fft
