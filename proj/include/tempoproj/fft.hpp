#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace tempoproj::fft {

std::size_t next_pow2(std::size_t n);

/// In-place iterative radix-2 FFT. Size must be a power of two.
/// The inverse transform includes the 1/n scaling.
void transform(std::vector<std::complex<double>>& data, bool inverse);

}  // namespace tempoproj::fft
