#pragma once

#include <complex>
#include <span>
#include <vector>

namespace tmseeg {

using ComplexVector = std::vector<std::complex<double>>;

/// Smallest n' >= n whose only prime factors are 2, 3 and 5.
std::size_t fast_fft_size(std::size_t n);

/// Full complex spectrum of `x` zero-padded to `n` points.
ComplexVector fft_real(std::span<const double> x, std::size_t n);
ComplexVector fft_complex(const ComplexVector& x);
ComplexVector ifft_complex(const ComplexVector& spectrum);
std::vector<double> ifft_real(const ComplexVector& spectrum);

struct Psd {
    std::vector<double> freqs;
    std::vector<double> power;
};

/// One-sided Welch estimate with a Hann window of `window` samples and
/// fractional `overlap`. Units: input^2 / Hz.
Psd welch(std::span<const double> x, double fs, std::size_t window, double overlap = 0.5);

}  // namespace tmseeg
