#include "tmseeg/spectral.hpp"

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "tmseeg/core.hpp"

namespace tmseeg {

std::size_t fast_fft_size(std::size_t n) {
    if (n <= 1) return 1;
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2u, 3u, 5u})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

ComplexVector fft_real(std::span<const double> x, std::size_t n) {
    std::vector<double> padded(n, 0.0);
    std::copy_n(x.begin(), std::min(n, x.size()), padded.begin());
    Eigen::FFT<double> fft;
    ComplexVector out;
    fft.fwd(out, padded);
    return out;
}

ComplexVector fft_complex(const ComplexVector& x) {
    Eigen::FFT<double> fft;
    ComplexVector out;
    fft.fwd(out, x);
    return out;
}

ComplexVector ifft_complex(const ComplexVector& spectrum) {
    Eigen::FFT<double> fft;
    ComplexVector out;
    fft.inv(out, spectrum);
    return out;
}

std::vector<double> ifft_real(const ComplexVector& spectrum) {
    const auto c = ifft_complex(spectrum);
    std::vector<double> out(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
    return out;
}

Psd welch(std::span<const double> x, double fs, std::size_t window, double overlap) {
    if (window < 2 || x.size() < window) fail(ErrorCode::Data, "too few samples for one Welch window");
    const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window * (1.0 - overlap))));

    std::vector<double> taper(window);
    double taper_energy = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        taper[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(window));
        taper_energy += taper[i] * taper[i];
    }

    const std::size_t n_bins = window / 2 + 1;
    Psd psd;
    psd.freqs.resize(n_bins);
    psd.power.assign(n_bins, 0.0);
    for (std::size_t k = 0; k < n_bins; ++k) psd.freqs[k] = fs * static_cast<double>(k) / static_cast<double>(window);

    Eigen::FFT<double> fft;
    std::vector<double> seg(window);
    ComplexVector spec;
    std::size_t n_segments = 0;
    for (std::size_t start = 0; start + window <= x.size(); start += step) {
        double mean = 0.0;
        for (std::size_t i = 0; i < window; ++i) mean += x[start + i];
        mean /= static_cast<double>(window);
        for (std::size_t i = 0; i < window; ++i) seg[i] = (x[start + i] - mean) * taper[i];
        fft.fwd(spec, seg);
        for (std::size_t k = 0; k < n_bins; ++k) psd.power[k] += std::norm(spec[k]);
        ++n_segments;
    }
    const double scale = 1.0 / (fs * taper_energy * static_cast<double>(n_segments));
    for (std::size_t k = 0; k < n_bins; ++k) {
        const bool edge = k == 0 || (window % 2 == 0 && k == n_bins - 1);
        psd.power[k] *= scale * (edge ? 1.0 : 2.0);
    }
    return psd;
}

}  // namespace tmseeg
