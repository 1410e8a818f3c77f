#include "tmseeg/tfr.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "tmseeg/spectral.hpp"

namespace tmseeg {

namespace {
constexpr double kSupportSigmas = 3.0;
}

std::vector<double> default_tfr_freqs() {
    std::vector<double> f;
    for (int hz = 4; hz <= 40; ++hz) f.push_back(hz);
    return f;
}

double default_n_cycles(double f_hz) { return std::max(3.0, f_hz / 2.0); }

std::vector<Eigen::Index> motor_channel_set(const Montage& montage) {
    std::vector<Eigen::Index> out;
    for (const char* name : {"C3", "FC1", "FC5", "CP1", "CP5"}) {
        if (auto i = find_channel(montage, name); i && !montage[static_cast<std::size_t>(*i)].bad &&
                                                   montage[static_cast<std::size_t>(*i)].kind == ChannelKind::Eeg)
            out.push_back(*i);
    }
    if (out.empty()) out = good_eeg_channels(montage);
    return out;
}

TimeFrequencyMap morlet_tfr(const EpochSet& epochs, const TfrOptions& opts) {
    TimeFrequencyMap map;
    map.freqs = opts.freqs.empty() ? default_tfr_freqs() : opts.freqs;
    std::vector<double> cycles = opts.n_cycles;
    if (cycles.empty())
        for (double f : map.freqs) cycles.push_back(default_n_cycles(f));
    if (cycles.size() != map.freqs.size()) fail(ErrorCode::Config, "n_cycles must match freqs");
    for (std::size_t k = 0; k < map.freqs.size(); ++k) {
        if (!(map.freqs[k] > 0.0 && map.freqs[k] < epochs.fs / 2.0)) fail(ErrorCode::Config, "TFR frequency outside (0, fs/2)");
        if (k > 0 && !(map.freqs[k] > map.freqs[k - 1])) fail(ErrorCode::Config, "TFR frequencies must be increasing");
    }
    map.channel_set = opts.channels.empty() ? motor_channel_set(epochs.channels) : opts.channels;
    map.baseline_window = opts.baseline;

    const Eigen::Index n = epochs.n_samples();
    const auto trials = epochs.good_trials();
    if (trials.empty()) fail(ErrorCode::Data, "no good trials for the TFR");
    const auto n_freq = static_cast<Eigen::Index>(map.freqs.size());

    // Wavelets: unit energy, +/- 3 sigma support.
    std::vector<std::vector<std::complex<double>>> wavelets;
    std::vector<Eigen::Index> half(static_cast<std::size_t>(n_freq));
    Eigen::Index max_len = 0;
    for (Eigen::Index k = 0; k < n_freq; ++k) {
        const double f = map.freqs[static_cast<std::size_t>(k)];
        const double sigma_t = cycles[static_cast<std::size_t>(k)] / (2.0 * std::numbers::pi * f);
        const auto h = static_cast<Eigen::Index>(std::ceil(kSupportSigmas * sigma_t * epochs.fs));
        if (2 * h + 1 > n) fail(ErrorCode::Data, "wavelet at " + std::to_string(f) + " Hz is longer than the epoch");
        half[static_cast<std::size_t>(k)] = h;
        std::vector<std::complex<double>> w(static_cast<std::size_t>(2 * h + 1));
        double energy = 0.0;
        for (Eigen::Index i = -h; i <= h; ++i) {
            const double t = static_cast<double>(i) / epochs.fs;
            const auto v = std::exp(-t * t / (2 * sigma_t * sigma_t)) * std::polar(1.0, 2.0 * std::numbers::pi * f * t);
            w[static_cast<std::size_t>(i + h)] = v;
            energy += std::norm(v);
        }
        for (auto& v : w) v /= std::sqrt(energy);
        wavelets.push_back(std::move(w));
        max_len = std::max(max_len, 2 * h + 1);
    }

    const auto fft_n = fast_fft_size(static_cast<std::size_t>(n + max_len));
    std::vector<ComplexVector> wavelet_spec;
    for (const auto& w : wavelets) {
        ComplexVector padded(fft_n, 0.0);
        std::copy(w.begin(), w.end(), padded.begin());
        wavelet_spec.push_back(fft_complex(padded));
    }

    // One accumulator per (trial, channel) job keeps the reduction order fixed.
    const auto n_jobs = trials.size() * map.channel_set.size();
    std::vector<Eigen::MatrixXd> partial(n_jobs, Eigen::MatrixXd::Zero(n_freq, n));
    parallel_for(n_jobs, [&](std::size_t job) {
        const auto& trial = epochs.trials[static_cast<std::size_t>(trials[job / map.channel_set.size()])];
        const Eigen::RowVectorXd x = trial.row(map.channel_set[job % map.channel_set.size()]);
        const auto xs = fft_real(std::span<const double>(x.data(), static_cast<std::size_t>(n)), fft_n);
        ComplexVector prod(fft_n);
        for (Eigen::Index k = 0; k < n_freq; ++k) {
            const auto& ws = wavelet_spec[static_cast<std::size_t>(k)];
            for (std::size_t i = 0; i < fft_n; ++i) prod[i] = xs[i] * ws[i];
            const auto y = ifft_complex(prod);
            const auto h = half[static_cast<std::size_t>(k)];
            for (Eigen::Index j = 0; j < n; ++j) partial[job](k, j) = std::norm(y[static_cast<std::size_t>(j + h)]);
        }
    });
    map.power = Eigen::MatrixXd::Zero(n_freq, n);
    for (const auto& p : partial) map.power += p;
    map.power /= static_cast<double>(n_jobs);

    map.times.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) map.times[static_cast<std::size_t>(j)] = epochs.time_of(j);
    map.valid.setConstant(n_freq, n, false);
    for (Eigen::Index k = 0; k < n_freq; ++k) {
        const auto h = half[static_cast<std::size_t>(k)];
        for (Eigen::Index j = h; j < n - h; ++j) map.valid(k, j) = true;
    }

    map.power_db.resize(n_freq, n);
    for (Eigen::Index k = 0; k < n_freq; ++k) {
        double ref = 1.0;
        if (map.baseline_window) {
            double sum = 0.0;
            int count = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double t = map.times[static_cast<std::size_t>(j)];
                if (map.valid(k, j) && t >= map.baseline_window->first && t <= map.baseline_window->second) {
                    sum += map.power(k, j);
                    ++count;
                }
            }
            if (count == 0)
                fail(ErrorCode::Data, "baseline window has no valid samples at " + std::to_string(map.freqs[static_cast<std::size_t>(k)]) + " Hz");
            ref = sum / count;
        }
        for (Eigen::Index j = 0; j < n; ++j) map.power_db(k, j) = 10.0 * std::log10(map.power(k, j) / ref);
    }
    return map;
}

double beta_rebound_score(const TimeFrequencyMap& tfr, std::pair<double, double> band, std::pair<double, double> window) {
    std::pair<double, double> pre = tfr.baseline_window.value_or(std::pair{-std::numeric_limits<double>::infinity(), 0.0});
    pre.second = std::min(pre.second, 0.0);
    double post_sum = 0.0, pre_sum = 0.0;
    int post_n = 0, pre_n = 0;
    for (std::size_t k = 0; k < tfr.freqs.size(); ++k) {
        if (tfr.freqs[k] < band.first || tfr.freqs[k] > band.second) continue;
        for (std::size_t j = 0; j < tfr.times.size(); ++j) {
            const auto ki = static_cast<Eigen::Index>(k);
            const auto ji = static_cast<Eigen::Index>(j);
            if (!tfr.valid(ki, ji)) continue;
            const double t = tfr.times[j];
            if (t >= window.first && t <= window.second) {
                post_sum += tfr.power_db(ki, ji);
                ++post_n;
            } else if (t >= pre.first && t <= pre.second) {
                pre_sum += tfr.power_db(ki, ji);
                ++pre_n;
            }
        }
    }
    if (post_n == 0 || pre_n == 0) fail(ErrorCode::Data, "beta rebound cell is empty after edge exclusion");
    return post_sum / post_n - pre_sum / pre_n;
}

}  // namespace tmseeg
