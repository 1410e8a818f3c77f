#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tmseeg/core.hpp"

namespace tmseeg {

struct TimeFrequencyMap {
    Eigen::MatrixXd power_db;   ///< freqs x times; dB re baseline, or re 1 uV^2 without one
    Eigen::MatrixXd power;      ///< freqs x times, linear, trial- and channel-averaged
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;  ///< false inside the wavelet edge zone
    std::vector<double> freqs;
    std::vector<double> times;
    std::optional<std::pair<double, double>> baseline_window;
    std::vector<Eigen::Index> channel_set;
};

struct TfrOptions {
    std::vector<double> freqs;      ///< default 4..40 Hz in 1 Hz steps
    std::vector<double> n_cycles;   ///< default max(3, f/2) per frequency
    std::optional<std::pair<double, double>> baseline{std::pair{-0.9, -0.1}};
    std::vector<Eigen::Index> channels;  ///< default: C3 and neighbours, else all good EEG
};

std::vector<double> default_tfr_freqs();
double default_n_cycles(double f_hz);

/// Channels around C3 present in the montage (good EEG only).
std::vector<Eigen::Index> motor_channel_set(const Montage& montage);

/// Complex Morlet power (unit-energy wavelets, +/-3 sigma support), averaged
/// over good trials then channels, in dB against the baseline mean.
TimeFrequencyMap morlet_tfr(const EpochSet& epochs, const TfrOptions& opts = {});

/// Mean dB over band x window minus the mean dB over the same band in the
/// baseline (pre-stimulus) window. Invalid cells are skipped.
double beta_rebound_score(const TimeFrequencyMap& tfr, std::pair<double, double> band = {15.0, 30.0},
                          std::pair<double, double> window = {0.2, 0.8});

}  // namespace tmseeg
