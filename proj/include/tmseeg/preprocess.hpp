#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "tmseeg/core.hpp"

namespace tmseeg {

/// Linear-phase FIR kernel. `taps` has odd length; group delay is (size-1)/2.
struct FirFilter {
    std::vector<double> taps;
    double fs = 0.0;
    double hp_hz = 0.0;  ///< 0 for a pure low-pass
    double lp_hz = 0.0;
    double lp_transition_hz = 0.0;

    /// Magnitude of the single-pass frequency response at f Hz.
    double gain(double f_hz) const;
};

inline constexpr std::size_t kDefaultMaxTaps = 1u << 16;

/// Hamming-windowed-sinc band-pass. The high-pass edge uses `hp_transition_hz`
/// and the low-pass edge `lp_transition_hz` as full transition widths centred
/// on the corner frequencies. Throws ErrorCode::Config when the requested
/// widths need more than `max_taps` taps.
FirFilter design_fir(double fs, double hp_hz, double lp_hz, double hp_transition_hz = 1.0,
                     double lp_transition_hz = 5.0, std::size_t max_taps = kDefaultMaxTaps);

FirFilter design_lowpass(double fs, double lp_hz, double transition_hz, std::size_t max_taps = kDefaultMaxTaps);
FirFilter design_highpass(double fs, double hp_hz, double transition_hz, std::size_t max_taps = kDefaultMaxTaps);

/// Forward-backward application with odd reflection padding of one filter length.
Recording filter_zero_phase(const Recording& rec, const FirFilter& f);

/// Row-wise zero-phase filtering of a plain matrix (same padding rules).
Eigen::MatrixXd filter_rows_zero_phase(const Eigen::MatrixXd& x, const FirFilter& f);

/// Integer-ratio decimation. Applies an anti-alias low-pass at 0.4 * target_fs
/// unless the recording metadata shows a low-pass already below target_fs / 2.
Recording downsample(const Recording& rec, double target_fs);

/// Replaces samples in [t_a, t_b] (seconds around each pulse) with a cubic
/// Hermite bridge between the boundary samples.
EpochSet excise_pulse(const EpochSet& epochs, std::pair<double, double> window);

/// Same bridge applied around every event of `code` in a continuous recording.
Recording excise_pulse(const Recording& rec, std::pair<double, double> window, int code = kTmsEventCode);

struct BadChannel {
    Eigen::Index index = 0;
    double sd = 0.0;
};

/// Channels whose sample SD lies outside mean(SD) +/- n_sd * SD(SD) over good
/// EEG channels (population statistics).
std::vector<BadChannel> detect_bad_channels(const Recording& rec, double n_sd = 2.0);

/// Copy of `channels` with the listed channels flagged bad.
Montage mark_bad(Montage channels, const std::vector<BadChannel>& bad);

struct RejectedTrial {
    Eigen::Index index = 0;
    double peak_uv = 0.0;
};

struct RejectionReport {
    std::vector<BadChannel> bad_channels;
    std::vector<RejectedTrial> rejected_trials;
    double bad_channel_sd = 2.0;
    double reject_uv = std::numeric_limits<double>::infinity();
};

/// Flags trials with any |sample| > limit_uv on a good EEG channel. Sample
/// values are untouched.
std::pair<EpochSet, RejectionReport> reject_amplitude(const EpochSet& epochs, double limit_uv);

/// Consecutive non-overlapping windows of `length_s`; the remainder is dropped.
EpochSet pseudo_epoch(const Recording& rec, double length_s);

/// Common average over good EEG channels, subtracted from every EEG channel.
ChannelOperator average_reference_operator(const Montage& channels);
std::pair<Recording, ChannelOperator> average_reference(const Recording& rec);
std::pair<EpochSet, ChannelOperator> average_reference(const EpochSet& epochs);

struct PreprocessConfig {
    double hp_hz = 1.0;
    double lp_hz = 40.0;
    double hp_transition_hz = 1.0;
    double lp_transition_hz = 5.0;
    double target_fs = 250.0;
    double reject_uv = 500.0;
    double pseudo_epoch_s = 1.0;
    std::pair<double, double> excise_window_ms{-2.0, 10.0};
    double bad_channel_sd = 2.0;
    std::pair<double, double> epoch_window_s{-1.0, 2.0};
};

/// Output of the full preprocessing recipe.
struct PreprocessResult {
    Recording continuous;   ///< excised, filtered, decimated, re-referenced
    EpochSet epochs;        ///< stimulation-locked, amplitude-flagged, re-referenced
    EpochSet pseudo_epochs; ///< fixed-length windows of `continuous` for ICA, amplitude-flagged
    RejectionReport report;
    ChannelOperator reference;
    std::size_t dropped_edge_trials = 0;
};

/// Bad channels -> pulse excision -> band-pass -> downsample -> reject ->
/// epoch -> average reference. Deterministic.
PreprocessResult run_preprocess(const Recording& rec, const PreprocessConfig& cfg);

/// Replays the linear part of `run_preprocess` (excision, filter, decimation,
/// epoching, re-reference) with the bad-channel set and rejection flags taken
/// from `decided`. Used to carry ground-truth signals through the same chain.
EpochSet replay_preprocess(const Recording& rec, const PreprocessConfig& cfg, const PreprocessResult& decided);

}  // namespace tmseeg
