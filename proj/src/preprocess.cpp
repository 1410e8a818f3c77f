#include "tmseeg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "tmseeg/spectral.hpp"

namespace tmseeg {

namespace {

constexpr double kPi = std::numbers::pi;
// Hamming-window transition width in units of fs / taps.
constexpr double kHammingWidth = 3.5;

std::size_t taps_for(double fs, double transition_hz, std::size_t max_taps) {
    if (!(transition_hz > 0.0)) fail(ErrorCode::Config, "transition width must be positive");
    auto n = static_cast<std::size_t>(std::ceil(kHammingWidth * fs / transition_hz));
    if (n % 2 == 0) ++n;
    if (n > max_taps)
        fail(ErrorCode::Config, "transition width " + std::to_string(transition_hz) + " Hz needs " + std::to_string(n) +
                                    " taps, above the budget of " + std::to_string(max_taps));
    return n;
}

// Unity-DC-gain windowed-sinc low-pass of odd length n.
std::vector<double> sinc_lowpass(double fs, double fc, std::size_t n) {
    std::vector<double> h(n);
    const double m = static_cast<double>(n - 1) / 2.0;
    const double wc = 2.0 * fc / fs;
    for (std::size_t i = 0; i < n; ++i) {
        const double k = static_cast<double>(i) - m;
        const double sinc = k == 0.0 ? wc : std::sin(kPi * wc * k) / (kPi * k);
        const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
        h[i] = sinc * window;
    }
    const double sum = std::accumulate(h.begin(), h.end(), 0.0);
    for (auto& v : h) v /= sum;
    return h;
}

// a - b with both kernels centred; the result has the longer length.
std::vector<double> centred_difference(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = std::max(a.size(), b.size());
    std::vector<double> out(n, 0.0);
    const std::size_t oa = (n - a.size()) / 2;
    const std::size_t ob = (n - b.size()) / 2;
    for (std::size_t i = 0; i < a.size(); ++i) out[oa + i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[ob + i] -= b[i];
    return out;
}

std::vector<double> unit_impulse(std::size_t n) {
    std::vector<double> d(n, 0.0);
    d[(n - 1) / 2] = 1.0;
    return d;
}

// Hermite bridge over samples (lo, hi) exclusive, using one-sided slopes.
template <typename Row>
void hermite_bridge(Row&& x, Eigen::Index lo, Eigen::Index hi) {
    const double p0 = x(lo);
    const double p1 = x(hi);
    const double m0 = x(lo) - x(lo - 1);
    const double m1 = x(hi + 1) - x(hi);
    const double span = static_cast<double>(hi - lo);
    for (Eigen::Index i = lo + 1; i < hi; ++i) {
        const double s = static_cast<double>(i - lo) / span;
        const double s2 = s * s;
        const double s3 = s2 * s;
        x(i) = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * span * m0 + (-2 * s3 + 3 * s2) * p1 +
               (s3 - s2) * span * m1;
    }
}

// Sample bounds [first, last] covered by [t_a, t_b] for a block whose sample 0 is at t0.
std::pair<Eigen::Index, Eigen::Index> window_samples(double t0, double fs, std::pair<double, double> w) {
    const auto first = static_cast<Eigen::Index>(std::ceil((w.first - t0) * fs - 1e-9));
    const auto last = static_cast<Eigen::Index>(std::floor((w.second - t0) * fs + 1e-9));
    return {first, last};
}

}  // namespace

double FirFilter::gain(double f_hz) const {
    std::complex<double> acc = 0.0;
    const double w = -2.0 * kPi * f_hz / fs;
    for (std::size_t i = 0; i < taps.size(); ++i) acc += taps[i] * std::polar(1.0, w * static_cast<double>(i));
    return std::abs(acc);
}

FirFilter design_lowpass(double fs, double lp_hz, double transition_hz, std::size_t max_taps) {
    if (!(lp_hz > 0.0 && lp_hz < fs / 2.0)) fail(ErrorCode::Config, "low-pass corner must lie in (0, fs/2)");
    FirFilter f;
    f.fs = fs;
    f.lp_hz = lp_hz;
    f.lp_transition_hz = transition_hz;
    f.taps = sinc_lowpass(fs, lp_hz, taps_for(fs, transition_hz, max_taps));
    return f;
}

FirFilter design_highpass(double fs, double hp_hz, double transition_hz, std::size_t max_taps) {
    if (!(hp_hz > 0.0 && hp_hz < fs / 2.0)) fail(ErrorCode::Config, "high-pass corner must lie in (0, fs/2)");
    const auto n = taps_for(fs, transition_hz, max_taps);
    FirFilter f;
    f.fs = fs;
    f.hp_hz = hp_hz;
    f.lp_hz = fs / 2.0;
    f.taps = centred_difference(unit_impulse(n), sinc_lowpass(fs, hp_hz, n));
    return f;
}

FirFilter design_fir(double fs, double hp_hz, double lp_hz, double hp_transition_hz, double lp_transition_hz,
                     std::size_t max_taps) {
    if (!(fs > 0.0 && 0.0 < hp_hz && hp_hz < lp_hz && lp_hz < fs / 2.0))
        fail(ErrorCode::Config, "band edges must satisfy 0 < hp < lp < fs/2");
    const auto low = sinc_lowpass(fs, lp_hz, taps_for(fs, lp_transition_hz, max_taps));
    const auto high_cut = sinc_lowpass(fs, hp_hz, taps_for(fs, hp_transition_hz, max_taps));
    FirFilter f;
    f.fs = fs;
    f.hp_hz = hp_hz;
    f.lp_hz = lp_hz;
    f.lp_transition_hz = lp_transition_hz;
    f.taps = centred_difference(low, high_cut);
    return f;
}

Eigen::MatrixXd filter_rows_zero_phase(const Eigen::MatrixXd& x, const FirFilter& f) {
    const auto n_taps = static_cast<Eigen::Index>(f.taps.size());
    const Eigen::Index n = x.cols();
    if (n < 3 * n_taps)
        fail(ErrorCode::Data, "signal of " + std::to_string(n) + " samples is shorter than 3x the " +
                                  std::to_string(n_taps) + "-tap filter");
    const Eigen::Index pad = n_taps;
    const auto fft_n = fast_fft_size(static_cast<std::size_t>(n + 2 * pad + n_taps));

    // |H|^2 is the spectrum of the forward-backward (autocorrelation) kernel.
    auto h_spec = fft_real(f.taps, fft_n);
    for (auto& v : h_spec) v = std::norm(v);

    Eigen::MatrixXd out(x.rows(), n);
    parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t r) {
        const auto row = x.row(static_cast<Eigen::Index>(r));
        std::vector<double> buf(static_cast<std::size_t>(n + 2 * pad));
        for (Eigen::Index j = 1; j <= pad; ++j) {
            buf[static_cast<std::size_t>(pad - j)] = 2.0 * row(0) - row(j);
            buf[static_cast<std::size_t>(pad + n - 1 + j)] = 2.0 * row(n - 1) - row(n - 1 - j);
        }
        for (Eigen::Index j = 0; j < n; ++j) buf[static_cast<std::size_t>(pad + j)] = row(j);
        auto spec = fft_real(buf, fft_n);
        for (std::size_t k = 0; k < fft_n; ++k) spec[k] *= h_spec[k];
        const auto y = ifft_real(spec);
        for (Eigen::Index j = 0; j < n; ++j) out(static_cast<Eigen::Index>(r), j) = y[static_cast<std::size_t>(pad + j)];
    });
    return out;
}

Recording filter_zero_phase(const Recording& rec, const FirFilter& f) {
    if (std::abs(f.fs - rec.fs) > 1e-9 * rec.fs) fail(ErrorCode::Config, "filter design rate does not match recording");
    Recording out = rec;
    const auto rows = eeg_channels(rec.channels);
    const auto filtered = filter_rows_zero_phase(select_rows(rec.data, rows), f);
    for (std::size_t i = 0; i < rows.size(); ++i) out.data.row(rows[i]) = filtered.row(static_cast<Eigen::Index>(i));
    if (f.lp_hz < rec.fs / 2.0) {
        const double edge = f.lp_hz + f.lp_transition_hz / 2.0;
        out.lowpass_hz = rec.lowpass_hz > 0.0 ? std::min(rec.lowpass_hz, edge) : edge;
    }
    return out;
}

Recording downsample(const Recording& rec, double target_fs) {
    if (!(target_fs > 0.0)) fail(ErrorCode::Config, "target rate must be positive");
    const double ratio_f = rec.fs / target_fs;
    const auto ratio = static_cast<Eigen::Index>(std::llround(ratio_f));
    if (ratio < 1 || std::abs(ratio_f - static_cast<double>(ratio)) > 1e-9)
        fail(ErrorCode::Config, "sampling rate " + std::to_string(rec.fs) + " is not an integer multiple of " +
                                    std::to_string(target_fs));
    if (ratio == 1) return rec;

    const Recording* src = &rec;
    Recording filtered;
    if (!(rec.lowpass_hz > 0.0 && rec.lowpass_hz <= target_fs / 2.0)) {
        filtered = filter_zero_phase(rec, design_lowpass(rec.fs, 0.4 * target_fs, 0.1 * target_fs));
        src = &filtered;
    }

    Recording out;
    out.fs = target_fs;
    out.channels = rec.channels;
    out.lowpass_hz = src->lowpass_hz;
    const Eigen::Index n_out = (rec.n_samples() + ratio - 1) / ratio;
    out.data.resize(rec.n_channels(), n_out);
    for (Eigen::Index j = 0; j < n_out; ++j) out.data.col(j) = src->data.col(j * ratio);
    for (const auto& ev : rec.events) {
        const auto s = std::min<Eigen::Index>(n_out - 1, static_cast<Eigen::Index>(std::llround(
                                                              static_cast<double>(ev.sample) / static_cast<double>(ratio))));
        if (!out.events.empty() && out.events.back().sample >= s) continue;
        out.events.push_back({s, ev.code});
    }
    return out;
}

EpochSet excise_pulse(const EpochSet& epochs, std::pair<double, double> window) {
    if (!(window.first < 0.0 && 0.0 < window.second)) fail(ErrorCode::Config, "excision window must straddle the pulse");
    const auto [first, last] = window_samples(epochs.t0, epochs.fs, window);
    if (first < 2 || last > epochs.n_samples() - 3) fail(ErrorCode::Config, "excision window wider than the epoch");
    EpochSet out = epochs;
    const auto eeg = eeg_channels(epochs.channels);
    for (auto& trial : out.trials)
        for (auto c : eeg) hermite_bridge(trial.row(c), first - 1, last + 1);
    return out;
}

Recording excise_pulse(const Recording& rec, std::pair<double, double> window, int code) {
    if (!(window.first < 0.0 && 0.0 < window.second)) fail(ErrorCode::Config, "excision window must straddle the pulse");
    Recording out = rec;
    const auto eeg = eeg_channels(rec.channels);
    for (const auto& ev : rec.events) {
        if (ev.code != code) continue;
        const double t0 = -static_cast<double>(ev.sample) / rec.fs;
        const auto [first, last] = window_samples(t0, rec.fs, window);
        if (first < 2 || last > rec.n_samples() - 3) continue;
        for (auto c : eeg) hermite_bridge(out.data.row(c), first - 1, last + 1);
    }
    return out;
}

std::vector<BadChannel> detect_bad_channels(const Recording& rec, double n_sd) {
    const auto good = good_eeg_channels(rec.channels);
    if (good.size() < 3) fail(ErrorCode::Data, "bad-channel detection needs at least 3 EEG channels");
    std::vector<double> sds;
    for (auto c : good) {
        const auto row = rec.data.row(c);
        const double mean = row.mean();
        sds.push_back(std::sqrt((row.array() - mean).square().mean()));
    }
    const double n = static_cast<double>(sds.size());
    const double mean = std::accumulate(sds.begin(), sds.end(), 0.0) / n;
    double var = 0.0;
    for (double s : sds) var += (s - mean) * (s - mean);
    const double spread = std::sqrt(var / n);
    std::vector<BadChannel> out;
    for (std::size_t i = 0; i < sds.size(); ++i) {
        if (sds[i] > mean + n_sd * spread || sds[i] < mean - n_sd * spread) out.push_back({good[i], sds[i]});
    }
    return out;
}

Montage mark_bad(Montage channels, const std::vector<BadChannel>& bad) {
    for (const auto& b : bad) channels[static_cast<std::size_t>(b.index)].bad = true;
    return channels;
}

std::pair<EpochSet, RejectionReport> reject_amplitude(const EpochSet& epochs, double limit_uv) {
    if (!(limit_uv > 0.0)) fail(ErrorCode::Config, "rejection limit must be positive");
    EpochSet out = epochs;
    if (out.rejected.size() != out.trials.size()) out.rejected.assign(out.trials.size(), false);
    RejectionReport report;
    report.reject_uv = limit_uv;
    const auto good = good_eeg_channels(epochs.channels);
    for (std::size_t t = 0; t < epochs.trials.size(); ++t) {
        double peak = 0.0;
        for (auto c : good) peak = std::max(peak, epochs.trials[t].row(c).cwiseAbs().maxCoeff());
        if (peak > limit_uv) {
            out.rejected[t] = true;
            report.rejected_trials.push_back({static_cast<Eigen::Index>(t), peak});
        }
    }
    return {std::move(out), std::move(report)};
}

EpochSet pseudo_epoch(const Recording& rec, double length_s) {
    const double len_f = length_s * rec.fs;
    const auto len = static_cast<Eigen::Index>(std::llround(len_f));
    if (len < 1 || std::abs(len_f - static_cast<double>(len)) > 1e-6)
        fail(ErrorCode::Config, "pseudo-epoch length must be a whole number of samples");
    const Eigen::Index n = rec.n_samples() / len;
    if (n < 1) fail(ErrorCode::Data, "recording shorter than one pseudo-epoch");
    EpochSet out;
    out.fs = rec.fs;
    out.t0 = 0.0;
    out.channels = rec.channels;
    for (Eigen::Index i = 0; i < n; ++i) out.trials.emplace_back(rec.data.middleCols(i * len, len));
    out.rejected.assign(out.trials.size(), false);
    return out;
}

ChannelOperator average_reference_operator(const Montage& channels) {
    const auto good = good_eeg_channels(channels);
    if (good.size() < 2) fail(ErrorCode::Data, "average reference needs at least 2 good EEG channels");
    const auto n = static_cast<Eigen::Index>(channels.size());
    ChannelOperator op;
    op.kind = OperatorKind::AverageReference;
    op.rank_loss = 1;
    op.matrix = Eigen::MatrixXd::Identity(n, n);
    const double w = 1.0 / static_cast<double>(good.size());
    for (auto r : eeg_channels(channels))
        for (auto c : good) op.matrix(r, c) -= w;
    return op;
}

std::pair<Recording, ChannelOperator> average_reference(const Recording& rec) {
    auto op = average_reference_operator(rec.channels);
    auto out = apply(op, rec);
    return {std::move(out), std::move(op)};
}

std::pair<EpochSet, ChannelOperator> average_reference(const EpochSet& epochs) {
    auto op = average_reference_operator(epochs.channels);
    EpochSet out = epochs;
    for (std::size_t t = 0; t < out.trials.size(); ++t) out.trials[t] = op.matrix * epochs.trials[t];
    return {std::move(out), std::move(op)};
}

namespace {

std::pair<double, double> ms_to_s(std::pair<double, double> ms) { return {ms.first / 1000.0, ms.second / 1000.0}; }

// Linear chain shared by run_preprocess and replay_preprocess, after bad
// channels are known.
Recording linear_chain(Recording rec, const PreprocessConfig& cfg) {
    rec = excise_pulse(rec, ms_to_s(cfg.excise_window_ms));
    rec = filter_zero_phase(rec, design_fir(rec.fs, cfg.hp_hz, cfg.lp_hz, cfg.hp_transition_hz, cfg.lp_transition_hz));
    return downsample(rec, cfg.target_fs);
}

}  // namespace

PreprocessResult run_preprocess(const Recording& input, const PreprocessConfig& cfg) {
    validate(input);
    PreprocessResult res;
    Recording rec = input;

    // Bad channels are judged after pulse excision so the pulse itself cannot
    // dominate the per-channel SD.
    res.report.bad_channel_sd = cfg.bad_channel_sd;
    res.report.bad_channels = detect_bad_channels(excise_pulse(rec, ms_to_s(cfg.excise_window_ms)), cfg.bad_channel_sd);
    rec.channels = mark_bad(rec.channels, res.report.bad_channels);

    Recording filtered = linear_chain(std::move(rec), cfg);

    EpochSet locked = epoch(filtered, cfg.epoch_window_s, kTmsEventCode, &res.dropped_edge_trials);
    auto [flagged, report] = reject_amplitude(locked, cfg.reject_uv);
    res.report.reject_uv = cfg.reject_uv;
    res.report.rejected_trials = std::move(report.rejected_trials);

    auto [pseudo_flagged, pseudo_report] = reject_amplitude(pseudo_epoch(filtered, cfg.pseudo_epoch_s), cfg.reject_uv);

    res.reference = average_reference_operator(filtered.channels);
    res.continuous = apply(res.reference, filtered);
    res.epochs = apply(res.reference, flagged);
    res.pseudo_epochs = apply(res.reference, pseudo_flagged);
    return res;
}

EpochSet replay_preprocess(const Recording& input, const PreprocessConfig& cfg, const PreprocessResult& decided) {
    Recording rec = input;
    rec.channels = mark_bad(rec.channels, decided.report.bad_channels);
    Recording filtered = linear_chain(std::move(rec), cfg);
    EpochSet locked = epoch(filtered, cfg.epoch_window_s, kTmsEventCode);
    locked.rejected = decided.epochs.rejected;
    return apply(decided.reference, locked);
}

}  // namespace tmseeg
