#include "tmseeg/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <exception>
#include <mutex>
#include <thread>

namespace tmseeg {

Eigen::Index EpochSet::index_of(double t) const {
    return static_cast<Eigen::Index>(std::llround((t - t0) * fs));
}

std::vector<Eigen::Index> EpochSet::good_trials() const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < n_trials(); ++i) {
        if (rejected.empty() || !rejected[static_cast<std::size_t>(i)]) out.push_back(i);
    }
    return out;
}

Eigen::MatrixXd EpochSet::concatenate_good() const {
    const auto good = good_trials();
    Eigen::MatrixXd out(n_channels(), n_samples() * static_cast<Eigen::Index>(good.size()));
    Eigen::Index col = 0;
    for (auto t : good) {
        out.middleCols(col, n_samples()) = trials[static_cast<std::size_t>(t)];
        col += n_samples();
    }
    return out;
}

std::string to_string(OperatorKind kind) {
    switch (kind) {
        case OperatorKind::SspProjector: return "ssp-projector";
        case OperatorKind::SoundCorrection: return "sound-correction";
        case OperatorKind::AverageReference: return "average-reference";
        case OperatorKind::SourceReconstruction: return "source-reconstruction";
    }
    return "unknown";
}

std::string to_string(ChannelKind kind) {
    return kind == ChannelKind::Eeg ? "eeg" : "stim-marker";
}

namespace {

void validate_channels(const Montage& channels) {
    std::set<std::string> names;
    for (const auto& ch : channels) {
        if (!names.insert(ch.name).second) fail(ErrorCode::Data, "duplicate channel name '" + ch.name + "'");
        if (ch.kind == ChannelKind::Eeg && !ch.position.allFinite())
            fail(ErrorCode::Data, "channel '" + ch.name + "' has a non-finite position");
    }
}

}  // namespace

void validate(const Recording& rec) {
    if (!(rec.fs > 0.0)) fail(ErrorCode::Data, "sampling rate must be positive");
    if (rec.data.rows() != static_cast<Eigen::Index>(rec.channels.size()))
        fail(ErrorCode::Data, "data rows do not match channel count");
    validate_channels(rec.channels);
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
        const auto s = rec.events[i].sample;
        if (s < 0 || s >= rec.n_samples()) fail(ErrorCode::Data, "event sample index out of range");
        if (i > 0 && s <= rec.events[i - 1].sample) fail(ErrorCode::Data, "event samples must be strictly increasing");
    }
    if (!rec.data.allFinite()) fail(ErrorCode::Data, "recording contains non-finite samples");
}

void validate(const EpochSet& epochs) {
    if (!(epochs.fs > 0.0)) fail(ErrorCode::Data, "sampling rate must be positive");
    if (!epochs.rejected.empty() && epochs.rejected.size() != epochs.trials.size())
        fail(ErrorCode::Data, "rejection flags do not match trial count");
    validate_channels(epochs.channels);
    for (const auto& t : epochs.trials) {
        if (t.rows() != static_cast<Eigen::Index>(epochs.channels.size()) || t.cols() != epochs.n_samples())
            fail(ErrorCode::Data, "trials have inconsistent dimensions");
    }
}

std::vector<Eigen::Index> good_eeg_channels(const Montage& channels) {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].kind == ChannelKind::Eeg && !channels[i].bad) out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
}

std::vector<Eigen::Index> eeg_channels(const Montage& channels) {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].kind == ChannelKind::Eeg) out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
}

std::optional<Eigen::Index> find_channel(const Montage& channels, const std::string& name) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].name == name) return static_cast<Eigen::Index>(i);
    }
    return std::nullopt;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const Eigen::Index> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

Recording apply(const ChannelOperator& op, const Recording& rec) {
    if (op.size() != rec.n_channels()) fail(ErrorCode::Data, "operator dimension does not match recording");
    Recording out = rec;
    out.data.noalias() = op.matrix * rec.data;
    return out;
}

EpochSet apply(const ChannelOperator& op, const EpochSet& epochs) {
    if (op.size() != epochs.n_channels()) fail(ErrorCode::Data, "operator dimension does not match epochs");
    EpochSet out = epochs;
    parallel_for(epochs.trials.size(), [&](std::size_t t) { out.trials[t].noalias() = op.matrix * epochs.trials[t]; });
    out.rank_deficiency += op.rank_loss;
    return out;
}

EpochSet epoch(const Recording& rec, std::pair<double, double> window, int code, std::size_t* dropped) {
    const auto [t_start, t_end] = window;
    if (!(t_start <= 0.0 && 0.0 <= t_end && t_start < t_end))
        fail(ErrorCode::Config, "epoch window must contain 0 and be non-empty");
    const auto n = static_cast<Eigen::Index>(std::llround((t_end - t_start) * rec.fs));
    const auto offset = static_cast<Eigen::Index>(std::llround(t_start * rec.fs));
    if (n < 1) fail(ErrorCode::Config, "epoch window shorter than one sample");

    EpochSet out;
    out.fs = rec.fs;
    out.t0 = static_cast<double>(offset) / rec.fs;
    out.channels = rec.channels;
    std::size_t n_dropped = 0;
    for (const auto& ev : rec.events) {
        if (ev.code != code) continue;
        const Eigen::Index start = ev.sample + offset;
        if (start < 0 || start + n > rec.n_samples()) {
            ++n_dropped;
            continue;
        }
        out.trials.emplace_back(rec.data.middleCols(start, n));
    }
    out.rejected.assign(out.trials.size(), false);
    if (dropped) *dropped = n_dropped;
    return out;
}

namespace {
std::atomic<unsigned> g_threads{1};
}

void set_thread_count(unsigned n) { g_threads = std::max(1u, n); }
unsigned thread_count() { return g_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const unsigned workers = std::min<std::size_t>(g_threads.load(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                try {
                    for (std::size_t i = next++; i < n; i = next++) body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    next = n;
                }
            });
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tmseeg
