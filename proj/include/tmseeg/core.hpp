#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace tmseeg {

// Error categories map onto the CLI exit codes.
enum class ErrorCode {
    Config = 2,
    Data = 3,
    Numerical = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

enum class ChannelKind { Eeg, StimMarker };

struct ChannelInfo {
    std::string name;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    ChannelKind kind = ChannelKind::Eeg;
    bool bad = false;
};

using Montage = std::vector<ChannelInfo>;

struct Event {
    std::int64_t sample = 0;
    int code = 1;

    bool operator==(const Event&) const = default;
};

inline constexpr int kTmsEventCode = 1;

/// Continuous multichannel recording. Samples are stored channels x samples in
/// microvolts.
struct Recording {
    Eigen::MatrixXd data;
    double fs = 0.0;
    Montage channels;
    std::vector<Event> events;
    /// Upper band edge of the last low-pass applied, 0 when unknown.
    double lowpass_hz = 0.0;

    Eigen::Index n_channels() const { return data.rows(); }
    Eigen::Index n_samples() const { return data.cols(); }
};

/// Trials x channels x samples, stored as one channels x samples matrix per trial.
struct EpochSet {
    std::vector<Eigen::MatrixXd> trials;
    double fs = 0.0;
    double t0 = 0.0;
    std::vector<bool> rejected;
    Montage channels;
    /// Dimensions removed by spatial projections applied so far.
    int rank_deficiency = 0;

    Eigen::Index n_trials() const { return static_cast<Eigen::Index>(trials.size()); }
    Eigen::Index n_channels() const { return trials.empty() ? Eigen::Index(channels.size()) : trials.front().rows(); }
    Eigen::Index n_samples() const { return trials.empty() ? 0 : trials.front().cols(); }

    double time_of(Eigen::Index sample) const { return t0 + static_cast<double>(sample) / fs; }

    /// Sample index nearest to time t (seconds relative to the pulse).
    Eigen::Index index_of(double t) const;

    std::vector<Eigen::Index> good_trials() const;

    /// Good trials concatenated along time.
    Eigen::MatrixXd concatenate_good() const;
};

enum class OperatorKind { SspProjector, SoundCorrection, AverageReference, SourceReconstruction };

struct ChannelOperator {
    Eigen::MatrixXd matrix;
    OperatorKind kind = OperatorKind::AverageReference;
    int rank_loss = 0;

    Eigen::Index size() const { return matrix.rows(); }
};

std::string to_string(OperatorKind kind);
std::string to_string(ChannelKind kind);

// Validation (throws ErrorCode::Data on violation).
void validate(const Recording& rec);
void validate(const EpochSet& epochs);

std::vector<Eigen::Index> good_eeg_channels(const Montage& channels);
std::vector<Eigen::Index> eeg_channels(const Montage& channels);
std::optional<Eigen::Index> find_channel(const Montage& channels, const std::string& name);

/// Rows selected by index list.
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const Eigen::Index> rows);

Recording apply(const ChannelOperator& op, const Recording& rec);
EpochSet apply(const ChannelOperator& op, const EpochSet& epochs);

/// Cuts stimulation-locked epochs. Events of `code` whose window falls outside
/// the recording are dropped and counted in `dropped`.
EpochSet epoch(const Recording& rec, std::pair<double, double> window, int code = kTmsEventCode,
               std::size_t* dropped = nullptr);

// Parallel execution. The thread count is process-wide; results never depend on it.
void set_thread_count(unsigned n);
unsigned thread_count();
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tmseeg
