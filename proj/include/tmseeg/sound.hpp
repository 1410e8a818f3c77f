#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "tmseeg/core.hpp"
#include "tmseeg/leadfield.hpp"

namespace tmseeg {

struct NoiseEstimate {
    Eigen::VectorXd sigma;  ///< per good channel, min-normalised to 1
    int iterations_run = 0;
    std::vector<double> convergence_trace;  ///< max relative sigma change per sweep
};

struct SoundResult {
    ChannelOperator op;  ///< full montage; columns of bad channels are zero
    NoiseEstimate noise;
    std::vector<Eigen::Index> channel_index;  ///< good channels the sigma entries refer to
    double lambda = 0.3;
    Eigen::Index compressed_rank = 0;
};

inline constexpr double kSoundLambda = 0.3;
inline constexpr int kSoundIterations = 5;
inline constexpr Eigen::Index kSoundCompressRank = 15000;

/// Leave-one-out minimum-norm cross-validation of every channel of `y`
/// (channels x samples, rows matching `gain`). Sigma starts at one and is
/// renormalised by its minimum after every sweep.
NoiseEstimate sound_estimate_noise(const Eigen::MatrixXd& y, const Eigen::MatrixXd& gain, double lambda, int iterations);

/// W = G (G + lambda * tr(G)/n * Sigma)^-1 with G = L L^T over the rows of `gain`.
Eigen::MatrixXd sound_operator(const Eigen::MatrixXd& gain, const NoiseEstimate& noise, double lambda);

/// Channels x r factor with the same channel second moment (Y Y^T / cols) as
/// `y`, r = min(max_rank, rank(Y)).
Eigen::MatrixXd compress_for_estimation(const Eigen::MatrixXd& y, Eigen::Index max_rank = kSoundCompressRank);

struct SoundOptions {
    double lambda = kSoundLambda;
    int iterations = kSoundIterations;
    Eigen::Index compress_rank = kSoundCompressRank;
    /// Estimate sigma from the uncompressed data instead.
    bool compress = true;
};

/// Noise estimated on the compressed good-trial data, W built once and
/// applied to every trial. Input must be average-referenced.
std::pair<EpochSet, SoundResult> sound_clean(const EpochSet& epochs, const LeadField& lf, const SoundOptions& opts = {});
std::pair<Recording, SoundResult> sound_clean(const Recording& rec, const LeadField& lf, const SoundOptions& opts = {});

}  // namespace tmseeg
