#include "tmseeg/sound.hpp"

#include <algorithm>
#include <cmath>

namespace tmseeg {

namespace {

std::vector<Eigen::Index> all_but(Eigen::Index n, Eigen::Index skip) {
    std::vector<Eigen::Index> out;
    out.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i)
        if (i != skip) out.push_back(i);
    return out;
}

// (G + mu * diag(sigma^2))^-1 via LDLT; throws when not positive definite.
Eigen::LDLT<Eigen::MatrixXd> regularised(Eigen::MatrixXd gram, const Eigen::VectorXd& sigma, double lambda) {
    const double mu = lambda * gram.trace() / static_cast<double>(gram.rows());
    gram.diagonal() += mu * sigma.array().square().matrix();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
        fail(ErrorCode::Numerical, "regularised SOUND matrix is singular");
    return ldlt;
}

void check_average_referenced(const Eigen::MatrixXd& y) {
    const double scale = y.cwiseAbs().maxCoeff();
    if (scale == 0.0) return;
    const double offset = y.colwise().sum().cwiseAbs().maxCoeff() / static_cast<double>(y.rows());
    if (offset > 1e-6 * scale) fail(ErrorCode::Data, "SOUND input is not average-referenced over the good channels");
}

}  // namespace

NoiseEstimate sound_estimate_noise(const Eigen::MatrixXd& y, const Eigen::MatrixXd& gain, double lambda, int iterations) {
    const Eigen::Index n = y.rows();
    if (gain.rows() != n) fail(ErrorCode::Data, "lead field rows do not match data channels");
    if (n < 3) fail(ErrorCode::Data, "SOUND needs at least 3 channels");
    if (!(lambda > 0.0)) fail(ErrorCode::Numerical, "SOUND regularisation must be positive");
    if (iterations < 1) fail(ErrorCode::Config, "SOUND needs at least one iteration");
    if (!y.allFinite()) fail(ErrorCode::Data, "SOUND input contains non-finite samples");

    const Eigen::MatrixXd gram = gain * gain.transpose();
    const auto samples = static_cast<double>(y.cols());

    NoiseEstimate est;
    est.sigma = Eigen::VectorXd::Ones(n);
    for (int it = 0; it < iterations; ++it) {
        Eigen::VectorXd next(n);
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
            const auto i = static_cast<Eigen::Index>(ii);
            const auto rest = all_but(n, i);
            // The prediction L_i * J with J = L_-i^T M^-1 Y_-i only needs the
            // Gram blocks: y_i_hat = G(i, -i) M^-1 Y_-i.
            const auto ldlt = regularised(gram(rest, rest), est.sigma(rest), lambda);
            const Eigen::VectorXd weights = ldlt.solve(gram(rest, i));
            const Eigen::RowVectorXd residual = y.row(i) - weights.transpose() * y(rest, Eigen::all);
            next(i) = std::sqrt(residual.squaredNorm() / samples);
        });
        const double floor = next.minCoeff();
        if (!(floor > 0.0)) fail(ErrorCode::Numerical, "SOUND produced a zero noise estimate");
        next /= floor;
        est.convergence_trace.push_back(((next - est.sigma).cwiseAbs().array() / est.sigma.array()).maxCoeff());
        est.sigma = std::move(next);
        est.iterations_run = it + 1;
    }
    return est;
}

Eigen::MatrixXd sound_operator(const Eigen::MatrixXd& gain, const NoiseEstimate& noise, double lambda) {
    if (noise.sigma.size() != gain.rows()) fail(ErrorCode::Data, "noise estimate does not match lead field rows");
    const Eigen::MatrixXd gram = gain * gain.transpose();
    const auto ldlt = regularised(gram, noise.sigma, lambda);
    // W = G M^-1 = (M^-1 G)^T since both are symmetric.
    return ldlt.solve(gram).transpose();
}

Eigen::MatrixXd compress_for_estimation(const Eigen::MatrixXd& y, Eigen::Index max_rank) {
    const Eigen::Index samples = y.cols();
    if (samples < 1) fail(ErrorCode::Data, "nothing to compress");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(y * y.transpose());
    if (eig.info() != Eigen::Success) fail(ErrorCode::Numerical, "eigendecomposition failed during compression");
    const auto& values = eig.eigenvalues();
    const double top = values.maxCoeff();
    if (!(top > 0.0)) return Eigen::MatrixXd::Zero(y.rows(), 1);
    const Eigen::Index rank = (values.array() > top * 1e-12).count();
    const Eigen::Index r = std::min(rank, max_rank);
    const double scale = std::sqrt(static_cast<double>(r) / static_cast<double>(samples));
    Eigen::MatrixXd out(y.rows(), r);
    for (Eigen::Index k = 0; k < r; ++k) {
        const Eigen::Index src = y.rows() - 1 - k;
        out.col(k) = eig.eigenvectors().col(src) * std::sqrt(values(src)) * scale;
    }
    return out;
}

namespace {

// Full-montage operator: every EEG row predicted from the good channels.
ChannelOperator expand_operator(const LeadField& lf, const Montage& channels, const std::vector<Eigen::Index>& good,
                                const NoiseEstimate& noise, double lambda) {
    const Eigen::MatrixXd lg = select_rows(lf.gain, good);
    const Eigen::MatrixXd gram = lg * lg.transpose();
    const auto ldlt = regularised(gram, noise.sigma, lambda);
    const Eigen::MatrixXd rows = ldlt.solve(lg * lf.gain.transpose()).transpose();  // channels x good

    const auto n_ch = static_cast<Eigen::Index>(channels.size());
    ChannelOperator op;
    op.kind = OperatorKind::SoundCorrection;
    op.matrix = Eigen::MatrixXd::Identity(n_ch, n_ch);
    for (auto c : eeg_channels(channels)) {
        op.matrix.row(c).setZero();
        for (std::size_t j = 0; j < good.size(); ++j) op.matrix(c, good[j]) = rows(c, static_cast<Eigen::Index>(j));
    }
    return op;
}

SoundResult estimate(const Eigen::MatrixXd& good_data, const LeadField& lf, const Montage& channels,
                     const std::vector<Eigen::Index>& good, const SoundOptions& opts) {
    if (lf.gain.rows() != static_cast<Eigen::Index>(channels.size()))
        fail(ErrorCode::Data, "lead field rows do not match the montage");
    check_average_referenced(good_data);
    const Eigen::MatrixXd lg = select_rows(lf.gain, good);
    SoundResult res;
    res.lambda = opts.lambda;
    res.channel_index = good;
    if (opts.compress) {
        const Eigen::MatrixXd compressed = compress_for_estimation(good_data, opts.compress_rank);
        res.compressed_rank = compressed.cols();
        res.noise = sound_estimate_noise(compressed, lg, opts.lambda, opts.iterations);
    } else {
        res.compressed_rank = good_data.cols();
        res.noise = sound_estimate_noise(good_data, lg, opts.lambda, opts.iterations);
    }
    res.op = expand_operator(lf, channels, good, res.noise, opts.lambda);
    return res;
}

}  // namespace

std::pair<EpochSet, SoundResult> sound_clean(const EpochSet& epochs, const LeadField& lf, const SoundOptions& opts) {
    const auto good = good_eeg_channels(epochs.channels);
    auto res = estimate(select_rows(epochs.concatenate_good(), good), lf, epochs.channels, good, opts);
    EpochSet out = apply(res.op, epochs);
    return {std::move(out), std::move(res)};
}

std::pair<Recording, SoundResult> sound_clean(const Recording& rec, const LeadField& lf, const SoundOptions& opts) {
    const auto good = good_eeg_channels(rec.channels);
    auto res = estimate(select_rows(rec.data, good), lf, rec.channels, good, opts);
    Recording out = apply(res.op, rec);
    return {std::move(out), std::move(res)};
}

}  // namespace tmseeg
