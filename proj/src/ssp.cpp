#include "tmseeg/ssp.hpp"

#include <algorithm>
#include <cmath>

#include "tmseeg/preprocess.hpp"

namespace tmseeg {

ArtifactSubspace estimate_artifact_subspace(const EpochSet& epochs, std::pair<double, double> window,
                                            double highpass_hz, int k) {
    if (k < 0) fail(ErrorCode::Config, "subspace dimension must be non-negative");
    const auto good = good_eeg_channels(epochs.channels);
    if (k >= static_cast<int>(good.size())) fail(ErrorCode::Config, "k must be below the good-channel count");

    ArtifactSubspace s;
    s.k = k;
    s.source_window = window;
    s.highpass_hz = highpass_hz;
    s.basis = Eigen::MatrixXd::Zero(epochs.n_channels(), k);
    if (k == 0) return s;

    const Eigen::Index first = epochs.index_of(window.first);
    const Eigen::Index last = epochs.index_of(window.second);
    if (first < 0 || last >= epochs.n_samples() || last < first) fail(ErrorCode::Config, "SSP window lies outside the epoch");
    const Eigen::Index width = last - first + 1;

    const auto trials = epochs.good_trials();
    if (trials.empty()) fail(ErrorCode::Data, "no good trials for SSP estimation");
    std::optional<FirFilter> hp;
    if (highpass_hz > 0.0) hp = design_highpass(epochs.fs, highpass_hz, highpass_hz / 2.0);

    Eigen::MatrixXd pooled(static_cast<Eigen::Index>(good.size()), width * static_cast<Eigen::Index>(trials.size()));
    parallel_for(trials.size(), [&](std::size_t i) {
        Eigen::MatrixXd x = select_rows(epochs.trials[static_cast<std::size_t>(trials[i])], good);
        if (hp) x = filter_rows_zero_phase(x, *hp);
        pooled.middleCols(static_cast<Eigen::Index>(i) * width, width) = x.middleCols(first, width);
    });

    Eigen::BDCSVD<Eigen::MatrixXd> svd(pooled, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    const Eigen::Index rank = (sv.array() > sv(0) * 1e-10).count();
    if (!(sv(0) > 0.0) || k > rank)
        fail(ErrorCode::Data, "k = " + std::to_string(k) + " exceeds the rank " + std::to_string(rank) + " of the SSP window");
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd u = svd.matrixU().col(j);
        Eigen::Index arg = 0;
        u.cwiseAbs().maxCoeff(&arg);
        if (u(arg) < 0) u = -u;
        for (std::size_t i = 0; i < good.size(); ++i) s.basis(good[i], j) = u(static_cast<Eigen::Index>(i));
    }
    return s;
}

ChannelOperator make_projector(const ArtifactSubspace& s) {
    const auto n = s.basis.rows();
    ChannelOperator op;
    op.kind = OperatorKind::SspProjector;
    op.rank_loss = s.k;
    op.matrix = Eigen::MatrixXd::Identity(n, n) - s.basis * s.basis.transpose();
    return op;
}

EpochSet apply_ssp(const EpochSet& epochs, const ChannelOperator& p) {
    if (p.size() != epochs.n_channels()) fail(ErrorCode::Data, "projector dimension does not match epochs");
    return apply(p, epochs);
}

ChannelOperator sir_operator(const ChannelOperator& p, const LeadField& lf, const Montage& channels, double lambda) {
    if (!(lambda > 0.0)) fail(ErrorCode::Numerical, "SIR regularisation must be positive");
    const auto n_ch = static_cast<Eigen::Index>(channels.size());
    if (lf.gain.rows() != n_ch || p.size() != n_ch) fail(ErrorCode::Data, "lead field rows do not match channels");
    const auto good = good_eeg_channels(channels);
    const auto n = static_cast<Eigen::Index>(good.size());

    const Eigen::MatrixXd lg = select_rows(lf.gain, good);
    Eigen::MatrixXd pg(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) pg(i, j) = p.matrix(good[static_cast<std::size_t>(i)], good[static_cast<std::size_t>(j)]);
    const Eigen::MatrixXd pl = pg * lg;
    Eigen::MatrixXd gram = pl * pl.transpose();
    const double mu = lambda * gram.trace() / static_cast<double>(n);
    gram.diagonal().array() += mu;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) fail(ErrorCode::Numerical, "SIR Gram matrix is singular");

    // Sources estimated from projected data, re-projected through the full L.
    const Eigen::MatrixXd inverse = pl.transpose() * ldlt.solve(pg);  // sources x good
    const Eigen::MatrixXd rows = lf.gain * inverse;                    // channels x good

    ChannelOperator op;
    op.kind = OperatorKind::SourceReconstruction;
    op.rank_loss = -p.rank_loss;
    op.matrix = Eigen::MatrixXd::Identity(n_ch, n_ch);
    for (auto c : eeg_channels(channels)) {
        op.matrix.row(c).setZero();
        for (Eigen::Index j = 0; j < n; ++j) op.matrix(c, good[static_cast<std::size_t>(j)]) = rows(c, j);
    }
    return op;
}

EpochSet apply_sir(const EpochSet& projected, const ChannelOperator& p, const LeadField& lf, double lambda) {
    const auto op = sir_operator(p, lf, projected.channels, lambda);
    EpochSet out = apply(op, projected);
    out.rank_deficiency = std::max(0, out.rank_deficiency);
    return out;
}

}  // namespace tmseeg
