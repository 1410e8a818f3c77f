#include "tmseeg/ica.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace tmseeg {

namespace {

constexpr double kMinLearningRate = 1e-6;
constexpr double kBlowupLimit = 1e8;
constexpr double kRestartFactor = 0.8;

// Fisher-Yates with an explicit engine so the permutation is identical across
// standard library implementations.
void shuffle(std::vector<Eigen::Index>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

Eigen::VectorXd kurtosis_signs(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& z, int n_samples,
                               std::mt19937_64& rng) {
    const Eigen::Index t = z.cols();
    Eigen::MatrixXd part;
    if (n_samples >= t) {
        part = weights * z;
    } else {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n_samples));
        for (auto& i : idx) i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(t));
        part = weights * z(Eigen::all, idx);
    }
    Eigen::VectorXd signs(weights.rows());
    for (Eigen::Index r = 0; r < part.rows(); ++r) {
        const double m2 = part.row(r).array().square().mean();
        const double m4 = part.row(r).array().square().square().mean();
        const double kurt = m4 / (m2 * m2) - 3.0;
        signs(r) = kurt >= 0.0 ? 1.0 : -1.0;
    }
    return signs;
}

}  // namespace

Eigen::MatrixXd Decomposition::activations(const Eigen::MatrixXd& data) const {
    return unmixing * select_rows(data, channel_index);
}

Decomposition fit_infomax(const Eigen::MatrixXd& x, const InfomaxOptions& opts) {
    const Eigen::Index n_ch = x.rows();
    const Eigen::Index t = x.cols();
    const Eigen::Index n = opts.n_components;
    if (n < 1 || n > n_ch) fail(ErrorCode::Config, "n_components must lie in [1, channels]");
    if (opts.check_sample_count && t < 20 * n_ch * n_ch)
        fail(ErrorCode::Data, "ICA needs at least 20 x channels^2 = " + std::to_string(20 * n_ch * n_ch) +
                                  " samples, got " + std::to_string(t));

    const Eigen::VectorXd mean = x.rowwise().mean();
    const Eigen::MatrixXd centred = x.colwise() - mean;
    const Eigen::MatrixXd cov = centred * centred.transpose() / static_cast<double>(t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) fail(ErrorCode::Numerical, "PCA eigendecomposition failed");

    // Top-n eigenpairs, largest first, sign-normalised.
    Eigen::MatrixXd basis(n_ch, n);
    Eigen::VectorXd variances(n);
    const double top = eig.eigenvalues()(n_ch - 1);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index src = n_ch - 1 - k;
        variances(k) = eig.eigenvalues()(src);
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        basis.col(k) = v;
    }
    if (!(top > 0.0) || variances(n - 1) <= 1e-10 * top)
        fail(ErrorCode::Numerical, "data rank is below the requested " + std::to_string(n) + " components");

    const Eigen::MatrixXd whitener = variances.cwiseSqrt().cwiseInverse().asDiagonal() * basis.transpose();
    const Eigen::MatrixXd z = whitener * centred;

    std::mt19937_64 rng(opts.seed);
    const Eigen::Index block = std::min<Eigen::Index>(opts.block_size, t);
    const Eigen::Index blocks_per_step = t / block;
    const Eigen::MatrixXd block_identity = Eigen::MatrixXd::Identity(n, n) * static_cast<double>(block);
    const double initial_rate = 0.01 / std::sqrt(static_cast<double>(n));

    Eigen::MatrixXd weights = Eigen::MatrixXd::Identity(n, n);
    double rate = initial_rate;
    Eigen::VectorXd signs = Eigen::VectorXd::Ones(n);
    Eigen::MatrixXd old_delta;
    double old_change = 0.0;
    double change = 0.0;
    int step = 0;
    bool converged = false;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(t));

    while (step < opts.max_iterations) {
        const Eigen::MatrixXd old_weights = weights;
        signs = kurtosis_signs(weights, z, opts.kurtosis_samples, rng);
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        shuffle(order, rng);

        bool blew_up = false;
        for (Eigen::Index b = 0; b < blocks_per_step; ++b) {
            const std::vector<Eigen::Index> idx(order.begin() + b * block, order.begin() + (b + 1) * block);
            const Eigen::MatrixXd u = weights * z(Eigen::all, idx);
            const Eigen::MatrixXd y = u.array().tanh().matrix();
            const Eigen::MatrixXd grad =
                block_identity - signs.asDiagonal() * (y * u.transpose()) - u * u.transpose();
            weights += rate * grad * weights;
            if (!weights.allFinite() || weights.cwiseAbs().maxCoeff() > kBlowupLimit) {
                blew_up = true;
                break;
            }
        }
        if (blew_up) {
            weights.setIdentity();
            rate *= kRestartFactor;
            old_delta.resize(0, 0);
            step = 0;
            if (rate < kMinLearningRate) fail(ErrorCode::Numerical, "Infomax diverged at every learning rate");
            continue;
        }

        ++step;
        const Eigen::MatrixXd delta = weights - old_weights;
        change = delta.squaredNorm();
        if (step == 1) {
            old_delta = delta;
            old_change = change;
        } else if (old_delta.size() > 0) {
            const double cosine = (delta.array() * old_delta.array()).sum() / std::sqrt(change * old_change);
            const double angle = std::acos(std::clamp(cosine, -1.0, 1.0)) * 180.0 / std::numbers::pi;
            if (angle > opts.anneal_angle_deg) {
                rate *= opts.anneal_factor;
                old_delta = delta;
                old_change = change;
            }
        }
        if (step > 2 && change < opts.stop_delta) {
            converged = true;
            break;
        }
        if (rate < kMinLearningRate) break;
    }

    Decomposition d;
    d.n_components = static_cast<int>(n);
    d.pca_whitener = whitener;
    d.unmixing = weights * whitener;
    d.mixing = basis * variances.cwiseSqrt().asDiagonal() * weights.inverse();
    d.iterations = step;
    d.final_delta = change;
    d.converged = converged;

    // Order by back-projected variance, largest first; sign so the largest
    // topography weight is positive.
    const Eigen::MatrixXd act = d.unmixing * centred;
    std::vector<Eigen::Index> rank(static_cast<std::size_t>(n));
    std::iota(rank.begin(), rank.end(), Eigen::Index{0});
    Eigen::VectorXd power(n);
    for (Eigen::Index k = 0; k < n; ++k) power(k) = d.mixing.col(k).squaredNorm() * act.row(k).squaredNorm();
    std::stable_sort(rank.begin(), rank.end(), [&](auto a, auto b) { return power(a) > power(b); });
    Eigen::MatrixXd unmixing(n, n_ch), mixing(n_ch, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto src = rank[static_cast<std::size_t>(k)];
        Eigen::Index arg = 0;
        d.mixing.col(src).cwiseAbs().maxCoeff(&arg);
        const double s = d.mixing(arg, src) < 0 ? -1.0 : 1.0;
        mixing.col(k) = s * d.mixing.col(src);
        unmixing.row(k) = s * d.unmixing.row(src);
    }
    d.mixing = std::move(mixing);
    d.unmixing = std::move(unmixing);
    d.channel_index.resize(static_cast<std::size_t>(n_ch));
    std::iota(d.channel_index.begin(), d.channel_index.end(), Eigen::Index{0});
    return d;
}

Decomposition fit_infomax(const EpochSet& epochs, const InfomaxOptions& opts) {
    const auto good = good_eeg_channels(epochs.channels);
    if (static_cast<Eigen::Index>(good.size()) < opts.n_components)
        fail(ErrorCode::Config, "n_components exceeds the good-channel count");
    auto d = fit_infomax(select_rows(epochs.concatenate_good(), good), opts);
    d.channel_index = good;
    return d;
}

namespace {

void check_remove(const Decomposition& d, const std::set<int>& remove) {
    for (int k : remove) {
        if (k < 0 || k >= d.n_components) fail(ErrorCode::Config, "component index " + std::to_string(k) + " out of range");
    }
}

void project_out_in_place(Eigen::MatrixXd& data, const Decomposition& d, const std::set<int>& remove) {
    if (remove.empty()) return;
    std::vector<Eigen::Index> cols(remove.begin(), remove.end());
    const Eigen::MatrixXd good = select_rows(data, d.channel_index);
    const Eigen::MatrixXd removed = d.mixing(Eigen::all, cols) * (d.unmixing(cols, Eigen::all) * good);
    for (std::size_t i = 0; i < d.channel_index.size(); ++i)
        data.row(d.channel_index[i]) -= removed.row(static_cast<Eigen::Index>(i));
}

}  // namespace

EpochSet project_out(const EpochSet& epochs, const Decomposition& d, const std::set<int>& remove) {
    check_remove(d, remove);
    EpochSet out = epochs;
    parallel_for(out.trials.size(), [&](std::size_t t) { project_out_in_place(out.trials[t], d, remove); });
    out.rank_deficiency += static_cast<int>(remove.size());
    return out;
}

Recording project_out(const Recording& rec, const Decomposition& d, const std::set<int>& remove) {
    check_remove(d, remove);
    Recording out = rec;
    project_out_in_place(out.data, d, remove);
    return out;
}

}  // namespace tmseeg
