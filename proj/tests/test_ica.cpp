#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "tmseeg/ica.hpp"
#include "tmseeg/montage.hpp"
#include "tmseeg/preprocess.hpp"
#include "tmseeg/sim.hpp"

using namespace tmseeg;

namespace {

constexpr double pi = std::numbers::pi;

EpochSet as_epochs(const Eigen::MatrixXd& x, double fs, const Montage& m) {
    EpochSet e;
    e.fs = fs;
    e.channels = m;
    e.trials = {x};
    e.rejected = {false};
    return e;
}

Montage first_channels(int n) {
    std::vector<std::string> names;
    for (const auto& ch : analysis30()) names.push_back(ch.name);
    names.resize(static_cast<std::size_t>(n));
    return make_montage(names);
}

std::vector<Eigen::Vector3d> positions(const Montage& m) {
    std::vector<Eigen::Vector3d> out;
    for (const auto& ch : m) out.push_back(ch.position);
    return out;
}

}  // namespace

TEST_CASE("two uniform sources are separated") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd s(2, 5000);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = u(rng);
    Eigen::Matrix2d a;
    a << 0.9, 0.4, -0.3, 0.8;
    InfomaxOptions opts;
    opts.n_components = 2;
    const auto d = fit_infomax(Eigen::MatrixXd(a * s), opts);
    CHECK(oracle::amari_distance(d.unmixing * a) < 0.05);
    CHECK((d.unmixing * d.mixing - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-6);
}

TEST_CASE("whitening of white data") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(4, 20000);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    InfomaxOptions opts;
    opts.n_components = 4;
    opts.max_iterations = 5;
    const auto d = fit_infomax(x, opts);
    const Eigen::MatrixXd w = d.pca_whitener * (x.colwise() - x.rowwise().mean());
    const Eigen::MatrixXd c = w * w.transpose() / static_cast<double>(x.cols());
    CHECK((c - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("fit is deterministic for a seed") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd x(3, 4000);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(rng) * u(rng);
    InfomaxOptions opts;
    opts.n_components = 3;
    opts.seed = 42;
    const auto a = fit_infomax(x, opts);
    const auto b = fit_infomax(x, opts);
    CHECK(a.unmixing == b.unmixing);
}

TEST_CASE("sample count requirement") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 500);
    InfomaxOptions opts;
    opts.n_components = 10;
    CHECK_THROWS_AS(fit_infomax(x, opts), Error);
}

TEST_CASE("project_out") {
    const auto m = first_channels(6);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd s(4, 6000);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = u(rng);
    Eigen::MatrixXd a(6, 4);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = u(rng);
    const auto e = as_epochs(a * s, 250.0, m);
    InfomaxOptions opts;
    opts.n_components = 4;
    const auto d = fit_infomax(e, opts);

    SUBCASE("empty set leaves data alone") {
        const auto out = project_out(e, d, {});
        CHECK((out.trials[0] - e.trials[0]).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("removing everything leaves only what PCA discarded") {
        const auto out = project_out(e, d, {0, 1, 2, 3});
        // Rank-4 data: nothing outside the kept subspace beyond the channel means.
        const Eigen::MatrixXd centred = out.trials[0].colwise() - out.trials[0].rowwise().mean();
        CHECK(centred.norm() < 1e-8 * e.trials[0].norm());
    }
    SUBCASE("linear in the data") {
        auto e2 = e;
        e2.trials[0] *= 3.0;
        const auto one = project_out(e, d, {1});
        const auto three = project_out(e2, d, {1});
        CHECK((three.trials[0] - 3.0 * one.trials[0]).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("component features") {
    const double fs = 250.0;
    const Eigen::Index n = 250 * 60;
    const auto m = first_channels(8);
    const auto pos = positions(m);
    Eigen::VectorXd topo = Eigen::VectorXd::Constant(8, 0.3);

    SUBCASE("60 Hz sine has a line peak") {
        std::vector<double> x(static_cast<std::size_t>(n));
        std::mt19937_64 rng(1);
        std::normal_distribution<double> g(0.0, 0.1);
        for (Eigen::Index j = 0; j < n; ++j) x[static_cast<std::size_t>(j)] = std::sin(2.0 * pi * 60.0 * static_cast<double>(j) / fs) + g(rng);
        CHECK(compute_component_features(x, fs, topo, pos).line_peak_db > 20.0);
    }
    SUBCASE("white noise has a flat slope") {
        std::vector<double> x(static_cast<std::size_t>(n));
        std::mt19937_64 rng(2);
        std::normal_distribution<double> g;
        for (auto& v : x) v = g(rng);
        CHECK(std::abs(compute_component_features(x, fs, topo, pos).spectral_slope) < 1.0);
    }
    SUBCASE("single-electrode topography is fully focal") {
        std::vector<double> x(static_cast<std::size_t>(n), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) x[static_cast<std::size_t>(j)] = std::sin(0.37 * static_cast<double>(j));
        Eigen::VectorXd single = Eigen::VectorXd::Zero(8);
        single(3) = -2.0;
        CHECK(compute_component_features(x, fs, single, pos).focality == doctest::Approx(1.0));
    }
}

TEST_CASE("classification rules") {
    ComponentFeatures eye;
    eye.frontal_loading = 2.5;
    eye.low_freq_ratio = 0.8;
    eye.focality = 0.4;
    CHECK(classify(eye).label == ComponentClass::Eye);

    ComponentFeatures noisy;
    noisy.focality = 0.95;
    CHECK(classify(noisy).label == ComponentClass::ChannelNoise);

    ComponentFeatures brain;
    brain.spectral_slope = -6.0;
    brain.alpha_peak_db = 4.0;
    brain.focality = 0.45;
    CHECK(classify(brain).label == ComponentClass::Brain);

    ComponentFeatures nothing;
    nothing.focality = 0.7;
    const auto other = classify(nothing);
    CHECK(other.label == ComponentClass::Other);
    const auto scores = classify(eye).scores;
    CHECK(std::max_element(scores.begin(), scores.end()) - scores.begin() == static_cast<long>(ComponentClass::Eye));
}

TEST_CASE("suggestion and override") {
    SimConfig cfg;
    cfg.seed = 3;
    cfg.n_trials = 20;
    cfg.brain_only();
    cfg.artifact(ArtifactClass::Ocular).enabled = true;
    cfg.artifact(ArtifactClass::Line).enabled = true;
    cfg.artifact(ArtifactClass::Line).amplitude_uv = 10.0;
    auto [rec, truth] = simulate(cfg);
    auto [ref, op] = average_reference(rec);
    const auto e = pseudo_epoch(ref, 3.0);

    InfomaxOptions opts;
    opts.n_components = 10;
    const auto d = fit_infomax(e, opts);
    const auto c = classify_all(d, e, e.channels);
    int eyes = 0, lines = 0;
    for (int k : c.suggested_reject) {
        eyes += c.labels[static_cast<std::size_t>(k)].label == ComponentClass::Eye;
        lines += c.labels[static_cast<std::size_t>(k)].label == ComponentClass::LineNoise;
    }
    CHECK(eyes >= 1);
    CHECK(lines >= 1);
    CHECK(c.reject == c.suggested_reject);

    const std::set<int> override_set{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto o = classify_all(d, e, e.channels, override_set);
    CHECK(o.reject == override_set);
    CHECK_THROWS_AS(classify_all(d, e, e.channels, std::set<int>{12}), Error);

    SUBCASE("removing the eye components quiets the frontal channels") {
        std::set<int> eye_set;
        for (std::size_t k = 0; k < c.labels.size(); ++k)
            if (c.labels[k].label == ComponentClass::Eye) eye_set.insert(static_cast<int>(k));
        const auto cleaned = project_out(ref, d, eye_set);
        const auto fp1 = *find_channel(rec.channels, "Fp1");
        const Eigen::MatrixXd blink = op.matrix * *truth.contribution(ArtifactClass::Ocular);
        const double before = (ref.data.row(fp1) - (op.matrix * truth.clean).row(fp1)).squaredNorm();
        const double after = (cleaned.data.row(fp1) - (op.matrix * truth.clean).row(fp1)).squaredNorm();
        CHECK(blink.row(fp1).squaredNorm() > 0.0);
        CHECK(after < 0.1 * before);
    }
}
