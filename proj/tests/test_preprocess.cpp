#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "tmseeg/montage.hpp"
#include "tmseeg/preprocess.hpp"
#include "tmseeg/sim.hpp"

using namespace tmseeg;

namespace {

constexpr double pi = std::numbers::pi;

Recording noise_recording(const std::vector<double>& sds, Eigen::Index n, std::uint64_t seed, double fs = 250.0) {
    std::vector<std::string> names;
    for (const auto& ch : analysis30()) names.push_back(ch.name);
    names.resize(sds.size());
    Recording rec;
    rec.fs = fs;
    rec.channels = make_montage(names);
    rec.data.resize(static_cast<Eigen::Index>(sds.size()), n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (Eigen::Index c = 0; c < rec.data.rows(); ++c)
        for (Eigen::Index j = 0; j < n; ++j) rec.data(c, j) = sds[static_cast<std::size_t>(c)] * g(rng);
    return rec;
}

Eigen::RowVectorXd tone(double f, double fs, Eigen::Index n, double phase = 0.0) {
    Eigen::RowVectorXd x(n);
    for (Eigen::Index j = 0; j < n; ++j) x(j) = std::sin(2.0 * pi * f * static_cast<double>(j) / fs + phase);
    return x;
}

EpochSet one_trial(const Eigen::RowVectorXd& x, double fs, double t0) {
    EpochSet e;
    e.fs = fs;
    e.t0 = t0;
    e.channels = make_montage({"C3"});
    e.trials = {x};
    e.rejected = {false};
    return e;
}

}  // namespace

TEST_CASE("fir design") {
    const auto f = design_fir(1000.0, 1.0, 40.0);
    CHECK(f.taps.size() % 2 == 1);
    for (std::size_t i = 0; i < f.taps.size() / 2; ++i) CHECK(f.taps[i] == doctest::Approx(f.taps[f.taps.size() - 1 - i]));
    CHECK(f.gain(0.0) < 1e-3);
    CHECK(f.gain(20.5) == doctest::Approx(1.0).epsilon(0.01));
    CHECK_THROWS_AS(design_fir(1000.0, 1.0, 40.0, 0.001, 5.0, 1001), Error);
}

TEST_CASE("filter tone response") {
    const double fs = 1000.0;
    const auto f = design_fir(fs, 1.0, 40.0);
    const Eigen::Index n = 20000;
    Eigen::MatrixXd x(3, n);
    x.row(0).setOnes();
    x.row(1) = tone(10.0, fs, n);
    x.row(2) = tone(100.0, fs, n);
    const auto y = filter_rows_zero_phase(x, f);
    const auto mid = [&](Eigen::Index r) { return Eigen::RowVectorXd(y.row(r).segment(n / 4, n / 2)); };
    CHECK(mid(0).cwiseAbs().maxCoeff() < 1e-3);
    const double a10 = oracle::tone_amplitude(mid(1), fs, 10.0);
    CHECK(a10 >= 0.99);
    CHECK(a10 <= 1.01);
    CHECK(oracle::tone_amplitude(mid(2), fs, 100.0) <= 0.01);
    // single-pass response squared
    CHECK(a10 == doctest::Approx(f.gain(10.0) * f.gain(10.0)).epsilon(1e-3));
}

TEST_CASE("zero-phase filtering") {
    const double fs = 250.0;
    const auto f = design_fir(fs, 1.0, 40.0);
    const Eigen::Index n = 4001;

    SUBCASE("impulse response is symmetric") {
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, n);
        x(0, n / 2) = 1.0;
        const auto y = filter_rows_zero_phase(x, f);
        for (Eigen::Index k = 1; k < 300; ++k) CHECK(y(0, n / 2 - k) == doctest::Approx(y(0, n / 2 + k)).epsilon(1e-9));
    }
    SUBCASE("in-band sine keeps its phase") {
        Eigen::MatrixXd x(1, n);
        x.row(0) = tone(10.0, fs, n, 0.4);
        const auto y = filter_rows_zero_phase(x, f);
        Eigen::Index best = 0;
        double best_val = -1e300;
        for (Eigen::Index lag = -10; lag <= 10; ++lag) {
            double acc = 0.0;
            for (Eigen::Index j = 1000; j < 3000; ++j) acc += x(0, j) * y(0, j + lag);
            if (acc > best_val) {
                best_val = acc;
                best = lag;
            }
        }
        CHECK(best == 0);
    }
    SUBCASE("zeros stay zero") {
        CHECK(filter_rows_zero_phase(Eigen::MatrixXd::Zero(2, n), f).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("downsampling") {
    Recording rec;
    rec.fs = 1000.0;
    rec.channels = make_montage({"C3"});
    const Eigen::Index n = 8000;
    rec.data.resize(1, n);
    rec.data.row(0) = tone(20.0, 1000.0, n);
    rec.events = {{1000, 1}};

    SUBCASE("every fourth sample after a prior low-pass") {
        Recording low = rec;
        low.lowpass_hz = 45.0;
        const auto d = downsample(low, 250.0);
        CHECK(d.n_samples() == n / 4);
        for (Eigen::Index j = 0; j < d.n_samples(); j += 97) CHECK(d.data(0, j) == rec.data(0, 4 * j));
        CHECK(d.events.front().sample == 250);
    }
    SUBCASE("anti-aliased amplitude is preserved") {
        const auto d = downsample(rec, 250.0);
        const Eigen::RowVectorXd mid = d.data.row(0).segment(500, 1000);
        Eigen::RowVectorXd shifted(1000);
        for (Eigen::Index j = 0; j < 1000; ++j) shifted(j) = mid(j);
        // phase of the kept samples starts at sample 2000 of the original
        CHECK(oracle::tone_amplitude(shifted, 250.0, 20.0) == doctest::Approx(1.0).epsilon(0.01));
    }
    SUBCASE("non-integer ratios are refused") { CHECK_THROWS_AS(downsample(rec, 300.0), Error); }
}

TEST_CASE("pulse excision") {
    const double fs = 1000.0;
    const Eigen::Index n = 200;
    SUBCASE("constant and ramp are unchanged") {
        Eigen::RowVectorXd c = Eigen::RowVectorXd::Constant(n, 3.0);
        const auto e = excise_pulse(one_trial(c, fs, -0.1), {-0.002, 0.010});
        CHECK((e.trials[0] - c).cwiseAbs().maxCoeff() < 1e-12);

        Eigen::RowVectorXd r(n);
        for (Eigen::Index j = 0; j < n; ++j) r(j) = 0.5 * static_cast<double>(j) - 7.0;
        const auto er = excise_pulse(one_trial(r, fs, -0.1), {-0.002, 0.010});
        CHECK((er.trials[0] - r).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("pulse is bridged within its neighbours") {
        Eigen::RowVectorXd x = tone(10.0, fs, n) * 5.0;
        const auto t0 = -0.1;
        for (Eigen::Index j = 100; j < 101; ++j) x(j) += 5000.0;
        const auto e = excise_pulse(one_trial(x, fs, t0), {-0.002, 0.010});
        const auto a = e.trials[0](0, 97), b = e.trials[0](0, 111);
        double peak = 0.0;
        for (Eigen::Index j = 98; j <= 110; ++j) peak = std::max(peak, std::abs(e.trials[0](0, j)));
        CHECK(peak <= std::max(std::abs(a), std::abs(b)) + 1e-9);
    }
}

TEST_CASE("bad channel rule") {
    SUBCASE("one loud channel among 29 quiet ones") {
        std::vector<double> sds(30, 1.0);
        sds[7] = 100.0;
        const auto rec = noise_recording(sds, 5000, 3);
        // mean ~ 4.3, SD ~ 17.8, upper bound ~ 39.9 < 100
        const double mean = (29.0 + 100.0) / 30.0;
        const double sd = std::sqrt((29.0 * (1.0 - mean) * (1.0 - mean) + (100.0 - mean) * (100.0 - mean)) / 30.0);
        CHECK(mean + 2.0 * sd == doctest::Approx(39.9).epsilon(0.01));
        const auto bad = detect_bad_channels(rec);
        REQUIRE(bad.size() == 1);
        CHECK(bad[0].index == 7);
    }
    SUBCASE("identical SDs flag nothing") {
        Recording rec = noise_recording({1, 1, 1, 1}, 100, 9);
        for (Eigen::Index c = 1; c < 4; ++c) rec.data.row(c) = rec.data.row(0);
        CHECK(detect_bad_channels(rec).empty());
    }
    SUBCASE("matches the long double oracle") {
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> u(0.5, 3.0);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> sds(30);
            for (auto& s : sds) s = u(rng);
            const auto rec = noise_recording(sds, 1000, static_cast<std::uint64_t>(trial));
            std::vector<long double> measured;
            for (Eigen::Index c = 0; c < 30; ++c) {
                const Eigen::RowVectorXd row = rec.data.row(c);
                measured.push_back(oracle::population_sd(row.data(), 1000));
            }
            std::vector<long> got;
            for (const auto& b : detect_bad_channels(rec)) got.push_back(static_cast<long>(b.index));
            CHECK(got == oracle::outside_band(measured, 2.0));
        }
    }
}

TEST_CASE("amplitude rejection") {
    EpochSet e;
    e.fs = 250.0;
    e.t0 = -0.1;
    e.channels = make_montage({"C3", "C4"});
    e.trials = {Eigen::MatrixXd::Zero(2, 50), Eigen::MatrixXd::Zero(2, 50)};
    e.trials[0](0, 10) = 499.0;
    e.trials[1](1, 20) = -501.0;
    const auto [out, report] = reject_amplitude(e, 500.0);
    CHECK_FALSE(out.rejected[0]);
    CHECK(out.rejected[1]);
    REQUIRE(report.rejected_trials.size() == 1);
    CHECK(report.rejected_trials[0].peak_uv == doctest::Approx(501.0));
    CHECK(out.trials[1](1, 20) == -501.0);

    const auto [none, r2] = reject_amplitude(e, std::numeric_limits<double>::infinity());
    CHECK(r2.rejected_trials.empty());
}

TEST_CASE("pseudo epochs") {
    Recording rec = noise_recording({1, 1}, 2625, 1);  // 10.5 s at 250 Hz
    auto p = pseudo_epoch(rec, 1.0);
    CHECK(p.n_trials() == 10);
    CHECK(p.n_samples() == 250);
    CHECK(p.trials[3](1, 7) == rec.data(1, 3 * 250 + 7));

    Recording long_rec = noise_recording({1}, 150 * 250, 2);
    CHECK(pseudo_epoch(long_rec, 3.0).n_trials() == 50);
    long_rec.data.conservativeResize(1, 150 * 250 - 1);
    CHECK(pseudo_epoch(long_rec, 3.0).n_trials() == 49);
}

TEST_CASE("preprocessing recipe") {
    SimConfig cfg;
    cfg.n_trials = 12;
    auto [rec, truth] = simulate(cfg);
    const PreprocessConfig pc;
    const auto res = run_preprocess(rec, pc);
    CHECK(res.epochs.fs == 250.0);
    CHECK(res.epochs.n_trials() == 12);
    CHECK(res.epochs.n_samples() == 750);
    CHECK(res.epochs.t0 == doctest::Approx(-1.0));
    CHECK(res.pseudo_epochs.fs == 250.0);

    const auto good = good_eeg_channels(res.epochs.channels);
    for (const auto& t : res.epochs.trials) {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
            double s = 0.0;
            for (auto c : good) s += t(c, j);
            worst = std::max(worst, std::abs(s));
        }
        CHECK(worst < 1e-8);
    }

    SUBCASE("deterministic") {
        const auto again = run_preprocess(rec, pc);
        CHECK(again.epochs.trials[5] == res.epochs.trials[5]);
    }
    SUBCASE("replay reproduces the recipe on the same data") {
        const auto replay = replay_preprocess(rec, pc, res);
        double gap = 0.0;
        for (std::size_t t = 0; t < replay.trials.size(); ++t)
            gap = std::max(gap, (replay.trials[t] - res.epochs.trials[t]).cwiseAbs().maxCoeff());
        CHECK(gap < 1e-9);
    }
}
