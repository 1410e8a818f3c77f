#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <unsupported/Eigen/FFT>

#include "tmseeg/montage.hpp"
#include "tmseeg/sim.hpp"

using namespace tmseeg;
namespace fs = std::filesystem;

namespace {

SimConfig small(std::uint64_t seed = 2) {
    SimConfig cfg;
    cfg.seed = seed;
    cfg.n_trials = 6;
    return cfg;
}

// One-sided periodogram summed over rows.
std::pair<std::vector<double>, std::vector<double>> spectrum(const Eigen::MatrixXd& x, double fs) {
    Eigen::FFT<double> fft;
    const auto n = static_cast<std::size_t>(x.cols());
    std::vector<double> power(n / 2 + 1, 0.0), freqs(n / 2 + 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Eigen::RowVectorXd copy = x.row(r);
        const std::vector<double> row(copy.data(), copy.data() + n);
        std::vector<std::complex<double>> out;
        fft.fwd(out, row);
        for (std::size_t k = 0; k <= n / 2; ++k) power[k] += std::norm(out[k]);
    }
    for (std::size_t k = 0; k <= n / 2; ++k) freqs[k] = static_cast<double>(k) * fs / static_cast<double>(n);
    return {freqs, power};
}

double band_fraction(const std::pair<std::vector<double>, std::vector<double>>& s, double lo, double hi) {
    double in = 0.0, all = 0.0;
    for (std::size_t k = 0; k < s.first.size(); ++k) {
        all += s.second[k];
        if (s.first[k] >= lo && s.first[k] <= hi) in += s.second[k];
    }
    return in / all;
}

}  // namespace

TEST_CASE("everything off leaves only the clean signal") {
    auto cfg = small();
    cfg.brain_only();
    auto [rec, truth] = simulate(cfg);
    CHECK(rec.data == truth.clean);
    CHECK(truth.contributions.empty());
    CHECK(truth.sources.rows() == static_cast<Eigen::Index>(truth.source_names.size()));
    CHECK(truth.sources.cols() == rec.n_samples());
}

TEST_CASE("artifacts add up to the emitted data") {
    const auto cfg = small();
    auto [rec, truth] = simulate(cfg);
    CHECK(rec.data == truth.noisy());
    CHECK(rec.events.size() == static_cast<std::size_t>(cfg.n_trials));
    CHECK(rec.n_samples() == truth.block_samples * cfg.n_trials);
    for (const auto& [cls, m] : truth.contributions) {
        CHECK(m.rows() == rec.n_channels());
        CHECK(m.cols() == rec.n_samples());
    }
}

TEST_CASE("same seed, same data") {
    const auto a = simulate(small(9));
    const auto b = simulate(small(9));
    CHECK(a.first.data == b.first.data);
    const auto c = simulate(small(10));
    CHECK(a.first.data != c.first.data);
}

TEST_CASE("pulse is confined to its first millisecond") {
    auto cfg = small();
    cfg.brain_only();
    cfg.artifact(ArtifactClass::Pulse).enabled = true;
    auto [rec, truth] = simulate(cfg);
    const auto& pulse = *truth.contribution(ArtifactClass::Pulse);
    const auto width = static_cast<Eigen::Index>(std::llround(1e-3 * rec.fs));
    for (Eigen::Index j = 0; j < pulse.cols(); ++j) {
        if (pulse.col(j).cwiseAbs().maxCoeff() == 0.0) continue;
        bool near = false;
        for (const auto& e : rec.events) near = near || (j >= e.sample && j <= e.sample + width);
        CHECK(near);
    }
    CHECK(pulse.cwiseAbs().maxCoeff() > 1000.0);
}

TEST_CASE("muscle energy sits in the 110-140 Hz band") {
    auto cfg = small(3);
    cfg.n_trials = 20;
    cfg.brain_only();
    cfg.artifact(ArtifactClass::Muscle).enabled = true;
    auto [rec, truth] = simulate(cfg);
    const auto s = spectrum(*truth.contribution(ArtifactClass::Muscle), rec.fs);
    const auto peak = std::max_element(s.second.begin(), s.second.end()) - s.second.begin();
    CHECK(s.first[static_cast<std::size_t>(peak)] >= 110.0);
    CHECK(s.first[static_cast<std::size_t>(peak)] <= 140.0);
    CHECK(band_fraction(s, 110.0, 140.0) >= 0.8);
}

TEST_CASE("ocular energy sits below 4 Hz") {
    auto cfg = small(4);
    cfg.n_trials = 30;
    cfg.brain_only();
    cfg.artifact(ArtifactClass::Ocular).enabled = true;
    auto [rec, truth] = simulate(cfg);
    const auto s = spectrum(*truth.contribution(ArtifactClass::Ocular), rec.fs);
    CHECK(band_fraction(s, 0.5, 4.0) >= 0.8);
    const auto fp1 = *find_channel(rec.channels, "Fp1"), oz = *find_channel(rec.channels, "Oz");
    const auto& blink = *truth.contribution(ArtifactClass::Ocular);
    CHECK(blink.row(fp1).norm() > 5.0 * blink.row(oz).norm());
}

TEST_CASE("scoring") {
    auto cfg = small(6);
    auto [rec, truth] = simulate(cfg);
    const auto et = epoch_truth(truth);

    const auto perfect = score(et.clean, et);
    CHECK(perfect.rms_error == 0.0);
    CHECK(std::isinf(perfect.snr_improvement_db));
    CHECK(perfect.snr_improvement_db > 0.0);

    const auto same = score(et.noisy, et);
    CHECK(same.snr_improvement_db == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(same.rms_error == doctest::Approx(same.input_rms_error));

    auto half = et.clean;
    for (auto& t : half.trials) t *= 0.5;
    const auto h = score(half, et);
    CHECK(h.rms_error == doctest::Approx(0.5 * h.clean_rms));
    CHECK(h.channel_names.size() == 30);
}

TEST_CASE("config checks") {
    auto cfg = small();
    cfg.fs = 250.0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = small();
    cfg.n_trials = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = small();
    cfg.noisy_channels = {"XX9"};
    CHECK_THROWS_AS(simulate(cfg), Error);
    for (std::size_t k = 0; k < kArtifactClassCount; ++k) {
        const auto cls = static_cast<ArtifactClass>(k);
        CHECK(artifact_class_from_string(to_string(cls)) == cls);
    }
}

TEST_CASE("truth survives a save and load") {
    auto cfg = small(7);
    cfg.n_trials = 3;
    auto [rec, truth] = simulate(cfg);
    const auto dir = fs::temp_directory_path() / "tmseeg-test-sim";
    fs::create_directories(dir);
    save_truth(truth, dir / "run");
    const auto back = load_truth(dir / "run");
    CHECK(back.fs == truth.fs);
    CHECK(back.block_samples == truth.block_samples);
    CHECK(back.events == truth.events);
    CHECK(back.contributions.size() == truth.contributions.size());
    CHECK((back.clean - truth.clean).cwiseAbs().maxCoeff() <= 1e-6 * truth.clean.cwiseAbs().maxCoeff());
    CHECK(back.source_names == truth.source_names);
    fs::remove_all(dir);
}
