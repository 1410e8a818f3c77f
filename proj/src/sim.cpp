#include "tmseeg/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <json.hpp>

#include "tmseeg/io.hpp"
#include "tmseeg/leadfield.hpp"
#include "tmseeg/montage.hpp"
#include "tmseeg/spectral.hpp"

namespace tmseeg {

namespace {

using std::numbers::pi;

constexpr std::array<const char*, kArtifactClassCount> kClassNames = {
    "pulse", "step", "muscle", "decay", "recharge", "channel-noise", "ocular", "line", "somatosensory"};

// Stream families; the second seed word separates them from trial indices.
constexpr std::uint64_t kMontageStream = 1ull << 40;
constexpr std::uint64_t kContinuousStream = 2ull << 40;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t family, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(family), static_cast<std::uint32_t>(family >> 32),
                      static_cast<std::uint32_t>(id)};
    return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double normal(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Eigen::Vector3d random_direction(std::mt19937_64& rng) {
    Eigen::Vector3d v(normal(rng), normal(rng), normal(rng));
    return v.normalized();
}

// Evoked response: alternating Gaussian deflections, peak magnitude 1.
struct Deflection {
    double latency_s;
    double width_s;
    double weight;
};
constexpr std::array<Deflection, 6> kTep = {{
    {0.015, 0.004, -0.5}, {0.030, 0.006, 0.7}, {0.045, 0.007, -0.8},
    {0.060, 0.010, 1.0},  {0.100, 0.020, -1.0}, {0.180, 0.030, 0.8},
}};

double tep_shape(double t) {
    double v = 0.0;
    for (const auto& d : kTep) v += d.weight * std::exp(-0.5 * std::pow((t - d.latency_s) / d.width_s, 2));
    return v;
}

struct Grid {
    double fs;
    Eigen::Index block;
    Eigen::Index pre;
    Eigen::Index total;
    int trials;

    double t_in_block(Eigen::Index j) const { return static_cast<double>(j - pre) / fs; }
};

// 1/f^2 power (1/f amplitude) noise, unit RMS.
Eigen::RowVectorXd brown_noise(Eigen::Index n, double fs, std::mt19937_64& rng) {
    std::vector<double> white(static_cast<std::size_t>(n));
    for (auto& v : white) v = normal(rng);
    const auto m = fast_fft_size(static_cast<std::size_t>(n));
    auto spec = fft_real(white, m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t kk = std::min(k, m - k);
        const double f = static_cast<double>(kk) * fs / static_cast<double>(m);
        spec[k] *= 1.0 / std::max(f, 0.5);
    }
    spec[0] = 0.0;
    const auto back = ifft_real(spec);
    Eigen::RowVectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = back[static_cast<std::size_t>(i)];
    const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(n));
    return rms > 0.0 ? Eigen::RowVectorXd(out / rms) : out;
}

Eigen::Index channel_or_fail(const Montage& m, const std::string& name) {
    auto i = find_channel(m, name);
    if (!i) fail(ErrorCode::Config, "simulation montage has no channel " + name);
    return *i;
}

// Per-channel RMS of a block, averaged over channels.
double mean_rms(const Eigen::MatrixXd& x) {
    return (x.array().square().rowwise().mean().sqrt()).mean();
}

class Builder {
public:
    Builder(const SimConfig& cfg, Montage montage) : cfg_(cfg), montage_(std::move(montage)) {
        grid_.fs = cfg.fs;
        grid_.pre = static_cast<Eigen::Index>(std::llround(-cfg.epoch_window.first * cfg.fs));
        grid_.block = static_cast<Eigen::Index>(std::llround((cfg.epoch_window.second - cfg.epoch_window.first) * cfg.fs));
        grid_.trials = cfg.n_trials;
        grid_.total = grid_.block * cfg.n_trials;
        n_ch_ = static_cast<Eigen::Index>(montage_.size());
        target_ = montage_[static_cast<std::size_t>(channel_or_fail(montage_, cfg.brain.target))].position;
    }

    GroundTruth run() {
        GroundTruth gt;
        gt.fs = cfg_.fs;
        gt.epoch_window = cfg_.epoch_window;
        gt.block_samples = grid_.block;
        gt.channels = montage_;
        for (int b = 0; b < grid_.trials; ++b)
            gt.events.push_back({static_cast<std::int64_t>(b) * grid_.block + grid_.pre, kTmsEventCode});

        brain(gt);
        gt.sources.resize(static_cast<Eigen::Index>(courses_.size()), grid_.total);
        for (std::size_t k = 0; k < courses_.size(); ++k) gt.sources.row(static_cast<Eigen::Index>(k)) = courses_[k];
        courses_.clear();
        for (std::size_t c = 0; c < kArtifactClassCount; ++c) {
            const auto cls = static_cast<ArtifactClass>(c);
            const auto& spec = cfg_.artifact(cls);
            if (!spec.enabled) continue;
            Eigen::MatrixXd part = Eigen::MatrixXd::Zero(n_ch_, grid_.total);
            if (spec.amplitude_uv > 0.0) artifact(cls, spec.amplitude_uv, part);
            gt.contributions.emplace_back(cls, std::move(part));
        }
        return gt;
    }

private:
    // Runs `body(trial, rng, columns)` for every block with its own stream.
    template <typename F>
    void per_trial(ArtifactClass cls, Eigen::MatrixXd& out, F body) {
        parallel_for(static_cast<std::size_t>(grid_.trials), [&](std::size_t b) {
            auto rng = stream(cfg_.seed, b, static_cast<std::uint64_t>(cls) + 16);
            auto cols = out.middleCols(static_cast<Eigen::Index>(b) * grid_.block, grid_.block);
            body(rng, cols);
        });
    }

    Eigen::VectorXd coil_falloff(double width) const {
        Eigen::VectorXd g(n_ch_);
        for (Eigen::Index c = 0; c < n_ch_; ++c) {
            const double d2 = (montage_[static_cast<std::size_t>(c)].position - target_).squaredNorm();
            g(c) = std::exp(-d2 / (2.0 * width * width));
        }
        return g;
    }

    void add_source(GroundTruth& gt, const std::string& name, const Eigen::VectorXd& topo, const Eigen::RowVectorXd& course) {
        gt.clean.noalias() += topo * course;
        courses_.push_back(course);
        gt.source_names.push_back(name);
    }

    void brain(GroundTruth& gt) {
        const auto& b = cfg_.brain;
        gt.clean = Eigen::MatrixXd::Zero(n_ch_, grid_.total);
        courses_.clear();

        const Eigen::Vector3d motor = 0.75 * target_.normalized();
        const Eigen::VectorXd motor_topo = dipole_topography(montage_, motor, target_.normalized());
        const double motor_peak = motor_topo.cwiseAbs().maxCoeff();

        {
            Eigen::RowVectorXd course = Eigen::RowVectorXd::Zero(grid_.total);
            Eigen::RowVectorXd rebound = Eigen::RowVectorXd::Zero(grid_.total);
            for (int t = 0; t < grid_.trials; ++t) {
                auto rng = stream(cfg_.seed, static_cast<std::uint64_t>(t), 1);
                const double gain = 1.0 + 0.1 * normal(rng);
                const double phase = uniform(rng, 0.0, 2.0 * pi);
                for (Eigen::Index j = 0; j < grid_.block; ++j) {
                    const double tt = grid_.t_in_block(j);
                    const Eigen::Index col = t * grid_.block + j;
                    course(col) = gain * tep_shape(tt) * b.tep_uv / motor_peak;
                    const double env = std::exp(-0.5 * std::pow((tt - b.rebound_latency_s) / b.rebound_sigma_s, 2));
                    rebound(col) = env * std::cos(2.0 * pi * b.rebound_hz * tt + phase) * b.rebound_uv / motor_peak;
                }
            }
            if (b.tep_uv > 0.0) add_source(gt, "tep", motor_topo, course);
            if (b.rebound_uv > 0.0) add_source(gt, "beta-rebound", motor_topo, rebound);
        }

        if (b.alpha_uv > 0.0) {
            auto rng = stream(cfg_.seed, kContinuousStream, 1);
            const Eigen::Vector3d dir = Eigen::Vector3d(0.0, -0.9, 0.35).normalized();
            const Eigen::VectorXd topo = dipole_topography(montage_, 0.7 * dir, dir);
            const double p1 = uniform(rng, 0.0, 2.0 * pi), p2 = uniform(rng, 0.0, 2.0 * pi);
            Eigen::RowVectorXd course(grid_.total);
            for (Eigen::Index j = 0; j < grid_.total; ++j) {
                const double t = static_cast<double>(j) / grid_.fs;
                course(j) = std::sin(2.0 * pi * (b.alpha_hz - 0.4) * t + p1) + std::sin(2.0 * pi * (b.alpha_hz + 0.4) * t + p2);
            }
            // sin + sin has unit RMS per term, so the pair has RMS 1.
            course *= b.alpha_uv / topo.cwiseAbs().maxCoeff();
            add_source(gt, "alpha", topo, course);
        }

        if (b.background_uv > 0.0 && b.background_sources > 0) {
            auto rng = stream(cfg_.seed, kContinuousStream, 2);
            Eigen::MatrixXd topos(n_ch_, b.background_sources);
            Eigen::MatrixXd courses(b.background_sources, grid_.total);
            for (int k = 0; k < b.background_sources; ++k) {
                Eigen::Vector3d pos = random_direction(rng);
                pos.z() = std::abs(pos.z());
                pos = uniform(rng, 0.5, 0.8) * pos.normalized();
                topos.col(k) = dipole_topography(montage_, pos, random_direction(rng));
                courses.row(k) = brown_noise(grid_.total, grid_.fs, rng);
            }
            const double scale = b.background_uv / mean_rms(topos * courses);
            for (int k = 0; k < b.background_sources; ++k)
                add_source(gt, "background-" + std::to_string(k), topos.col(k), scale * courses.row(k));
        }
    }

    void artifact(ArtifactClass cls, double amp, Eigen::MatrixXd& out) {
        auto topo_rng = stream(cfg_.seed, kMontageStream, static_cast<std::uint64_t>(cls));
        const double fs = grid_.fs;
        switch (cls) {
            case ArtifactClass::Pulse: {
                Eigen::VectorXd g = (coil_falloff(0.5).array() + 0.2).matrix();
                for (Eigen::Index c = 0; c < n_ch_; ++c) g(c) *= 1.0 + 0.1 * normal(topo_rng);
                per_trial(cls, out, [&](auto& rng, auto cols) {
                    const double a = amp * (1.0 + 0.05 * normal(rng));
                    for (Eigen::Index j = grid_.pre; j < grid_.block; ++j) {
                        const double t = grid_.t_in_block(j);
                        if (t > 1e-3 + 1e-12) break;
                        cols.col(j) = g * (a * std::cos(pi * t / 1e-3));
                    }
                });
                break;
            }
            case ArtifactClass::Step: {
                Eigen::VectorXd g = coil_falloff(0.6);
                for (Eigen::Index c = 0; c < n_ch_; ++c) g(c) *= uniform(topo_rng, -1.0, 1.0);
                per_trial(cls, out, [&](auto& rng, auto cols) {
                    const double a = amp * (1.0 + 0.05 * normal(rng));
                    for (Eigen::Index j = grid_.pre; j < grid_.block; ++j) {
                        const double t = grid_.t_in_block(j);
                        if (t >= 7e-3) break;
                        cols.col(j) = g * (a * std::exp(-t / 1.5e-3));
                    }
                });
                break;
            }
            case ArtifactClass::Muscle: {
                Eigen::VectorXd g = Eigen::VectorXd::Zero(n_ch_);
                for (std::size_t i = 0; i < cfg_.muscle_channels.size(); ++i)
                    g(channel_or_fail(montage_, cfg_.muscle_channels[i])) = i == 0 ? 1.0 : 0.6;
                const double sigma = cfg_.muscle_sigma_ms * 1e-3;
                per_trial(cls, out, [&](auto& rng, auto cols) {
                    const double onset = uniform(rng, 5e-3, 10e-3);
                    const double carrier = uniform(rng, 115.0, 135.0);
                    const double phase = uniform(rng, 0.0, 2.0 * pi);
                    const double a = amp * (1.0 + 0.2 * normal(rng));
                    const double centre = onset + 2.5 * sigma;
                    for (Eigen::Index j = grid_.pre; j < grid_.block; ++j) {
                        const double t = grid_.t_in_block(j);
                        if (t < onset) continue;
                        if (t > centre + 4.0 * sigma) break;
                        const double env = std::exp(-0.5 * std::pow((t - centre) / sigma, 2));
                        cols.col(j) = g * (a * env * std::sin(2.0 * pi * carrier * (t - onset) + phase));
                    }
                });
                break;
            }
            case ArtifactClass::Decay: {
                // Electrode-local: the four electrodes nearest the coil, each
                // with its own amplitude, sign and time constant.
                std::vector<Eigen::Index> near = eeg_channels(montage_);
                std::sort(near.begin(), near.end(), [&](auto a, auto b) {
                    return (montage_[static_cast<std::size_t>(a)].position - target_).norm() <
                           (montage_[static_cast<std::size_t>(b)].position - target_).norm();
                });
                near.resize(std::min<std::size_t>(near.size(), 4));
                Eigen::VectorXd g = Eigen::VectorXd::Zero(n_ch_), tau = Eigen::VectorXd::Ones(n_ch_);
                for (auto c : near) {
                    g(c) = uniform(topo_rng, 0.5, 1.0) * (uniform(topo_rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
                    tau(c) = uniform(topo_rng, 10e-3, 30e-3);
                }
                per_trial(cls, out, [&](auto& rng, auto cols) {
                    const double onset = uniform(rng, 10e-3, 20e-3);
                    const double a = amp * (1.0 + 0.1 * normal(rng));
                    for (Eigen::Index j = grid_.pre; j < grid_.block; ++j) {
                        const double s = grid_.t_in_block(j) - onset;
                        if (s < 0.0) continue;
                        if (s >= 0.1) break;
                        const double taper = s < 0.06 ? 1.0 : 0.5 * (1.0 + std::cos(pi * (s - 0.06) / 0.04));
                        const double rise = 1.0 - std::exp(-s / 1e-3);
                        for (auto c : near) cols(c, j) = a * g(c) * rise * std::exp(-s / tau(c)) * taper;
                    }
                });
                break;
            }
            case ArtifactClass::Recharge: {
                Eigen::VectorXd g = (coil_falloff(0.6).array() + 0.2).matrix();
                for (Eigen::Index c = 0; c < n_ch_; ++c) g(c) *= 1.0 + 0.1 * normal(topo_rng);
                const double latency = cfg_.recharge_latency_s;
                per_trial(cls, out, [&](auto& rng, auto cols) {
                    const double a = amp * (1.0 + 0.05 * normal(rng));
                    for (Eigen::Index j = grid_.pre; j < grid_.block; ++j) {
                        const double s = grid_.t_in_block(j) - latency;
                        if (s < 0.0) continue;
                        if (s > 20e-3) break;
                        cols.col(j) = g * (a * std::sin(2.0 * pi * s / 4e-3) * std::exp(-s / 3e-3));
                    }
                });
                break;
            }
            case ArtifactClass::ChannelNoise: {
                Eigen::VectorXd sd(n_ch_);
                for (Eigen::Index c = 0; c < n_ch_; ++c) sd(c) = amp * uniform(topo_rng, 0.5, 1.5);
                for (const auto& name : cfg_.noisy_channels) sd(channel_or_fail(montage_, name)) *= cfg_.noisy_factor;
                for (Eigen::Index c = 0; c < n_ch_; ++c)
                    if (montage_[static_cast<std::size_t>(c)].kind != ChannelKind::Eeg) sd(c) = 0.0;
                per_trial(cls, out, [&](auto& rng, auto cols) {
                    for (Eigen::Index j = 0; j < grid_.block; ++j)
                        for (Eigen::Index c = 0; c < n_ch_; ++c) cols(c, j) = sd(c) * normal(rng);
                });
                break;
            }
            case ArtifactClass::Ocular: {
                const Eigen::Vector3d eyes(0.0, 1.0, -0.25);
                Eigen::VectorXd g(n_ch_);
                for (Eigen::Index c = 0; c < n_ch_; ++c)
                    g(c) = std::exp(-(montage_[static_cast<std::size_t>(c)].position - eyes).squaredNorm() / (2 * 0.35 * 0.35));
                g /= g.maxCoeff();
                auto rng = stream(cfg_.seed, kContinuousStream, 16 + static_cast<std::uint64_t>(cls));
                constexpr double sigma = 0.2;
                constexpr double carrier = 2.0;
                const auto half = static_cast<Eigen::Index>(std::ceil(4 * sigma * fs));
                std::exponential_distribution<double> gap(cfg_.blink_rate_hz);
                const double duration = static_cast<double>(grid_.total) / fs;
                for (double tb = gap(rng); tb < duration; tb += gap(rng)) {
                    const double a = amp * (1.0 + 0.2 * normal(rng));
                    const auto centre = static_cast<Eigen::Index>(std::llround(tb * fs));
                    for (Eigen::Index j = std::max<Eigen::Index>(0, centre - half); j <= std::min(grid_.total - 1, centre + half); ++j) {
                        const double s = static_cast<double>(j) / fs - tb;
                        out.col(j) += g * (a * std::cos(2.0 * pi * carrier * s) * std::exp(-0.5 * s * s / (sigma * sigma)));
                    }
                }
                break;
            }
            case ArtifactClass::Line: {
                Eigen::VectorXd g(n_ch_);
                for (Eigen::Index c = 0; c < n_ch_; ++c) g(c) = 1.0 + uniform(topo_rng, -0.5, 0.5);
                const double phase = uniform(topo_rng, 0.0, 2.0 * pi);
                Eigen::RowVectorXd course(grid_.total);
                for (Eigen::Index j = 0; j < grid_.total; ++j)
                    course(j) = amp * std::sin(2.0 * pi * cfg_.line_hz * static_cast<double>(j) / fs + phase);
                out = g * course;
                break;
            }
            case ArtifactClass::Somatosensory: {
                const Eigen::Vector3d dir = (target_.normalized() + Eigen::Vector3d(0.0, -0.25, 0.0)).normalized();
                const Eigen::VectorXd g = dipole_topography(montage_, 0.75 * dir, dir);
                const double peak = g.cwiseAbs().maxCoeff();
                per_trial(cls, out, [&](auto& rng, auto cols) {
                    const double a = amp * (1.0 + 0.1 * normal(rng)) / peak;
                    for (Eigen::Index j = grid_.pre; j < grid_.block; ++j)
                        cols.col(j) = g * (a * tep_shape(grid_.t_in_block(j) - 0.020));
                });
                break;
            }
        }
        for (Eigen::Index c = 0; c < n_ch_; ++c)
            if (montage_[static_cast<std::size_t>(c)].kind != ChannelKind::Eeg) out.row(c).setZero();
    }

    const SimConfig& cfg_;
    Montage montage_;
    Grid grid_{};
    Eigen::Index n_ch_ = 0;
    Eigen::Vector3d target_;
    std::vector<Eigen::RowVectorXd> courses_;
};

EpochSet split_blocks(const Eigen::MatrixXd& m, const GroundTruth& truth) {
    EpochSet e;
    e.fs = truth.fs;
    e.t0 = truth.epoch_window.first;
    e.channels = truth.channels;
    const Eigen::Index n = truth.block_samples > 0 ? m.cols() / truth.block_samples : 0;
    for (Eigen::Index b = 0; b < n; ++b) e.trials.push_back(m.middleCols(b * truth.block_samples, truth.block_samples));
    e.rejected.assign(e.trials.size(), false);
    return e;
}

EpochSet sum_parts(const EpochTruth& t) {
    EpochSet out = t.clean;
    for (const auto& [cls, part] : t.contributions)
        for (std::size_t i = 0; i < out.trials.size(); ++i) out.trials[i] += part.trials[i];
    return out;
}

}  // namespace

std::string to_string(ArtifactClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

std::optional<ArtifactClass> artifact_class_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kArtifactClassCount; ++i)
        if (s == kClassNames[i]) return static_cast<ArtifactClass>(i);
    return std::nullopt;
}

SimConfig& SimConfig::brain_only() {
    for (auto& a : artifacts) a.enabled = false;
    return *this;
}

void validate(const SimConfig& cfg) {
    if (cfg.n_trials < 1) fail(ErrorCode::Config, "n_trials must be positive");
    if (!(cfg.fs > 0.0)) fail(ErrorCode::Config, "fs must be positive");
    if (!(cfg.epoch_window.first <= 0.0 && cfg.epoch_window.second > 0.0))
        fail(ErrorCode::Config, "epoch window must contain the pulse");
    for (std::size_t i = 0; i < kArtifactClassCount; ++i)
        if (!(cfg.artifacts[i].amplitude_uv >= 0.0)) fail(ErrorCode::Config, std::string("negative amplitude for ") + kClassNames[i]);
    const auto& b = cfg.brain;
    for (double v : {b.tep_uv, b.background_uv, b.alpha_uv, b.rebound_uv})
        if (!(v >= 0.0)) fail(ErrorCode::Config, "brain amplitudes must be non-negative");
    const double nyquist = cfg.fs / 2.0;
    if (cfg.artifact(ArtifactClass::Muscle).enabled && nyquist <= 140.0)
        fail(ErrorCode::Config, "fs too low for the 110-140 Hz muscle band");
    if (cfg.artifact(ArtifactClass::Line).enabled && (cfg.line_hz != 50.0 && cfg.line_hz != 60.0))
        fail(ErrorCode::Config, "line frequency must be 50 or 60 Hz");
    if (cfg.artifact(ArtifactClass::Line).enabled && nyquist <= cfg.line_hz)
        fail(ErrorCode::Config, "fs too low for the line frequency");
    if (b.rebound_uv > 0.0 && nyquist <= b.rebound_hz) fail(ErrorCode::Config, "fs too low for the rebound frequency");
    if (cfg.artifact(ArtifactClass::Ocular).enabled && !(cfg.blink_rate_hz > 0.0))
        fail(ErrorCode::Config, "blink rate must be positive");
    if (!(cfg.muscle_sigma_ms > 0.0)) fail(ErrorCode::Config, "muscle_sigma_ms must be positive");
    if (!(cfg.recharge_latency_s > 0.0 && cfg.recharge_latency_s < cfg.epoch_window.second))
        fail(ErrorCode::Config, "recharge latency must fall inside the epoch");
    if (!(cfg.noisy_factor >= 0.0)) fail(ErrorCode::Config, "noisy_factor must be non-negative");
}

Eigen::MatrixXd GroundTruth::noisy() const {
    Eigen::MatrixXd out = clean;
    for (const auto& [cls, part] : contributions) out += part;
    return out;
}

const Eigen::MatrixXd* GroundTruth::contribution(ArtifactClass c) const {
    for (const auto& [cls, part] : contributions)
        if (cls == c) return &part;
    return nullptr;
}

std::pair<Recording, GroundTruth> simulate(const SimConfig& cfg) {
    validate(cfg);
    Montage montage = cfg.montage.empty() ? analysis30() : cfg.montage;
    GroundTruth gt = Builder(cfg, montage).run();
    Recording rec;
    rec.data = gt.noisy();
    rec.fs = cfg.fs;
    rec.channels = gt.channels;
    rec.events = gt.events;
    return {std::move(rec), std::move(gt)};
}

EpochTruth epoch_truth(const GroundTruth& truth) {
    EpochTruth out;
    out.clean = split_blocks(truth.clean, truth);
    for (const auto& [cls, part] : truth.contributions) out.contributions.emplace_back(cls, split_blocks(part, truth));
    out.noisy = sum_parts(out);
    return out;
}

EpochTruth transport_truth(const GroundTruth& truth, const PreprocessConfig& cfg, const PreprocessResult& decided) {
    auto carry = [&](const Eigen::MatrixXd& m) {
        Recording rec;
        rec.data = m;
        rec.fs = truth.fs;
        rec.channels = truth.channels;
        rec.events = truth.events;
        return replay_preprocess(rec, cfg, decided);
    };
    EpochTruth out;
    out.clean = carry(truth.clean);
    for (const auto& [cls, part] : truth.contributions) out.contributions.emplace_back(cls, carry(part));
    out.noisy = sum_parts(out);
    return out;
}

ScoreMetrics score(const EpochSet& cleaned, const EpochTruth& truth) {
    const auto& clean = truth.clean;
    if (cleaned.n_trials() != clean.n_trials() || cleaned.n_channels() != clean.n_channels() ||
        cleaned.n_samples() != clean.n_samples())
        fail(ErrorCode::Data, "cleaned data and ground truth differ in shape");
    if (cleaned.channels.size() != clean.channels.size()) fail(ErrorCode::Data, "montage size differs from the ground truth");
    for (std::size_t c = 0; c < cleaned.channels.size(); ++c)
        if (cleaned.channels[c].name != clean.channels[c].name) fail(ErrorCode::Data, "channel order differs from the ground truth");

    const auto channels = good_eeg_channels(cleaned.channels);
    const auto trials = cleaned.good_trials();
    if (channels.empty() || trials.empty()) fail(ErrorCode::Data, "nothing to score");

    ScoreMetrics m;
    const auto n_ch = static_cast<Eigen::Index>(channels.size());
    Eigen::VectorXd err = Eigen::VectorXd::Zero(n_ch);
    double err_in = 0.0, power = 0.0;
    std::vector<double> dots(truth.contributions.size(), 0.0), energies(truth.contributions.size(), 0.0);
    for (auto t : trials) {
        const auto ti = static_cast<std::size_t>(t);
        for (Eigen::Index k = 0; k < n_ch; ++k) {
            const auto c = channels[static_cast<std::size_t>(k)];
            const Eigen::RowVectorXd truth_row = clean.trials[ti].row(c);
            const Eigen::RowVectorXd r = cleaned.trials[ti].row(c) - truth_row;
            err(k) += r.squaredNorm();
            err_in += (truth.noisy.trials[ti].row(c) - truth_row).squaredNorm();
            power += truth_row.squaredNorm();
            for (std::size_t p = 0; p < truth.contributions.size(); ++p) {
                const auto& a = truth.contributions[p].second.trials[ti].row(c);
                dots[p] += r.dot(a);
                energies[p] += a.squaredNorm();
            }
        }
    }
    const auto per_channel = static_cast<double>(trials.size()) * static_cast<double>(cleaned.n_samples());
    const double total_err = err.sum();
    m.channel_rms_error = (err / per_channel).cwiseSqrt();
    for (auto c : channels) m.channel_names.push_back(cleaned.channels[static_cast<std::size_t>(c)].name);
    const double count = per_channel * static_cast<double>(n_ch);
    m.rms_error = std::sqrt(total_err / count);
    m.input_rms_error = std::sqrt(err_in / count);
    m.clean_rms = std::sqrt(power / count);
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto db = [](double num, double den) {
        if (den == 0.0) return num == 0.0 ? 0.0 : inf;
        if (num == 0.0) return -inf;
        return 10.0 * std::log10(num / den);
    };
    m.input_snr_db = db(power, err_in);
    m.output_snr_db = db(power, total_err);
    m.snr_improvement_db = db(err_in, total_err);
    for (std::size_t p = 0; p < truth.contributions.size(); ++p) {
        ClassResidual r{truth.contributions[p].first};
        r.input_energy = energies[p];
        if (energies[p] > 0.0) {
            r.residual_energy = dots[p] * dots[p] / energies[p];
            r.residual_fraction = dots[p] / energies[p];
        }
        m.residuals.push_back(r);
    }
    return m;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const std::string& suffix) {
    auto p = prefix;
    p += suffix;
    return p;
}

Recording as_recording(const GroundTruth& truth, const Eigen::MatrixXd& m) {
    Recording rec;
    rec.data = m;
    rec.fs = truth.fs;
    rec.channels = truth.channels;
    rec.events = truth.events;
    return rec;
}

}  // namespace

void save_truth(const GroundTruth& truth, const std::filesystem::path& prefix) {
    nlohmann::ordered_json index;
    index["format-version"] = kFormatVersion;
    index["fs"] = truth.fs;
    index["epoch-window"] = {truth.epoch_window.first, truth.epoch_window.second};
    index["block-samples"] = truth.block_samples;
    index["parts"] = nlohmann::json::array({"clean"});
    save_dataset(as_recording(truth, truth.clean), with_suffix(prefix, "-truth-clean"));
    for (const auto& [cls, part] : truth.contributions) {
        index["parts"].push_back(to_string(cls));
        save_dataset(as_recording(truth, part), with_suffix(prefix, "-truth-" + to_string(cls)));
    }
    index["sources"] = truth.source_names;
    index["source-samples"] = truth.sources.cols();
    write_f32(with_suffix(prefix, "-truth-sources.f32"), truth.sources);

    const auto path = with_suffix(prefix, ".truth.json");
    std::ofstream out(path);
    if (!out) throw DatasetError(DatasetFault::Unwritable, "cannot write " + path.string());
    out << index.dump(2) << '\n';
    if (!out) throw DatasetError(DatasetFault::Unwritable, "failed writing " + path.string());
}

GroundTruth load_truth(const std::filesystem::path& prefix) {
    const auto path = with_suffix(prefix, ".truth.json");
    std::ifstream in(path);
    if (!in) throw DatasetError(DatasetFault::MissingFile, "missing ground truth index " + path.string());
    GroundTruth gt;
    try {
        const auto index = nlohmann::json::parse(in);
        if (index.at("format-version").get<int>() != kFormatVersion)
            throw DatasetError(DatasetFault::MalformedSidecar, "unsupported truth format version");
        gt.fs = index.at("fs").get<double>();
        gt.epoch_window = {index.at("epoch-window").at(0).get<double>(), index.at("epoch-window").at(1).get<double>()};
        gt.block_samples = index.at("block-samples").get<Eigen::Index>();
        for (const auto& name : index.at("parts")) {
            const auto part_name = name.get<std::string>();
            Recording rec = load_dataset(with_suffix(prefix, "-truth-" + part_name));
            if (part_name == "clean") {
                gt.channels = rec.channels;
                gt.events = rec.events;
                gt.clean = std::move(rec.data);
                continue;
            }
            const auto cls = artifact_class_from_string(part_name);
            if (!cls) throw DatasetError(DatasetFault::MalformedSidecar, "unknown truth part " + part_name);
            gt.contributions.emplace_back(*cls, std::move(rec.data));
        }
        gt.source_names = index.at("sources").get<std::vector<std::string>>();
        gt.sources = read_f32(with_suffix(prefix, "-truth-sources.f32"), static_cast<Eigen::Index>(gt.source_names.size()),
                              index.at("source-samples").get<Eigen::Index>());
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(DatasetFault::MalformedSidecar, "malformed truth index: " + std::string(e.what()));
    }
    if (gt.clean.size() == 0) throw DatasetError(DatasetFault::MalformedSidecar, "truth index lacks the clean part");
    for (const auto& [cls, part] : gt.contributions)
        if (part.rows() != gt.clean.rows() || part.cols() != gt.clean.cols())
            throw DatasetError(DatasetFault::DimensionMismatch, "truth part " + to_string(cls) + " has a different shape");
    return gt;
}

}  // namespace tmseeg
