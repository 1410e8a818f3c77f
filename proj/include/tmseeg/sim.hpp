#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tmseeg/core.hpp"
#include "tmseeg/preprocess.hpp"

namespace tmseeg {

enum class ArtifactClass { Pulse, Step, Muscle, Decay, Recharge, ChannelNoise, Ocular, Line, Somatosensory };
inline constexpr std::size_t kArtifactClassCount = 9;

std::string to_string(ArtifactClass c);
std::optional<ArtifactClass> artifact_class_from_string(const std::string& s);

struct ArtifactSpec {
    bool enabled = true;
    double amplitude_uv = 0.0;
};

struct BrainSpec {
    double tep_uv = 8.0;          ///< peak sensor amplitude of the evoked response
    double background_uv = 2.0;   ///< mean sensor RMS of the 1/f^2 background
    int background_sources = 20;
    double alpha_uv = 2.0;        ///< sensor RMS at the strongest occipital channel
    double alpha_hz = 10.0;
    double rebound_uv = 3.0;      ///< 0 disables the beta rebound
    double rebound_hz = 20.0;
    double rebound_latency_s = 0.3;
    double rebound_sigma_s = 0.1;
    std::string target = "C3";    ///< electrode above the stimulated dipole
};

struct SimConfig {
    std::uint64_t seed = 1;
    int n_trials = 50;
    double fs = 1000.0;
    std::pair<double, double> epoch_window{-1.0, 2.0};
    Montage montage;  ///< empty means analysis30()
    BrainSpec brain;
    std::array<ArtifactSpec, kArtifactClassCount> artifacts{{
        {true, 5000.0},  // pulse
        {true, 300.0},   // step
        {true, 100.0},   // muscle
        {true, 200.0},   // decay
        {true, 50.0},    // recharge
        {true, 1.0},     // channel noise, base SD
        {true, 80.0},    // ocular
        {true, 5.0},     // line
        {false, 2.0},    // somatosensory
    }};
    double line_hz = 50.0;
    double recharge_latency_s = 0.7;
    double blink_rate_hz = 0.3;
    double muscle_sigma_ms = 20.0;
    std::vector<std::string> muscle_channels{"T7", "FC5", "CP5"};
    std::vector<std::string> noisy_channels;
    double noisy_factor = 10.0;

    ArtifactSpec& artifact(ArtifactClass c) { return artifacts[static_cast<std::size_t>(c)]; }
    const ArtifactSpec& artifact(ArtifactClass c) const { return artifacts[static_cast<std::size_t>(c)]; }

    /// Every artifact class switched off.
    SimConfig& brain_only();
};

void validate(const SimConfig& cfg);

/// Continuous ground truth on the simulation grid. Trials are contiguous
/// blocks of `block_samples`, so the continuous matrices are the trials laid
/// end to end.
struct GroundTruth {
    double fs = 0.0;
    std::pair<double, double> epoch_window;
    Eigen::Index block_samples = 0;
    Montage channels;
    std::vector<Event> events;
    Eigen::MatrixXd clean;  ///< channels x samples
    std::vector<std::pair<ArtifactClass, Eigen::MatrixXd>> contributions;
    Eigen::MatrixXd sources;  ///< source time courses, sources x samples
    std::vector<std::string> source_names;

    /// clean + every contribution, summed in storage order.
    Eigen::MatrixXd noisy() const;
    const Eigen::MatrixXd* contribution(ArtifactClass c) const;
};

/// Deterministic for a given config; the emitted data equal truth.noisy().
std::pair<Recording, GroundTruth> simulate(const SimConfig& cfg);

/// Ground truth on the epoch grid the cleaned data live on.
struct EpochTruth {
    EpochSet clean;
    EpochSet noisy;
    std::vector<std::pair<ArtifactClass, EpochSet>> contributions;
};

/// Splits the continuous truth into its simulation blocks unchanged.
EpochTruth epoch_truth(const GroundTruth& truth);

/// Carries every truth part through the linear preprocessing chain with the
/// decisions (bad channels, rejected trials) taken from `decided`.
EpochTruth transport_truth(const GroundTruth& truth, const PreprocessConfig& cfg, const PreprocessResult& decided);

struct ClassResidual {
    ArtifactClass cls;
    double input_energy = 0.0;      ///< ||a_c||^2
    double residual_energy = 0.0;   ///< <r, a_c>^2 / ||a_c||^2
    double residual_fraction = 0.0; ///< <r, a_c> / ||a_c||^2
};

struct ScoreMetrics {
    std::vector<std::string> channel_names;
    Eigen::VectorXd channel_rms_error;
    double rms_error = 0.0;
    double input_rms_error = 0.0;
    double clean_rms = 0.0;
    double input_snr_db = 0.0;
    double output_snr_db = 0.0;
    double snr_improvement_db = 0.0;  ///< +inf when the cleaned data equal the truth
    std::vector<ClassResidual> residuals;
};

/// Errors of `cleaned` against the truth over good EEG channels and good trials.
ScoreMetrics score(const EpochSet& cleaned, const EpochTruth& truth);

// Ground truth on disk next to a simulated dataset: `<prefix>.truth.json`
// index plus one dataset pair per part (`<prefix>-truth-clean`, ...).
void save_truth(const GroundTruth& truth, const std::filesystem::path& prefix);
GroundTruth load_truth(const std::filesystem::path& prefix);

}  // namespace tmseeg
