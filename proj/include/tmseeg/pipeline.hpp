#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tmseeg/ica.hpp"
#include "tmseeg/preprocess.hpp"
#include "tmseeg/sim.hpp"
#include "tmseeg/sound.hpp"
#include "tmseeg/tfr.hpp"

namespace tmseeg {

struct IcaStageConfig {
    int passes = 2;
    int n_components = 15;
    int max_iterations = 500;
    /// Replaces the classifier suggestion in every pass when set.
    std::optional<std::set<int>> reject;
};

struct SspStageConfig {
    int k = 3;
    std::pair<double, double> window_ms{5.0, 50.0};
    double highpass_hz = 30.0;
    bool sir = false;
    double sir_lambda = 0.1;
};

struct SoundStageConfig {
    SoundOptions options;
    int sources = 200;
};

struct TfrStageConfig {
    double fmin = 4.0;
    double fmax = 40.0;
    double fstep = 1.0;
    std::optional<std::pair<double, double>> baseline{std::pair{-0.9, -0.1}};
    std::vector<std::string> channels;  ///< empty: C3 and neighbours
    std::pair<double, double> band{15.0, 30.0};
    std::pair<double, double> window{0.2, 0.8};

    TfrOptions options(const Montage& montage) const;
};

inline const std::vector<std::string> kDefaultStages{"preprocess", "ica", "ssp", "sound", "tfr"};

/// Sectioned key = value text. Unknown sections and keys are rejected.
struct PipelineConfig {
    std::filesystem::path input;
    std::filesystem::path output = "tmseeg-out";
    std::uint64_t seed = 1;
    std::vector<std::string> stages = kDefaultStages;
    bool reports = true;

    PreprocessConfig preprocess;
    IcaStageConfig ica;
    SspStageConfig ssp;
    SoundStageConfig sound;
    TfrStageConfig tfr;
    SimConfig sim;
    std::string sim_montage = "analysis30";  ///< analysis30 | easycap32
};

PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical text of every effective setting; parse_config(canonical(c)) == c.
std::string canonical(const PipelineConfig& cfg);
/// Hash of the canonical text with the input and output paths blanked.
std::string config_hash(const PipelineConfig& cfg);

/// Checks ranges and stage names (unique, known).
void validate(const PipelineConfig& cfg);

/// Digest of a dataset pair: SHA-256 over the sidecar and payload digests.
std::string dataset_hash(const std::filesystem::path& prefix);

struct StageRecord {
    std::string name;
    std::string input_hash;
    std::string output_hash;
    std::filesystem::path output;  ///< epoch dataset prefix written by the stage
    std::vector<std::filesystem::path> files;
    double seconds = 0.0;
};

struct IcaPassRecord {
    std::vector<std::string> labels;
    std::set<int> suggested_reject;
    std::set<int> reject;
    int iterations = 0;
    bool converged = false;
    std::filesystem::path components;  ///< component JSON written for the pass
};

struct RunManifest {
    std::string config_hash;
    std::string input_hash;
    std::filesystem::path input;
    std::filesystem::path output_dir;
    std::pair<double, double> epoch_window{-1.0, 2.0};
    std::vector<StageRecord> stages;
    std::optional<RejectionReport> rejection;
    std::vector<IcaPassRecord> ica;
    std::optional<std::vector<std::pair<std::string, double>>> sound_sigma;
    std::optional<double> beta_rebound_db;
    std::filesystem::path tfr_grid;
};

/// Runs the stages in order, persisting each stage's epochs under
/// `cfg.output`, and writes `manifest.json` there. A failing stage is
/// rethrown with its name prepended; outputs written so far stay on disk.
RunManifest run_pipeline(const PipelineConfig& cfg);

void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Component topography/spectrum CSVs and label JSON per ICA pass, butterfly
/// (trial-mean) CSVs before and after every stage, and the TFR grid when
/// that stage ran. Returns the files written.
std::vector<std::filesystem::path> emit_reports(const RunManifest& m, const std::filesystem::path& out_dir);

// Decomposition on disk: `<prefix>.json` with labels and matrices as nested
// arrays.
void save_decomposition(const Decomposition& d, const Montage& channels, const std::optional<Classification>& labels,
                        const std::filesystem::path& path);
Decomposition load_decomposition(const std::filesystem::path& path);

/// Trial mean over good trials, one row per sample: time then one column per channel.
void write_butterfly_csv(const EpochSet& epochs, const std::filesystem::path& path);

/// `<prefix>.csv` grid (frequency rows, time columns, dB; nan outside the
/// valid zone) and `<prefix>.json` axis metadata.
void write_tfr(const TimeFrequencyMap& tfr, const Montage& channels, const std::filesystem::path& prefix);

std::string metrics_json(const ScoreMetrics& m);

}  // namespace tmseeg
