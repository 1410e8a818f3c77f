#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tmseeg/core.hpp"
#include "tmseeg/spectral.hpp"

namespace tmseeg {

/// ICA model over the good EEG channels listed in `channel_index`.
struct Decomposition {
    Eigen::MatrixXd unmixing;      ///< components x good channels
    Eigen::MatrixXd mixing;        ///< good channels x components
    Eigen::MatrixXd pca_whitener;  ///< components x good channels
    std::vector<Eigen::Index> channel_index;
    int n_components = 0;
    int iterations = 0;
    double final_delta = 0.0;
    bool converged = false;

    /// Component time courses for one channels x samples block (full montage rows).
    Eigen::MatrixXd activations(const Eigen::MatrixXd& data) const;
};

struct InfomaxOptions {
    int n_components = 15;
    std::uint64_t seed = 1;
    int max_iterations = 500;
    double stop_delta = 1e-7;
    int block_size = 256;
    double anneal_angle_deg = 60.0;
    double anneal_factor = 0.9;
    /// Samples drawn for the kurtosis-sign estimate of the extended rule.
    int kurtosis_samples = 6000;
    /// Enforce the >= 20 * channels^2 sample requirement.
    bool check_sample_count = true;
};

/// PCA to n_components, whitening, then extended-Infomax natural-gradient
/// updates with sub/super-Gaussian switching. Deterministic for a given seed.
/// Non-convergence is reported via `converged`/`final_delta`, not thrown.
Decomposition fit_infomax(const EpochSet& epochs, const InfomaxOptions& opts);
Decomposition fit_infomax(const Eigen::MatrixXd& data, const InfomaxOptions& opts);

/// x - mixing[:, remove] * activations[remove, :] on the good channels.
EpochSet project_out(const EpochSet& epochs, const Decomposition& d, const std::set<int>& remove);
Recording project_out(const Recording& rec, const Decomposition& d, const std::set<int>& remove);

enum class ComponentClass { Brain, Eye, Muscle, Heart, LineNoise, ChannelNoise, Other };
inline constexpr std::size_t kClassCount = 7;

std::string to_string(ComponentClass c);
std::optional<ComponentClass> component_class_from_string(const std::string& s);

struct ComponentFeatures {
    double spectral_slope = 0.0;   ///< dB/octave over 2-40 Hz (alpha band excluded from the fit)
    double alpha_peak_db = 0.0;    ///< prominence above the aperiodic fit in 8-13 Hz
    double low_freq_ratio = 0.0;   ///< power fraction below 5 Hz
    double high_freq_ratio = 0.0;  ///< power fraction from 20 Hz to Nyquist
    double line_peak_db = 0.0;     ///< max prominence at 50 / 60 Hz
    double focality = 0.0;         ///< max |topo| / ||topo||_2
    double frontal_loading = 0.0;  ///< mean |topo| periocular / mean |topo| overall
    double qrs_periodicity = 0.0;  ///< energy-envelope autocorrelation peak in 0.7-1.5 s
};

/// Welch spectrum and features for one component.
struct ComponentReport {
    ComponentFeatures features;
    Psd spectrum;
    Eigen::VectorXd topography;  ///< good-channel mixing column
};

/// Welch (2 s Hann windows, 50% overlap) on good-trial activations plus
/// topography features from the mixing columns.
std::vector<ComponentReport> compute_features(const Decomposition& d, const EpochSet& epochs, const Montage& montage);

/// Single-component features from a time course and topography.
ComponentFeatures compute_component_features(std::span<const double> activation, double fs,
                                             const Eigen::VectorXd& topography,
                                             const std::vector<Eigen::Vector3d>& positions,
                                             std::optional<Psd>* spectrum_out = nullptr);

struct ComponentLabel {
    ComponentClass label = ComponentClass::Other;
    std::array<double, kClassCount> scores{};
    ComponentFeatures features;
};

/// Rule-based labelling with precedence
/// ChannelNoise > LineNoise > Eye > Heart > Muscle > Brain > Other.
ComponentLabel classify(const ComponentFeatures& f);

struct Classification {
    std::vector<ComponentLabel> labels;
    std::set<int> suggested_reject;
    std::set<int> reject;  ///< the override when given, else the suggestion
    std::vector<ComponentReport> reports;
};

Classification classify_all(const Decomposition& d, const EpochSet& epochs, const Montage& montage,
                            const std::optional<std::set<int>>& override_reject = std::nullopt);

}  // namespace tmseeg
