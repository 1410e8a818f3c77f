#include <algorithm>
#include <cmath>
#include <numeric>

#include "tmseeg/ica.hpp"
#include "tmseeg/montage.hpp"

namespace tmseeg {

namespace {

constexpr double kWelchSeconds = 2.0;

struct Band {
    double lo;
    double hi;
};

constexpr Band kSlopeBand{2.0, 40.0};
constexpr Band kAlphaExcluded{7.0, 14.0};
constexpr Band kAlphaBand{8.0, 13.0};
constexpr double kLowCut = 5.0;
constexpr double kHighCut = 20.0;
constexpr Band kQrsLags{0.7, 1.5};

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    return 0.5 * (upper + *std::max_element(v.begin(), mid));
}

// Peak of the mean-removed energy-envelope autocorrelation within the QRS lag range.
double envelope_periodicity(std::span<const double> a, double fs) {
    const auto max_lag = static_cast<std::size_t>(std::floor(kQrsLags.hi * fs));
    const auto min_lag = static_cast<std::size_t>(std::ceil(kQrsLags.lo * fs));
    if (a.size() <= max_lag + 1) return 0.0;
    std::vector<double> e(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += e[i] = a[i] * a[i];
    mean /= static_cast<double>(a.size());
    for (auto& v : e) v -= mean;
    const auto n = fast_fft_size(2 * a.size());
    auto spec = fft_real(e, n);
    for (auto& v : spec) v = std::norm(v);
    const auto r = ifft_real(spec);
    if (!(r[0] > 0.0)) return 0.0;
    double best = 0.0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
        // Unbiased normalisation so long lags are not penalised.
        const double scale = static_cast<double>(a.size()) / static_cast<double>(a.size() - lag);
        best = std::max(best, r[lag] * scale / r[0]);
    }
    return std::clamp(best, 0.0, 1.0);
}

}  // namespace

std::string to_string(ComponentClass c) {
    switch (c) {
        case ComponentClass::Brain: return "Brain";
        case ComponentClass::Eye: return "Eye";
        case ComponentClass::Muscle: return "Muscle";
        case ComponentClass::Heart: return "Heart";
        case ComponentClass::LineNoise: return "LineNoise";
        case ComponentClass::ChannelNoise: return "ChannelNoise";
        case ComponentClass::Other: return "Other";
    }
    return "Other";
}

std::optional<ComponentClass> component_class_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kClassCount; ++i) {
        const auto c = static_cast<ComponentClass>(i);
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

ComponentFeatures compute_component_features(std::span<const double> activation, double fs,
                                             const Eigen::VectorXd& topography,
                                             const std::vector<Eigen::Vector3d>& positions,
                                             std::optional<Psd>* spectrum_out) {
    const auto window = static_cast<std::size_t>(std::llround(kWelchSeconds * fs));
    Psd psd = welch(activation, fs, window, 0.5);
    const double nyquist = fs / 2.0;

    const double peak_power = *std::max_element(psd.power.begin(), psd.power.end());
    const double floor = std::max(peak_power * 1e-20, std::numeric_limits<double>::min());
    auto db = [&](std::size_t k) { return 10.0 * std::log10(psd.power[k] + floor); };

    ComponentFeatures f;

    // Aperiodic fit: dB against log2(f), alpha band excluded.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
        const double fr = psd.freqs[k];
        if (fr < kSlopeBand.lo || fr > std::min(kSlopeBand.hi, nyquist)) continue;
        if (fr >= kAlphaExcluded.lo && fr <= kAlphaExcluded.hi) continue;
        const double x = std::log2(fr);
        const double y = db(k);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    double intercept = 0.0;
    if (count >= 3) {
        const double denom = count * sxx - sx * sx;
        f.spectral_slope = (count * sxy - sx * sy) / denom;
        intercept = (sy - f.spectral_slope * sx) / count;
    }

    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
        const double fr = psd.freqs[k];
        if (count >= 3 && fr >= kAlphaBand.lo && fr <= kAlphaBand.hi)
            f.alpha_peak_db = std::max(f.alpha_peak_db, db(k) - (intercept + f.spectral_slope * std::log2(fr)));
    }

    double total = 0.0, low = 0.0, high = 0.0;
    for (std::size_t k = 1; k < psd.freqs.size(); ++k) {
        const double p = psd.power[k];
        total += p;
        if (psd.freqs[k] < kLowCut) low += p;
        if (psd.freqs[k] >= kHighCut) high += p;
    }
    if (total > 0.0) {
        f.low_freq_ratio = low / total;
        f.high_freq_ratio = high / total;
    }

    for (double line : {50.0, 60.0}) {
        if (line + 6.0 > nyquist) continue;
        double peak = -std::numeric_limits<double>::infinity();
        std::vector<double> flank;
        for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
            const double d = std::abs(psd.freqs[k] - line);
            if (d <= 1.0) peak = std::max(peak, db(k));
            else if (d >= 2.0 && d <= 6.0) flank.push_back(db(k));
        }
        f.line_peak_db = std::max(f.line_peak_db, peak - median(flank));
    }

    const Eigen::VectorXd mag = topography.cwiseAbs();
    const double norm = topography.norm();
    if (norm > 0.0) f.focality = mag.maxCoeff() / norm;
    double frontal = 0.0;
    int n_frontal = 0;
    for (Eigen::Index i = 0; i < mag.size(); ++i) {
        if (static_cast<std::size_t>(i) < positions.size() && is_periocular(positions[static_cast<std::size_t>(i)])) {
            frontal += mag(i);
            ++n_frontal;
        }
    }
    if (n_frontal > 0 && mag.mean() > 0.0) f.frontal_loading = (frontal / n_frontal) / mag.mean();

    f.qrs_periodicity = envelope_periodicity(activation, fs);
    if (spectrum_out) *spectrum_out = std::move(psd);
    return f;
}

std::vector<ComponentReport> compute_features(const Decomposition& d, const EpochSet& epochs, const Montage& montage) {
    const Eigen::MatrixXd data = epochs.concatenate_good();
    const auto window = static_cast<Eigen::Index>(std::llround(kWelchSeconds * epochs.fs));
    if (data.cols() < window) fail(ErrorCode::Data, "too few samples for one Welch window");
    const Eigen::MatrixXd act = d.activations(data);

    std::vector<Eigen::Vector3d> positions;
    for (auto c : d.channel_index) positions.push_back(montage.at(static_cast<std::size_t>(c)).position);

    std::vector<ComponentReport> out(static_cast<std::size_t>(d.n_components));
    parallel_for(out.size(), [&](std::size_t k) {
        const Eigen::RowVectorXd row = act.row(static_cast<Eigen::Index>(k));
        std::optional<Psd> spec;
        out[k].topography = d.mixing.col(static_cast<Eigen::Index>(k));
        out[k].features = compute_component_features(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                                     epochs.fs, out[k].topography, positions, &spec);
        out[k].spectrum = std::move(*spec);
    });
    return out;
}

ComponentLabel classify(const ComponentFeatures& f) {
    struct Rule {
        ComponentClass cls;
        std::vector<bool> conditions;
    };
    // Listed in precedence order.
    const std::array<Rule, 6> rules = {{
        {ComponentClass::ChannelNoise, {f.focality > 0.9}},
        {ComponentClass::LineNoise, {f.line_peak_db > 10.0}},
        {ComponentClass::Eye, {f.frontal_loading > 2.0, f.low_freq_ratio > 0.6}},
        {ComponentClass::Heart, {f.qrs_periodicity > 0.5}},
        {ComponentClass::Muscle, {f.high_freq_ratio > 0.5, f.focality > 0.6}},
        {ComponentClass::Brain, {f.alpha_peak_db > 3.0, f.spectral_slope < -3.0, f.focality < 0.6}},
    }};

    // Fired rules score 1.0 minus 0.05 per precedence rank; unfired rules score
    // below 0.5 in proportion to the conditions met; Other scores 0.5 when
    // nothing fires. argmax therefore reproduces the precedence order.
    ComponentLabel out;
    out.features = f;
    bool any = false;
    for (std::size_t r = 0; r < rules.size(); ++r) {
        const auto& rule = rules[r];
        const auto met = static_cast<double>(std::count(rule.conditions.begin(), rule.conditions.end(), true));
        const bool fired = met == static_cast<double>(rule.conditions.size());
        out.scores[static_cast<std::size_t>(rule.cls)] =
            fired ? 1.0 - 0.05 * static_cast<double>(r) : 0.45 * met / static_cast<double>(rule.conditions.size());
        if (fired && !any) {
            out.label = rule.cls;
            any = true;
        }
    }
    out.scores[static_cast<std::size_t>(ComponentClass::Other)] = any ? 0.0 : 0.5;
    if (!any) out.label = ComponentClass::Other;
    return out;
}

Classification classify_all(const Decomposition& d, const EpochSet& epochs, const Montage& montage,
                            const std::optional<std::set<int>>& override_reject) {
    Classification out;
    out.reports = compute_features(d, epochs, montage);
    for (std::size_t k = 0; k < out.reports.size(); ++k) {
        out.labels.push_back(classify(out.reports[k].features));
        const auto c = out.labels.back().label;
        if (c != ComponentClass::Brain && c != ComponentClass::Other) out.suggested_reject.insert(static_cast<int>(k));
    }
    if (override_reject) {
        for (int k : *override_reject) {
            if (k < 0 || k >= d.n_components) fail(ErrorCode::Config, "override component " + std::to_string(k) + " out of range");
        }
        out.reject = *override_reject;
    } else {
        out.reject = out.suggested_reject;
    }
    return out;
}

}  // namespace tmseeg
