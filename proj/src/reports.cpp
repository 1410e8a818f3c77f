#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "tmseeg/io.hpp"
#include "tmseeg/pipeline.hpp"

namespace tmseeg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DatasetError(DatasetFault::Unwritable, "cannot write " + path.string());
    out << std::setprecision(9);
    return out;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw DatasetError(DatasetFault::Unwritable, "failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DatasetError(DatasetFault::Unwritable, "cannot create " + dir.string());
}

std::string component_dir(std::size_t k) {
    std::ostringstream ss;
    ss << "component-" << std::setw(2) << std::setfill('0') << k;
    return ss.str();
}

std::vector<fs::path> component_reports(const IcaPassRecord& pass, const fs::path& dir) {
    std::ifstream in(pass.components);
    if (!in) fail(ErrorCode::Data, "missing stage output " + pass.components.string());
    const auto j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("components")) fail(ErrorCode::Data, "unreadable component file " + pass.components.string());
    const auto names = j.at("channels").get<std::vector<std::string>>();

    std::vector<fs::path> files;
    for (const auto& comp : j.at("components")) {
        const auto k = comp.at("index").get<std::size_t>();
        const auto cdir = dir / component_dir(k);
        make_dir(cdir);

        const auto topo = comp.at("topography").get<std::vector<double>>();
        const auto tpath = cdir / "topography.csv";
        auto t = open_out(tpath);
        t << "channel,weight\n";
        for (std::size_t c = 0; c < topo.size(); ++c) t << names.at(c) << ',' << topo[c] << '\n';
        finish(t, tpath);

        const auto freqs = comp.at("spectrum").at("freqs").get<std::vector<double>>();
        const auto power = comp.at("spectrum").at("power").get<std::vector<double>>();
        const auto spath = cdir / "spectrum.csv";
        auto s = open_out(spath);
        s << "freq_hz,power\n";
        for (std::size_t i = 0; i < freqs.size(); ++i) s << freqs[i] << ',' << power[i] << '\n';
        finish(s, spath);

        const auto lpath = cdir / "label.json";
        auto l = open_out(lpath);
        json label = {{"index", k},
                      {"label", comp.at("label")},
                      {"scores", comp.at("scores")},
                      {"features", comp.at("features")},
                      {"suggested-reject", comp.at("suggested-reject")},
                      {"rejected", comp.at("rejected")}};
        l << label.dump(2) << '\n';
        finish(l, lpath);
        files.insert(files.end(), {tpath, spath, lpath});
    }
    return files;
}

EpochSet load_stage_epochs(const fs::path& prefix) {
    if (!fs::exists(sidecar_path(prefix))) fail(ErrorCode::Data, "missing stage output " + prefix.string());
    return load_epochs(prefix);
}

}  // namespace

void write_butterfly_csv(const EpochSet& epochs, const fs::path& path) {
    const auto trials = epochs.good_trials();
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(epochs.n_channels(), epochs.n_samples());
    for (auto t : trials) mean += epochs.trials[static_cast<std::size_t>(t)];
    if (!trials.empty()) mean /= static_cast<double>(trials.size());
    auto out = open_out(path);
    out << "time_s";
    for (const auto& ch : epochs.channels) out << ',' << ch.name;
    out << '\n';
    for (Eigen::Index j = 0; j < epochs.n_samples(); ++j) {
        out << epochs.time_of(j);
        for (Eigen::Index c = 0; c < mean.rows(); ++c) out << ',' << mean(c, j);
        out << '\n';
    }
    finish(out, path);
}

void write_tfr(const TimeFrequencyMap& tfr, const Montage& channels, const fs::path& prefix) {
    auto csv = prefix;
    csv += ".csv";
    auto out = open_out(csv);
    out << "freq_hz";
    for (double t : tfr.times) out << ',' << t;
    out << '\n';
    for (std::size_t k = 0; k < tfr.freqs.size(); ++k) {
        out << tfr.freqs[k];
        for (std::size_t j = 0; j < tfr.times.size(); ++j) {
            const auto ki = static_cast<Eigen::Index>(k), ji = static_cast<Eigen::Index>(j);
            out << ',';
            if (tfr.valid(ki, ji)) out << tfr.power_db(ki, ji);
            else out << "nan";
        }
        out << '\n';
    }
    finish(out, csv);

    json meta;
    meta["freqs"] = tfr.freqs;
    meta["times"] = tfr.times;
    meta["units"] = tfr.baseline_window ? "dB re baseline" : "dB re 1 uV^2";
    if (tfr.baseline_window) meta["baseline"] = {tfr.baseline_window->first, tfr.baseline_window->second};
    json names = json::array();
    for (auto c : tfr.channel_set) names.push_back(channels.at(static_cast<std::size_t>(c)).name);
    meta["channels"] = names;
    json valid = json::array();
    for (Eigen::Index k = 0; k < tfr.valid.rows(); ++k) {
        Eigen::Index first = -1, last = -1;
        for (Eigen::Index j = 0; j < tfr.valid.cols(); ++j) {
            if (!tfr.valid(k, j)) continue;
            if (first < 0) first = j;
            last = j;
        }
        valid.push_back({first, last});
    }
    meta["valid-samples"] = valid;
    auto path = prefix;
    path += ".json";
    auto m = open_out(path);
    m << meta.dump(1) << '\n';
    finish(m, path);
}

std::vector<fs::path> emit_reports(const RunManifest& m, const fs::path& out_dir) {
    make_dir(out_dir);
    std::vector<fs::path> files;

    for (std::size_t p = 0; p < m.ica.size(); ++p) {
        auto more = component_reports(m.ica[p], out_dir / ("ica-pass" + std::to_string(p + 1)));
        files.insert(files.end(), more.begin(), more.end());
    }

    const auto bdir = out_dir / "butterfly";
    std::optional<EpochSet> previous;
    for (std::size_t s = 0; s < m.stages.size(); ++s) {
        const auto& st = m.stages[s];
        if (st.name == "tfr") continue;
        if (s == 0 || !previous) {
            if (!fs::exists(sidecar_path(m.input))) fail(ErrorCode::Data, "missing pipeline input " + m.input.string());
            previous = epoch(load_dataset(m.input), m.epoch_window);
        }
        EpochSet post = load_stage_epochs(st.output);
        make_dir(bdir);
        const auto stem = st.output.filename().string();
        const auto pre_path = bdir / (stem + "-pre.csv");
        const auto post_path = bdir / (stem + "-post.csv");
        write_butterfly_csv(*previous, pre_path);
        write_butterfly_csv(post, post_path);
        files.insert(files.end(), {pre_path, post_path});
        previous = std::move(post);
    }

    if (!m.tfr_grid.empty()) {
        const auto tdir = out_dir / "tfr";
        make_dir(tdir);
        for (const char* ext : {".csv", ".json"}) {
            auto src = m.tfr_grid;
            src += ext;
            if (!fs::exists(src)) fail(ErrorCode::Data, "missing stage output " + src.string());
            const auto dst = tdir / (std::string("grid") + ext);
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
            files.push_back(dst);
        }
    }
    return files;
}

std::string metrics_json(const ScoreMetrics& m) {
    auto num = [](double v) -> json {
        if (std::isfinite(v)) return v;
        return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    };
    json j;
    j["rms-error"] = m.rms_error;
    j["input-rms-error"] = m.input_rms_error;
    j["clean-rms"] = m.clean_rms;
    j["input-snr-db"] = num(m.input_snr_db);
    j["output-snr-db"] = num(m.output_snr_db);
    j["snr-improvement-db"] = num(m.snr_improvement_db);
    json ch = json::object();
    for (std::size_t i = 0; i < m.channel_names.size(); ++i) ch[m.channel_names[i]] = m.channel_rms_error(static_cast<Eigen::Index>(i));
    j["channel-rms-error"] = ch;
    json res = json::object();
    for (const auto& r : m.residuals)
        res[to_string(r.cls)] = {{"input-energy", r.input_energy},
                                 {"residual-energy", r.residual_energy},
                                 {"residual-fraction", r.residual_fraction}};
    j["artifact-residuals"] = res;
    return j.dump(2);
}

}  // namespace tmseeg
