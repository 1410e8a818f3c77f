#include "tmseeg/pipeline.hpp"

#include <chrono>
#include <fstream>

#include <json.hpp>

#include "tmseeg/io.hpp"
#include "tmseeg/leadfield.hpp"
#include "tmseeg/ssp.hpp"

namespace tmseeg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw DatasetError(DatasetFault::DimensionMismatch, "ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

json features_json(const ComponentFeatures& f) {
    return {{"spectral_slope", f.spectral_slope}, {"alpha_peak_db", f.alpha_peak_db},
            {"low_freq_ratio", f.low_freq_ratio}, {"high_freq_ratio", f.high_freq_ratio},
            {"line_peak_db", f.line_peak_db},     {"focality", f.focality},
            {"frontal_loading", f.frontal_loading}, {"qrs_periodicity", f.qrs_periodicity}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DatasetError(DatasetFault::Unwritable, "cannot write " + path.string());
    out << text;
    if (!out) throw DatasetError(DatasetFault::Unwritable, "failed writing " + path.string());
}

std::string stage_prefix(std::size_t index, const std::string& name) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02zu", index + 1);
    return std::string(buf) + "-" + name;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

std::string dataset_hash(const fs::path& prefix) {
    return sha256_hex(sha256_file(sidecar_path(prefix)) + sha256_file(payload_path(prefix)));
}

void save_decomposition(const Decomposition& d, const Montage& channels, const std::optional<Classification>& labels,
                        const fs::path& path) {
    json j;
    j["n-components"] = d.n_components;
    j["iterations"] = d.iterations;
    j["converged"] = d.converged;
    j["final-delta"] = d.final_delta;
    j["channel-index"] = d.channel_index;
    json names = json::array();
    for (auto c : d.channel_index) names.push_back(channels.at(static_cast<std::size_t>(c)).name);
    j["channels"] = names;
    j["unmixing"] = matrix_json(d.unmixing);
    j["mixing"] = matrix_json(d.mixing);
    j["pca-whitener"] = matrix_json(d.pca_whitener);
    if (labels) {
        json comps = json::array();
        for (std::size_t k = 0; k < labels->labels.size(); ++k) {
            const auto& lab = labels->labels[k];
            json scores;
            for (std::size_t c = 0; c < kClassCount; ++c) scores[to_string(static_cast<ComponentClass>(c))] = lab.scores[c];
            const auto& rep = labels->reports.at(k);
            comps.push_back({
                {"index", k},
                {"label", to_string(lab.label)},
                {"scores", scores},
                {"features", features_json(lab.features)},
                {"suggested-reject", labels->suggested_reject.contains(static_cast<int>(k))},
                {"rejected", labels->reject.contains(static_cast<int>(k))},
                {"topography", std::vector<double>(rep.topography.data(), rep.topography.data() + rep.topography.size())},
                {"spectrum", {{"freqs", rep.spectrum.freqs}, {"power", rep.spectrum.power}}},
            });
        }
        j["components"] = comps;
    }
    write_text(path, j.dump(1) + "\n");
}

Decomposition load_decomposition(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError(DatasetFault::MissingFile, "missing decomposition " + path.string());
    Decomposition d;
    try {
        const auto j = json::parse(in);
        d.n_components = j.at("n-components").get<int>();
        d.iterations = j.at("iterations").get<int>();
        d.converged = j.at("converged").get<bool>();
        d.final_delta = j.at("final-delta").get<double>();
        d.channel_index = j.at("channel-index").get<std::vector<Eigen::Index>>();
        d.unmixing = matrix_from_json(j.at("unmixing"));
        d.mixing = matrix_from_json(j.at("mixing"));
        d.pca_whitener = matrix_from_json(j.at("pca-whitener"));
    } catch (const json::exception& e) {
        throw DatasetError(DatasetFault::MalformedSidecar, "malformed decomposition: " + std::string(e.what()));
    }
    const auto n = static_cast<Eigen::Index>(d.n_components);
    const auto ch = static_cast<Eigen::Index>(d.channel_index.size());
    if (d.unmixing.rows() != n || d.unmixing.cols() != ch || d.mixing.rows() != ch || d.mixing.cols() != n)
        throw DatasetError(DatasetFault::DimensionMismatch, "decomposition matrices do not match the channel list");
    return d;
}

RunManifest run_pipeline(const PipelineConfig& cfg) {
    validate(cfg);
    if (cfg.input.empty()) fail(ErrorCode::Config, "no input dataset configured");
    std::error_code ec;
    fs::create_directories(cfg.output, ec);
    if (ec) throw DatasetError(DatasetFault::Unwritable, "cannot create " + cfg.output.string() + ": " + ec.message());

    RunManifest m;
    m.config_hash = config_hash(cfg);
    m.input = cfg.input;
    m.output_dir = cfg.output;
    m.epoch_window = cfg.preprocess.epoch_window_s;
    write_text(cfg.output / "config.ini", canonical(cfg));

    const Recording input = load_dataset(cfg.input);
    m.input_hash = dataset_hash(cfg.input);
    const auto manifest_path = cfg.output / "manifest.json";
    save_manifest(m, manifest_path);

    Recording continuous;
    EpochSet epochs, pseudo;
    std::string current = m.input_hash;

    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
        const auto& name = cfg.stages[s];
        const auto started = std::chrono::steady_clock::now();
        StageRecord rec;
        rec.name = name;
        rec.input_hash = current;
        const auto prefix = cfg.output / stage_prefix(s, name);
        try {
            if (name == "preprocess") {
                auto res = run_preprocess(input, cfg.preprocess);
                m.rejection = res.report;
                continuous = std::move(res.continuous);
                epochs = std::move(res.epochs);
                pseudo = std::move(res.pseudo_epochs);
            } else if (name == "ica") {
                for (int pass = 0; pass < cfg.ica.passes; ++pass) {
                    InfomaxOptions opts;
                    const auto good = static_cast<int>(good_eeg_channels(pseudo.channels).size());
                    opts.n_components = std::min(cfg.ica.n_components, good - pseudo.rank_deficiency);
                    opts.max_iterations = cfg.ica.max_iterations;
                    opts.seed = cfg.seed + static_cast<std::uint64_t>(pass);
                    const auto d = fit_infomax(pseudo, opts);
                    const auto labels = classify_all(d, pseudo, pseudo.channels, cfg.ica.reject);
                    IcaPassRecord pr;
                    for (const auto& l : labels.labels) pr.labels.push_back(to_string(l.label));
                    pr.suggested_reject = labels.suggested_reject;
                    pr.reject = labels.reject;
                    pr.iterations = d.iterations;
                    pr.converged = d.converged;
                    pr.components = prefix;
                    pr.components += "-pass" + std::to_string(pass + 1) + ".components.json";
                    save_decomposition(d, pseudo.channels, labels, pr.components);
                    rec.files.push_back(pr.components);
                    m.ica.push_back(std::move(pr));
                    pseudo = project_out(pseudo, d, labels.reject);
                    epochs = project_out(epochs, d, labels.reject);
                    continuous = project_out(continuous, d, labels.reject);
                }
            } else if (name == "ssp") {
                const auto sub = estimate_artifact_subspace(
                    epochs, {cfg.ssp.window_ms.first / 1000.0, cfg.ssp.window_ms.second / 1000.0}, cfg.ssp.highpass_hz, cfg.ssp.k);
                const auto p = make_projector(sub);
                epochs = apply_ssp(epochs, p);
                if (cfg.ssp.sir) epochs = apply_sir(epochs, p, build_spherical_leadfield(epochs.channels, cfg.sound.sources), cfg.ssp.sir_lambda);
                auto proj = prefix;
                proj += ".projector.f32";
                write_f32(proj, p.matrix);
                rec.files.push_back(proj);
            } else if (name == "sound") {
                const auto lf = build_spherical_leadfield(epochs.channels, cfg.sound.sources);
                auto [out, res] = sound_clean(epochs, lf, cfg.sound.options);
                epochs = std::move(out);
                std::vector<std::pair<std::string, double>> sigma;
                json sj;
                sj["lambda"] = res.lambda;
                sj["iterations"] = res.noise.iterations_run;
                sj["compressed-rank"] = res.compressed_rank;
                sj["trace"] = res.noise.convergence_trace;
                json sig = json::object();
                for (std::size_t i = 0; i < res.channel_index.size(); ++i) {
                    const auto& ch = epochs.channels[static_cast<std::size_t>(res.channel_index[i])].name;
                    sigma.emplace_back(ch, res.noise.sigma(static_cast<Eigen::Index>(i)));
                    sig[ch] = res.noise.sigma(static_cast<Eigen::Index>(i));
                }
                sj["sigma"] = sig;
                m.sound_sigma = std::move(sigma);
                auto sigma_path = prefix, op_path = prefix;
                sigma_path += ".sigma.json";
                op_path += ".operator.f32";
                write_text(sigma_path, sj.dump(1) + "\n");
                write_f32(op_path, res.op.matrix);
                rec.files.push_back(sigma_path);
                rec.files.push_back(op_path);
            } else if (name == "tfr") {
                const auto map = morlet_tfr(epochs, cfg.tfr.options(epochs.channels));
                write_tfr(map, epochs.channels, prefix);
                m.beta_rebound_db = beta_rebound_score(map, cfg.tfr.band, cfg.tfr.window);
                auto csv = prefix, meta = prefix;
                csv += ".csv";
                meta += ".json";
                rec.files = {csv, meta};
                rec.output = prefix;
                rec.output_hash = sha256_hex(sha256_file(csv) + sha256_file(meta));
                m.tfr_grid = prefix;
            }
            if (name != "tfr") {
                save_epochs(epochs, prefix);
                rec.output = prefix;
                rec.output_hash = dataset_hash(prefix);
                current = rec.output_hash;
            }
        } catch (const Error& e) {
            save_manifest(m, manifest_path);
            throw Error(e.code(), "stage " + name + ": " + e.what());
        }
        rec.seconds = seconds_since(started);
        m.stages.push_back(std::move(rec));
        save_manifest(m, manifest_path);
    }
    return m;
}

void save_manifest(const RunManifest& m, const fs::path& path) {
    json j;
    j["config-hash"] = m.config_hash;
    j["input"] = m.input.string();
    j["input-hash"] = m.input_hash;
    j["output-dir"] = m.output_dir.string();
    j["epoch-window"] = {m.epoch_window.first, m.epoch_window.second};
    json stages = json::array();
    for (const auto& s : m.stages) {
        json files = json::array();
        for (const auto& f : s.files) files.push_back(f.string());
        stages.push_back({{"name", s.name},
                          {"input-hash", s.input_hash},
                          {"output-hash", s.output_hash},
                          {"output", s.output.string()},
                          {"files", files},
                          {"seconds", s.seconds}});
    }
    j["stages"] = stages;
    if (m.rejection) {
        json bad = json::array(), trials = json::array();
        for (const auto& b : m.rejection->bad_channels) bad.push_back({{"index", b.index}, {"sd", b.sd}});
        for (const auto& t : m.rejection->rejected_trials) trials.push_back({{"index", t.index}, {"peak-uv", t.peak_uv}});
        j["rejection"] = {{"bad-channel-sd", m.rejection->bad_channel_sd},
                          {"reject-uv", m.rejection->reject_uv},
                          {"bad-channels", bad},
                          {"rejected-trials", trials}};
    }
    json passes = json::array();
    for (const auto& p : m.ica)
        passes.push_back({{"labels", p.labels},
                          {"suggested-reject", p.suggested_reject},
                          {"reject", p.reject},
                          {"iterations", p.iterations},
                          {"converged", p.converged},
                          {"components", p.components.string()}});
    j["ica"] = passes;
    if (m.sound_sigma) {
        json sig = json::object();
        for (const auto& [name, v] : *m.sound_sigma) sig[name] = v;
        j["sound-sigma"] = sig;
    }
    if (m.beta_rebound_db) j["beta-rebound-db"] = *m.beta_rebound_db;
    if (!m.tfr_grid.empty()) j["tfr-grid"] = m.tfr_grid.string();
    write_text(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError(DatasetFault::MissingFile, "missing manifest " + path.string());
    RunManifest m;
    try {
        const auto j = json::parse(in);
        m.config_hash = j.at("config-hash").get<std::string>();
        m.input = j.at("input").get<std::string>();
        m.input_hash = j.at("input-hash").get<std::string>();
        m.output_dir = j.at("output-dir").get<std::string>();
        m.epoch_window = {j.at("epoch-window").at(0).get<double>(), j.at("epoch-window").at(1).get<double>()};
        for (const auto& s : j.at("stages")) {
            StageRecord r;
            r.name = s.at("name").get<std::string>();
            r.input_hash = s.at("input-hash").get<std::string>();
            r.output_hash = s.at("output-hash").get<std::string>();
            r.output = s.at("output").get<std::string>();
            for (const auto& f : s.at("files")) r.files.emplace_back(f.get<std::string>());
            r.seconds = s.at("seconds").get<double>();
            m.stages.push_back(std::move(r));
        }
        if (j.contains("rejection")) {
            const auto& r = j.at("rejection");
            RejectionReport rep;
            rep.bad_channel_sd = r.at("bad-channel-sd").get<double>();
            rep.reject_uv = r.at("reject-uv").get<double>();
            for (const auto& b : r.at("bad-channels")) rep.bad_channels.push_back({b.at("index").get<Eigen::Index>(), b.at("sd").get<double>()});
            for (const auto& t : r.at("rejected-trials"))
                rep.rejected_trials.push_back({t.at("index").get<Eigen::Index>(), t.at("peak-uv").get<double>()});
            m.rejection = rep;
        }
        for (const auto& p : j.at("ica")) {
            IcaPassRecord r;
            r.labels = p.at("labels").get<std::vector<std::string>>();
            r.suggested_reject = p.at("suggested-reject").get<std::set<int>>();
            r.reject = p.at("reject").get<std::set<int>>();
            r.iterations = p.at("iterations").get<int>();
            r.converged = p.at("converged").get<bool>();
            r.components = p.at("components").get<std::string>();
            m.ica.push_back(std::move(r));
        }
        if (j.contains("sound-sigma")) {
            std::vector<std::pair<std::string, double>> sig;
            for (const auto& [k, v] : j.at("sound-sigma").items()) sig.emplace_back(k, v.get<double>());
            m.sound_sigma = std::move(sig);
        }
        if (j.contains("beta-rebound-db")) m.beta_rebound_db = j.at("beta-rebound-db").get<double>();
        if (j.contains("tfr-grid")) m.tfr_grid = j.at("tfr-grid").get<std::string>();
    } catch (const json::exception& e) {
        throw DatasetError(DatasetFault::MalformedSidecar, "malformed manifest: " + std::string(e.what()));
    }
    return m;
}

}  // namespace tmseeg
