// tmseeg: batch front end for the TMS-EEG cleaning pipeline and simulator.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tmseeg/io.hpp"
#include "tmseeg/leadfield.hpp"
#include "tmseeg/pipeline.hpp"
#include "tmseeg/ssp.hpp"

namespace fs = std::filesystem;
using namespace tmseeg;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::string out;
    std::string in;

    std::optional<int> ssp_k;
    std::vector<double> ssp_window_ms;
    std::optional<double> ssp_highpass_hz;
    std::optional<std::string> sir;
    std::optional<double> sir_lambda;
    std::optional<double> sound_lambda;
    std::optional<int> sound_iterations;
    std::optional<int> sound_sources;
    std::optional<long long> sound_compress_rank;
};

PipelineConfig effective_config(const Globals& g) {
    PipelineConfig cfg = g.config.empty() ? parse_config("") : load_config(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.sim.seed = *g.seed;
    }
    if (g.ssp_k) cfg.ssp.k = *g.ssp_k;
    if (!g.ssp_window_ms.empty()) {
        if (g.ssp_window_ms.size() != 2) fail(ErrorCode::Config, "--ssp-window-ms takes two values");
        cfg.ssp.window_ms = {g.ssp_window_ms[0], g.ssp_window_ms[1]};
    }
    if (g.ssp_highpass_hz) cfg.ssp.highpass_hz = *g.ssp_highpass_hz;
    if (g.sir) {
        if (*g.sir == "on") cfg.ssp.sir = true;
        else if (*g.sir == "off") cfg.ssp.sir = false;
        else fail(ErrorCode::Config, "--sir takes on or off");
    }
    if (g.sir_lambda) cfg.ssp.sir_lambda = *g.sir_lambda;
    if (g.sound_lambda) cfg.sound.options.lambda = *g.sound_lambda;
    if (g.sound_iterations) cfg.sound.options.iterations = *g.sound_iterations;
    if (g.sound_sources) cfg.sound.sources = *g.sound_sources;
    if (g.sound_compress_rank) cfg.sound.options.compress_rank = static_cast<Eigen::Index>(*g.sound_compress_rank);
    validate(cfg);
    return cfg;
}

fs::path required(const std::string& value, const char* flag) {
    if (value.empty()) fail(ErrorCode::Config, std::string(flag) + " is required");
    return value;
}

fs::path suffixed(const fs::path& prefix, const std::string& suffix) {
    auto p = prefix;
    p += suffix;
    return p;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw DatasetError(DatasetFault::Unwritable, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

EpochSet load_fit_epochs(const fs::path& in) {
    const auto pseudo = suffixed(in, "-pseudo");
    return fs::exists(sidecar_path(pseudo)) ? load_epochs(pseudo) : load_epochs(in);
}

int cmd_simulate(const Globals& g) {
    const auto cfg = effective_config(g);
    const auto out = required(g.out, "--out");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    auto [rec, truth] = simulate(cfg.sim);
    save_dataset(rec, out);
    save_truth(truth, out);
    std::cout << "simulated " << rec.n_channels() << " channels x " << rec.n_samples() << " samples at " << rec.fs
              << " Hz -> " << out.string() << '\n';
    return 0;
}

int cmd_preprocess(const Globals& g) {
    const auto cfg = effective_config(g);
    const auto out = required(g.out, "--out");
    const auto res = run_preprocess(load_dataset(required(g.in, "--in")), cfg.preprocess);
    save_epochs(res.epochs, out);
    save_dataset(res.continuous, suffixed(out, "-continuous"));
    save_epochs(res.pseudo_epochs, suffixed(out, "-pseudo"));
    nlohmann::ordered_json j;
    j["bad-channels"] = nlohmann::json::array();
    for (const auto& b : res.report.bad_channels)
        j["bad-channels"].push_back({{"channel", res.epochs.channels[static_cast<std::size_t>(b.index)].name}, {"sd", b.sd}});
    j["rejected-trials"] = nlohmann::json::array();
    for (const auto& t : res.report.rejected_trials) j["rejected-trials"].push_back({{"index", t.index}, {"peak-uv", t.peak_uv}});
    j["dropped-edge-trials"] = res.dropped_edge_trials;
    write_json(suffixed(out, ".report.json"), j);
    std::cout << res.epochs.n_trials() << " trials, " << res.report.bad_channels.size() << " bad channels, "
              << res.report.rejected_trials.size() << " rejected\n";
    return 0;
}

int cmd_ica(const Globals& g, int n_components) {
    const auto cfg = effective_config(g);
    const auto out = required(g.out, "--out");
    const auto data = load_fit_epochs(required(g.in, "--in"));
    InfomaxOptions opts;
    const auto good = static_cast<int>(good_eeg_channels(data.channels).size());
    opts.n_components = std::min(n_components > 0 ? n_components : cfg.ica.n_components, good - data.rank_deficiency);
    opts.max_iterations = cfg.ica.max_iterations;
    opts.seed = cfg.seed;
    const auto d = fit_infomax(data, opts);
    save_decomposition(d, data.channels, std::nullopt, out);
    std::cout << d.n_components << " components, " << d.iterations << " steps, "
              << (d.converged ? "converged" : "not converged") << " (delta " << d.final_delta << ")\n";
    return 0;
}

int cmd_classify(const Globals& g, const std::string& ica_path, const std::string& reject) {
    const auto cfg = effective_config(g);
    const auto in = required(g.in, "--in");
    const auto d = load_decomposition(required(ica_path, "--ica"));
    const auto fit = load_fit_epochs(in);
    std::optional<std::set<int>> override_reject = cfg.ica.reject;
    if (!reject.empty()) override_reject = parse_config("[ica]\nreject = " + reject + "\n").ica.reject;
    const auto labels = classify_all(d, fit, fit.channels, override_reject);
    for (std::size_t k = 0; k < labels.labels.size(); ++k)
        std::cout << k << '\t' << to_string(labels.labels[k].label) << (labels.reject.contains(static_cast<int>(k)) ? "\treject" : "")
                  << '\n';
    if (!g.out.empty()) {
        const fs::path out = g.out;
        save_decomposition(d, fit.channels, labels, suffixed(out, ".labels.json"));
        save_epochs(project_out(load_epochs(in), d, labels.reject), out);
    }
    return 0;
}

int cmd_ssp(const Globals& g) {
    const auto cfg = effective_config(g);
    const auto out = required(g.out, "--out");
    const auto epochs = load_epochs(required(g.in, "--in"));
    const auto sub = estimate_artifact_subspace(epochs, {cfg.ssp.window_ms.first / 1000.0, cfg.ssp.window_ms.second / 1000.0},
                                                cfg.ssp.highpass_hz, cfg.ssp.k);
    const auto p = make_projector(sub);
    auto cleaned = apply_ssp(epochs, p);
    if (cfg.ssp.sir) cleaned = apply_sir(cleaned, p, build_spherical_leadfield(cleaned.channels, cfg.sound.sources), cfg.ssp.sir_lambda);
    save_epochs(cleaned, out);
    write_f32(suffixed(out, ".projector.f32"), p.matrix);
    std::cout << "projected out " << sub.k << " dimensions" << (cfg.ssp.sir ? " with SIR" : "") << '\n';
    return 0;
}

int cmd_sound(const Globals& g) {
    const auto cfg = effective_config(g);
    const auto out = required(g.out, "--out");
    const auto epochs = load_epochs(required(g.in, "--in"));
    const auto lf = build_spherical_leadfield(epochs.channels, cfg.sound.sources);
    auto [cleaned, res] = sound_clean(epochs, lf, cfg.sound.options);
    save_epochs(cleaned, out);
    nlohmann::ordered_json j;
    j["lambda"] = res.lambda;
    j["iterations"] = res.noise.iterations_run;
    j["compressed-rank"] = res.compressed_rank;
    j["trace"] = res.noise.convergence_trace;
    nlohmann::ordered_json sigma = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < res.channel_index.size(); ++i)
        sigma[epochs.channels[static_cast<std::size_t>(res.channel_index[i])].name] = res.noise.sigma(static_cast<Eigen::Index>(i));
    j["sigma"] = sigma;
    write_json(suffixed(out, ".sigma.json"), j);
    write_f32(suffixed(out, ".operator.f32"), res.op.matrix);
    std::cout << "sigma range " << res.noise.sigma.minCoeff() << " .. " << res.noise.sigma.maxCoeff() << '\n';
    return 0;
}

int cmd_tfr(const Globals& g) {
    const auto cfg = effective_config(g);
    const auto out = required(g.out, "--out");
    const auto epochs = load_epochs(required(g.in, "--in"));
    const auto map = morlet_tfr(epochs, cfg.tfr.options(epochs.channels));
    write_tfr(map, epochs.channels, out);
    std::cout << "beta rebound " << beta_rebound_score(map, cfg.tfr.band, cfg.tfr.window) << " dB\n";
    return 0;
}

int cmd_pipeline(const Globals& g) {
    auto cfg = effective_config(g);
    if (!g.in.empty()) cfg.input = g.in;
    if (!g.out.empty()) cfg.output = g.out;
    const auto m = run_pipeline(cfg);
    if (cfg.reports) emit_reports(m, cfg.output / "reports");
    for (const auto& s : m.stages) std::cout << s.name << '\t' << s.output_hash << '\t' << s.seconds << " s\n";
    return 0;
}

int cmd_score(const Globals& g, const std::string& truth_prefix) {
    const auto cfg = effective_config(g);
    const auto cleaned = load_epochs(required(g.in, "--in"));
    const fs::path prefix = required(truth_prefix, "--truth");
    const auto truth = load_truth(prefix);
    EpochTruth target;
    if (cleaned.fs == truth.fs && cleaned.n_samples() == truth.block_samples) {
        target = epoch_truth(truth);
    } else {
        const auto decided = run_preprocess(load_dataset(prefix), cfg.preprocess);
        target = transport_truth(truth, cfg.preprocess, decided);
    }
    const auto text = metrics_json(score(cleaned, target));
    if (g.out.empty()) {
        std::cout << text << '\n';
    } else {
        std::ofstream out(g.out);
        if (!out) throw DatasetError(DatasetFault::Unwritable, "cannot write " + g.out);
        out << text << '\n';
    }
    return 0;
}

int cmd_report(const Globals& g, const std::string& manifest) {
    const auto m = load_manifest(required(manifest, "--manifest"));
    const auto files = emit_reports(m, g.out.empty() ? m.output_dir / "reports" : fs::path(g.out));
    std::cout << files.size() << " report files\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TMS-EEG artifact removal pipeline and ground-truth simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Pipeline config file");
    app.add_option("--seed", g.seed, "Random seed for simulation and ICA");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output path or prefix");
    app.add_option("--in", g.in, "Input dataset prefix");
    app.add_option("--ssp-k", g.ssp_k, "SSP subspace dimension");
    app.add_option("--ssp-window-ms", g.ssp_window_ms, "SSP estimation window start,end (ms)")->delimiter(',')->expected(2);
    app.add_option("--ssp-highpass-hz", g.ssp_highpass_hz, "High-pass before SSP estimation");
    app.add_option("--sir", g.sir, "Source-informed reconstruction after SSP (on|off)");
    app.add_option("--sir-lambda", g.sir_lambda, "SIR regularisation");
    app.add_option("--sound-lambda", g.sound_lambda, "SOUND regularisation");
    app.add_option("--sound-iterations", g.sound_iterations, "SOUND noise-estimation sweeps");
    app.add_option("--sound-sources", g.sound_sources, "Lead-field source count");
    app.add_option("--sound-compress-rank", g.sound_compress_rank, "Maximum rank kept before SOUND estimation");

    auto* simulate_cmd = app.add_subcommand("simulate", "Write a synthetic dataset and its ground truth");
    auto* preprocess_cmd = app.add_subcommand("preprocess", "Bad channels, excision, filter, downsample, epoch, reference");
    int n_components = 0;
    auto* ica_cmd = app.add_subcommand("ica", "Fit extended Infomax on preprocessed data");
    ica_cmd->add_option("--n-components", n_components, "Components to keep");
    std::string ica_path, reject;
    auto* classify_cmd = app.add_subcommand("classify", "Label components and project out the rejected ones");
    classify_cmd->add_option("--ica", ica_path, "Decomposition JSON from the ica subcommand");
    classify_cmd->add_option("--reject", reject, "Component indices to remove, replacing the suggestion ('none' for none)");
    auto* ssp_cmd = app.add_subcommand("ssp", "Signal-space projection of the post-pulse artifact subspace");
    auto* sound_cmd = app.add_subcommand("sound", "SOUND noise estimation and correction");
    auto* tfr_cmd = app.add_subcommand("tfr", "Morlet time-frequency map and beta rebound");
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the configured stage list");
    std::string truth;
    auto* score_cmd = app.add_subcommand("score", "Score cleaned epochs against simulator ground truth");
    score_cmd->add_option("--truth", truth, "Simulated dataset prefix");
    std::string manifest;
    auto* report_cmd = app.add_subcommand("report", "Emit report files for a finished run");
    report_cmd->add_option("--manifest", manifest, "manifest.json of the run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorCode::Config);
    }

    try {
        set_thread_count(g.threads);
        if (*simulate_cmd) return cmd_simulate(g);
        if (*preprocess_cmd) return cmd_preprocess(g);
        if (*ica_cmd) return cmd_ica(g, n_components);
        if (*classify_cmd) return cmd_classify(g, ica_path, reject);
        if (*ssp_cmd) return cmd_ssp(g);
        if (*sound_cmd) return cmd_sound(g);
        if (*tfr_cmd) return cmd_tfr(g);
        if (*pipeline_cmd) return cmd_pipeline(g);
        if (*score_cmd) return cmd_score(g, truth);
        if (*report_cmd) return cmd_report(g, manifest);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorCode::Data);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
