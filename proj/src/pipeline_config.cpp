#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "tmseeg/io.hpp"
#include "tmseeg/montage.hpp"
#include "tmseeg/pipeline.hpp"

namespace tmseeg {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
    fail(ErrorCode::Config, "key '" + key + "': cannot read '" + value + "' as " + want);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto t = trim(v);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, v, "a number");
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto t = trim(v);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, v, "an integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
    if (v == "off" || v == "false" || v == "no" || v == "0") return false;
    bad_value(key, v, "on/off");
}

std::pair<double, double> to_pair(const std::string& key, const std::string& v) {
    const auto parts = split_list(v);
    if (parts.size() != 2) bad_value(key, v, "a pair 'a, b'");
    return {to_double(key, parts[0]), to_double(key, parts[1])};
}

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}
std::string fmt(std::pair<double, double> p) { return fmt(p.first) + ", " + fmt(p.second); }
std::string fmt_bool(bool b) { return b ? "on" : "off"; }

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
    return out;
}

struct Field {
    std::string key;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

struct Section {
    std::string name;
    std::vector<Field> fields;
};

#define TM_DOUBLE(key_, member)                                                              \
    Field {                                                                                  \
        key_, [](const PipelineConfig& c) { return fmt(c.member); },                       \
            [](PipelineConfig& c, const std::string& v) { c.member = to_double(key_, v); } \
    }
#define TM_INT(key_, member, type)                                                                        \
    Field {                                                                                               \
        key_, [](const PipelineConfig& c) { return std::to_string(c.member); },                         \
            [](PipelineConfig& c, const std::string& v) { c.member = static_cast<type>(to_int(key_, v)); } \
    }
#define TM_PAIR(key_, member)                                                              \
    Field {                                                                                \
        key_, [](const PipelineConfig& c) { return fmt(c.member); },                     \
            [](PipelineConfig& c, const std::string& v) { c.member = to_pair(key_, v); } \
    }
#define TM_BOOL(key_, member)                                                              \
    Field {                                                                                \
        key_, [](const PipelineConfig& c) { return fmt_bool(c.member); },                \
            [](PipelineConfig& c, const std::string& v) { c.member = to_bool(key_, v); } \
    }
#define TM_LIST(key_, member)                                                                 \
    Field {                                                                                   \
        key_, [](const PipelineConfig& c) { return join(c.member); },                       \
            [](PipelineConfig& c, const std::string& v) { c.member = split_list(v); }       \
    }

Field artifact_toggle(ArtifactClass cls) {
    std::string key = to_string(cls);
    std::replace(key.begin(), key.end(), '-', '_');
    return {key, [cls](const PipelineConfig& c) { return fmt_bool(c.sim.artifact(cls).enabled); },
            [cls, key](PipelineConfig& c, const std::string& v) { c.sim.artifact(cls).enabled = to_bool(key, v); }};
}

Field artifact_amplitude(ArtifactClass cls) {
    std::string key = to_string(cls);
    std::replace(key.begin(), key.end(), '-', '_');
    key += "_uv";
    return {key, [cls](const PipelineConfig& c) { return fmt(c.sim.artifact(cls).amplitude_uv); },
            [cls, key](PipelineConfig& c, const std::string& v) { c.sim.artifact(cls).amplitude_uv = to_double(key, v); }};
}

const std::vector<Section>& schema() {
    static const std::vector<Section> sections = [] {
        std::vector<Section> s;
        s.push_back({"pipeline",
                     {
                         Field{"input", [](const PipelineConfig& c) { return c.input.string(); },
                               [](PipelineConfig& c, const std::string& v) { c.input = v; }},
                         Field{"output", [](const PipelineConfig& c) { return c.output.string(); },
                               [](PipelineConfig& c, const std::string& v) { c.output = v; }},
                         Field{"seed", [](const PipelineConfig& c) { return std::to_string(c.seed); },
                               [](PipelineConfig& c, const std::string& v) {
                                   c.seed = static_cast<std::uint64_t>(to_int("seed", v));
                               }},
                         TM_LIST("stages", stages),
                         TM_BOOL("reports", reports),
                     }});
        s.push_back({"preprocess",
                     {
                         TM_DOUBLE("hp_hz", preprocess.hp_hz),
                         TM_DOUBLE("lp_hz", preprocess.lp_hz),
                         TM_DOUBLE("hp_transition_hz", preprocess.hp_transition_hz),
                         TM_DOUBLE("lp_transition_hz", preprocess.lp_transition_hz),
                         TM_DOUBLE("target_fs", preprocess.target_fs),
                         TM_DOUBLE("reject_uv", preprocess.reject_uv),
                         TM_DOUBLE("pseudo_epoch_s", preprocess.pseudo_epoch_s),
                         TM_PAIR("excise_window_ms", preprocess.excise_window_ms),
                         TM_DOUBLE("bad_channel_sd", preprocess.bad_channel_sd),
                         TM_PAIR("epoch_window_s", preprocess.epoch_window_s),
                     }});
        s.push_back({"ica",
                     {
                         TM_INT("passes", ica.passes, int),
                         TM_INT("n_components", ica.n_components, int),
                         TM_INT("max_iterations", ica.max_iterations, int),
                         Field{"reject",
                               [](const PipelineConfig& c) {
                                   if (!c.ica.reject) return std::string("auto");
                                   std::vector<std::string> items;
                                   for (int k : *c.ica.reject) items.push_back(std::to_string(k));
                                   return join(items);
                               },
                               [](PipelineConfig& c, const std::string& v) {
                                   if (v == "auto") {
                                       c.ica.reject.reset();
                                       return;
                                   }
                                   std::set<int> out;
                                   if (v != "none")
                                       for (const auto& item : split_list(v)) out.insert(static_cast<int>(to_int("reject", item)));
                                   c.ica.reject = std::move(out);
                               }},
                     }});
        s.push_back({"ssp",
                     {
                         TM_INT("k", ssp.k, int),
                         TM_PAIR("window_ms", ssp.window_ms),
                         TM_DOUBLE("highpass_hz", ssp.highpass_hz),
                         TM_BOOL("sir", ssp.sir),
                         TM_DOUBLE("sir_lambda", ssp.sir_lambda),
                     }});
        s.push_back({"sound",
                     {
                         TM_DOUBLE("lambda", sound.options.lambda),
                         TM_INT("iterations", sound.options.iterations, int),
                         TM_INT("sources", sound.sources, int),
                         TM_INT("compress_rank", sound.options.compress_rank, Eigen::Index),
                         TM_BOOL("compress", sound.options.compress),
                     }});
        s.push_back({"tfr",
                     {
                         TM_DOUBLE("fmin", tfr.fmin),
                         TM_DOUBLE("fmax", tfr.fmax),
                         TM_DOUBLE("fstep", tfr.fstep),
                         Field{"baseline",
                               [](const PipelineConfig& c) { return c.tfr.baseline ? fmt(*c.tfr.baseline) : std::string("none"); },
                               [](PipelineConfig& c, const std::string& v) {
                                   if (v == "none") c.tfr.baseline.reset();
                                   else c.tfr.baseline = to_pair("baseline", v);
                               }},
                         TM_LIST("channels", tfr.channels),
                         TM_PAIR("band", tfr.band),
                         TM_PAIR("window", tfr.window),
                     }});
        Section sim{"sim",
                    {
                        Field{"seed", [](const PipelineConfig& c) { return std::to_string(c.sim.seed); },
                              [](PipelineConfig& c, const std::string& v) {
                                  c.sim.seed = static_cast<std::uint64_t>(to_int("seed", v));
                              }},
                        TM_INT("n_trials", sim.n_trials, int),
                        TM_DOUBLE("fs", sim.fs),
                        TM_PAIR("epoch_window", sim.epoch_window),
                        Field{"montage", [](const PipelineConfig& c) { return c.sim_montage; },
                              [](PipelineConfig& c, const std::string& v) {
                                  if (v == "analysis30") c.sim.montage = analysis30();
                                  else if (v == "easycap32") c.sim.montage = easycap32();
                                  else bad_value("montage", v, "analysis30 or easycap32");
                                  c.sim_montage = v;
                              }},
                        Field{"target", [](const PipelineConfig& c) { return c.sim.brain.target; },
                              [](PipelineConfig& c, const std::string& v) { c.sim.brain.target = v; }},
                        TM_DOUBLE("tep_uv", sim.brain.tep_uv),
                        TM_DOUBLE("background_uv", sim.brain.background_uv),
                        TM_INT("background_sources", sim.brain.background_sources, int),
                        TM_DOUBLE("alpha_uv", sim.brain.alpha_uv),
                        TM_DOUBLE("alpha_hz", sim.brain.alpha_hz),
                        TM_DOUBLE("rebound_uv", sim.brain.rebound_uv),
                        TM_DOUBLE("rebound_hz", sim.brain.rebound_hz),
                        TM_DOUBLE("rebound_latency_s", sim.brain.rebound_latency_s),
                        TM_DOUBLE("rebound_sigma_s", sim.brain.rebound_sigma_s),
                        TM_DOUBLE("line_hz", sim.line_hz),
                        TM_DOUBLE("recharge_latency_s", sim.recharge_latency_s),
                        TM_DOUBLE("blink_rate_hz", sim.blink_rate_hz),
                        TM_DOUBLE("muscle_sigma_ms", sim.muscle_sigma_ms),
                        TM_LIST("muscle_channels", sim.muscle_channels),
                        TM_LIST("noisy_channels", sim.noisy_channels),
                        TM_DOUBLE("noisy_factor", sim.noisy_factor),
                    }};
        for (std::size_t i = 0; i < kArtifactClassCount; ++i) {
            sim.fields.push_back(artifact_toggle(static_cast<ArtifactClass>(i)));
            sim.fields.push_back(artifact_amplitude(static_cast<ArtifactClass>(i)));
        }
        s.push_back(std::move(sim));
        return s;
    }();
    return sections;
}

#undef TM_DOUBLE
#undef TM_INT
#undef TM_PAIR
#undef TM_BOOL
#undef TM_LIST

}  // namespace

TfrOptions TfrStageConfig::options(const Montage& montage) const {
    TfrOptions o;
    if (!(fstep > 0.0) || !(fmax >= fmin)) fail(ErrorCode::Config, "TFR frequency range is empty");
    for (double f = fmin; f <= fmax + 1e-9 * fstep; f += fstep) o.freqs.push_back(f);
    o.baseline = baseline;
    for (const auto& name : channels) {
        auto i = find_channel(montage, name);
        if (!i) fail(ErrorCode::Config, "TFR channel " + name + " not in the montage");
        o.channels.push_back(*i);
    }
    return o;
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    cfg.sim.montage = analysis30();
    const Section* section = nullptr;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find_first_of("#;");
        const auto line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') fail(ErrorCode::Config, where + "unterminated section header");
            const auto name = trim(line.substr(1, line.size() - 2));
            const auto& all = schema();
            auto it = std::find_if(all.begin(), all.end(), [&](const Section& s) { return s.name == name; });
            if (it == all.end()) fail(ErrorCode::Config, where + "unknown section [" + name + "]");
            section = &*it;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(ErrorCode::Config, where + "expected key = value");
        if (!section) fail(ErrorCode::Config, where + "key outside any section");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        auto f = std::find_if(section->fields.begin(), section->fields.end(), [&](const Field& x) { return x.key == key; });
        if (f == section->fields.end()) fail(ErrorCode::Config, where + "unknown key '" + key + "' in [" + section->name + "]");
        if (!seen.insert(section->name + "." + key).second)
            fail(ErrorCode::Config, where + "duplicate key '" + key + "' in [" + section->name + "]");
        f->set(cfg, value);
    }
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Config, "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string canonical(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& s : schema()) {
        out += "[" + s.name + "]\n";
        for (const auto& f : s.fields) out += f.key + " = " + f.get(cfg) + "\n";
        out += "\n";
    }
    return out;
}

// Locations are left out; the input is identified by its content hash instead.
std::string config_hash(const PipelineConfig& cfg) {
    PipelineConfig c = cfg;
    c.input.clear();
    c.output.clear();
    return sha256_hex(canonical(c));
}

void validate(const PipelineConfig& cfg) {
    static const std::set<std::string> known(kDefaultStages.begin(), kDefaultStages.end());
    std::set<std::string> seen;
    for (const auto& s : cfg.stages) {
        if (!known.contains(s)) fail(ErrorCode::Config, "unknown stage '" + s + "'");
        if (!seen.insert(s).second) fail(ErrorCode::Config, "stage '" + s + "' listed twice");
    }
    // Every stage after preprocess works on its epochs.
    if (!cfg.stages.empty() && cfg.stages.front() != "preprocess")
        fail(ErrorCode::Config, "the stage list must start with preprocess");
    const auto& p = cfg.preprocess;
    if (!(p.hp_hz >= 0.0 && p.lp_hz > p.hp_hz)) fail(ErrorCode::Config, "preprocess band must satisfy 0 <= hp_hz < lp_hz");
    if (!(p.target_fs > 0.0)) fail(ErrorCode::Config, "target_fs must be positive");
    if (!(p.reject_uv > 0.0)) fail(ErrorCode::Config, "reject_uv must be positive");
    if (!(p.pseudo_epoch_s > 0.0)) fail(ErrorCode::Config, "pseudo_epoch_s must be positive");
    if (!(p.bad_channel_sd > 0.0)) fail(ErrorCode::Config, "bad_channel_sd must be positive");
    if (!(p.excise_window_ms.first <= 0.0 && p.excise_window_ms.second >= 0.0))
        fail(ErrorCode::Config, "excise_window_ms must contain the pulse");
    if (cfg.ica.passes < 1) fail(ErrorCode::Config, "ica passes must be at least 1");
    if (cfg.ica.n_components < 1) fail(ErrorCode::Config, "n_components must be positive");
    if (cfg.ica.max_iterations < 1) fail(ErrorCode::Config, "max_iterations must be positive");
    if (cfg.ssp.k < 0) fail(ErrorCode::Config, "ssp k must be non-negative");
    if (!(cfg.ssp.window_ms.second > cfg.ssp.window_ms.first)) fail(ErrorCode::Config, "ssp window is empty");
    if (cfg.ssp.sir && !(cfg.ssp.sir_lambda > 0.0)) fail(ErrorCode::Numerical, "sir_lambda must be positive");
    if (!(cfg.sound.options.lambda > 0.0)) fail(ErrorCode::Numerical, "sound lambda must be positive");
    if (cfg.sound.options.iterations < 1) fail(ErrorCode::Config, "sound iterations must be positive");
    if (cfg.sound.sources < 1) fail(ErrorCode::Config, "sound sources must be positive");
    if (cfg.sound.options.compress_rank < 1) fail(ErrorCode::Config, "compress_rank must be positive");
    validate(cfg.sim);
}

}  // namespace tmseeg
