#include "tmseeg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "tmseeg/montage.hpp"

namespace tmseeg {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

fs::path sidecar_path(const fs::path& path) {
    auto p = path;
    return p.replace_extension(".json");
}

fs::path payload_path(const fs::path& path) {
    auto p = path;
    return p.replace_extension(".f32");
}

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DatasetError(DatasetFault::MissingFile, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes(const fs::path& p, const void* data, std::size_t n) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError(DatasetFault::Unwritable, "cannot write " + p.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw DatasetError(DatasetFault::Unwritable, "write failed for " + p.string());
}

std::vector<float> read_payload(const fs::path& p, std::size_t expected_values) {
    const auto bytes = read_text(p);
    if (bytes.size() != expected_values * sizeof(float))
        throw DatasetError(DatasetFault::DimensionMismatch,
                           "payload " + p.string() + " holds " + std::to_string(bytes.size()) + " bytes, sidecar implies " +
                               std::to_string(expected_values * sizeof(float)));
    std::vector<float> values(expected_values);
    std::memcpy(values.data(), bytes.data(), bytes.size());
    for (float v : values) {
        if (!std::isfinite(v)) throw DatasetError(DatasetFault::NonFiniteSample, "payload contains non-finite samples");
    }
    return values;
}

json channels_to_json(const Montage& channels) {
    json arr = json::array();
    for (const auto& ch : channels) {
        arr.push_back({{"name", ch.name},
                       {"position", {ch.position.x(), ch.position.y(), ch.position.z()}},
                       {"kind", to_string(ch.kind)},
                       {"bad", ch.bad}});
    }
    return arr;
}

Montage channels_from_json(const json& arr) {
    Montage out;
    for (const auto& j : arr) {
        ChannelInfo ch;
        ch.name = j.at("name").get<std::string>();
        const auto& pos = j.at("position");
        if (!pos.is_array() || pos.size() != 3) throw DatasetError(DatasetFault::MalformedSidecar, "channel position must have 3 entries");
        ch.position = {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()};
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "eeg") ch.kind = ChannelKind::Eeg;
        else if (kind == "stim-marker") ch.kind = ChannelKind::StimMarker;
        else throw DatasetError(DatasetFault::MalformedSidecar, "unknown channel kind '" + kind + "'");
        ch.bad = j.value("bad", false);
        out.push_back(std::move(ch));
    }
    return out;
}

json parse_sidecar(const fs::path& path, const char* layout) {
    json j;
    try {
        j = json::parse(read_text(sidecar_path(path)));
        if (j.at("format-version").get<int>() != kFormatVersion)
            throw DatasetError(DatasetFault::MalformedSidecar, "unsupported format-version");
        if (j.value("layout", std::string("continuous")) != layout)
            throw DatasetError(DatasetFault::MalformedSidecar, std::string("expected layout '") + layout + "'");
        (void)j.at("fs").get<double>();
        (void)j.at("sample-count").get<std::int64_t>();
        (void)j.at("channels");
    } catch (const json::exception& e) {
        throw DatasetError(DatasetFault::MalformedSidecar, "malformed sidecar " + sidecar_path(path).string() + ": " + e.what());
    }
    return j;
}

std::vector<float> to_f32(const Eigen::MatrixXd& m) {
    std::vector<float> out(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[k++] = static_cast<float>(m(r, c));
    return out;
}

// Rising edges of a marker channel become events with the channel value as code.
std::vector<Event> marker_events(const Eigen::RowVectorXd& marker) {
    std::vector<Event> out;
    double prev = 0.0;
    for (Eigen::Index i = 0; i < marker.size(); ++i) {
        const double v = marker(i);
        if (v != 0.0 && prev == 0.0) out.push_back({i, static_cast<int>(std::lround(v))});
        prev = v;
    }
    return out;
}

Recording extract_markers(Recording rec) {
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < rec.channels.size(); ++i) {
        if (rec.channels[i].kind == ChannelKind::StimMarker) {
            auto ev = marker_events(rec.data.row(static_cast<Eigen::Index>(i)));
            rec.events.insert(rec.events.end(), ev.begin(), ev.end());
        } else {
            keep.push_back(static_cast<Eigen::Index>(i));
        }
    }
    if (keep.size() == rec.channels.size()) return rec;
    Montage kept;
    for (auto i : keep) kept.push_back(rec.channels[static_cast<std::size_t>(i)]);
    rec.data = select_rows(rec.data, keep);
    rec.channels = std::move(kept);
    std::sort(rec.events.begin(), rec.events.end(), [](const Event& a, const Event& b) { return a.sample < b.sample; });
    rec.events.erase(std::unique(rec.events.begin(), rec.events.end(),
                                 [](const Event& a, const Event& b) { return a.sample == b.sample; }),
                     rec.events.end());
    return rec;
}

}  // namespace

void write_f32(const fs::path& path, const Eigen::MatrixXd& m) {
    const auto v = to_f32(m);
    write_bytes(path, v.data(), v.size() * sizeof(float));
}

Eigen::MatrixXd read_f32(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
    const auto v = read_payload(path, static_cast<std::size_t>(rows * cols));
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[k++];
    return m;
}

Recording load_dataset(const fs::path& path) {
    if (path.extension() == ".csv") return load_csv(path);
    const json j = parse_sidecar(path, "continuous");
    Recording rec;
    try {
        rec.fs = j.at("fs").get<double>();
        rec.lowpass_hz = j.value("lowpass-hz", 0.0);
        rec.channels = channels_from_json(j.at("channels"));
        for (const auto& e : j.at("events")) rec.events.push_back({e.at("sample").get<std::int64_t>(), e.at("code").get<int>()});
    } catch (const json::exception& e) {
        throw DatasetError(DatasetFault::MalformedSidecar, std::string("malformed sidecar: ") + e.what());
    }
    const auto n = j.at("sample-count").get<std::int64_t>();
    if (n < 0) throw DatasetError(DatasetFault::MalformedSidecar, "negative sample-count");
    rec.data = read_f32(payload_path(path), static_cast<Eigen::Index>(rec.channels.size()), n);
    rec = extract_markers(std::move(rec));
    try {
        validate(rec);
    } catch (const Error& e) {
        throw DatasetError(DatasetFault::MalformedSidecar, e.what());
    }
    return rec;
}

void save_dataset(const Recording& rec, const fs::path& path) {
    validate(rec);
    json events = json::array();
    for (const auto& e : rec.events) events.push_back({{"sample", e.sample}, {"code", e.code}});
    json j = {{"format-version", kFormatVersion},
              {"layout", "continuous"},
              {"fs", rec.fs},
              {"lowpass-hz", rec.lowpass_hz},
              {"sample-count", rec.n_samples()},
              {"channels", channels_to_json(rec.channels)},
              {"events", events},
              {"payload", payload_path(path).filename().string()}};
    write_f32(payload_path(path), rec.data);
    const auto text = j.dump(2) + "\n";
    write_bytes(sidecar_path(path), text.data(), text.size());
}

EpochSet load_epochs(const fs::path& path) {
    const json j = parse_sidecar(path, "epochs");
    EpochSet ep;
    std::int64_t n_trials = 0;
    try {
        ep.fs = j.at("fs").get<double>();
        ep.t0 = j.at("t0").get<double>();
        ep.channels = channels_from_json(j.at("channels"));
        ep.rank_deficiency = j.value("rank-deficiency", 0);
        n_trials = j.at("trial-count").get<std::int64_t>();
        for (const auto& r : j.at("rejected")) ep.rejected.push_back(r.get<bool>());
    } catch (const json::exception& e) {
        throw DatasetError(DatasetFault::MalformedSidecar, std::string("malformed sidecar: ") + e.what());
    }
    if (static_cast<std::int64_t>(ep.rejected.size()) != n_trials)
        throw DatasetError(DatasetFault::DimensionMismatch, "rejected flags do not match trial-count");
    const auto n = static_cast<Eigen::Index>(j.at("sample-count").get<std::int64_t>());
    const auto ch = static_cast<Eigen::Index>(ep.channels.size());
    const auto all = read_f32(payload_path(path), n_trials * ch, n);
    for (std::int64_t t = 0; t < n_trials; ++t) ep.trials.emplace_back(all.middleRows(t * ch, ch));
    return ep;
}

void save_epochs(const EpochSet& epochs, const fs::path& path) {
    validate(epochs);
    const auto ch = epochs.n_channels();
    Eigen::MatrixXd all(ch * epochs.n_trials(), epochs.n_samples());
    for (Eigen::Index t = 0; t < epochs.n_trials(); ++t) all.middleRows(t * ch, ch) = epochs.trials[static_cast<std::size_t>(t)];
    std::vector<bool> rejected = epochs.rejected;
    if (rejected.empty()) rejected.assign(epochs.trials.size(), false);
    json j = {{"format-version", kFormatVersion},
              {"layout", "epochs"},
              {"fs", epochs.fs},
              {"t0", epochs.t0},
              {"sample-count", epochs.n_samples()},
              {"trial-count", epochs.n_trials()},
              {"rank-deficiency", epochs.rank_deficiency},
              {"channels", channels_to_json(epochs.channels)},
              {"rejected", rejected},
              {"payload", payload_path(path).filename().string()}};
    write_f32(payload_path(path), all);
    const auto text = j.dump(2) + "\n";
    write_bytes(sidecar_path(path), text.data(), text.size());
}

Recording load_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw DatasetError(DatasetFault::MalformedSidecar, "empty CSV");
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) {
            cell.erase(std::remove_if(cell.begin(), cell.end(), [](unsigned char c) { return std::isspace(c); }), cell.end());
            out.push_back(cell);
        }
        return out;
    };
    const auto header = split(line);
    if (header.size() < 2) throw DatasetError(DatasetFault::MalformedSidecar, "CSV needs a time column and at least one channel");

    std::vector<double> times;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) throw DatasetError(DatasetFault::DimensionMismatch, "CSV row width differs from header");
        std::vector<double> row;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            try {
                v = std::stod(cells[c]);
            } catch (const std::exception&) {
                throw DatasetError(DatasetFault::MalformedSidecar, "unparsable CSV value '" + cells[c] + "'");
            }
            if (!std::isfinite(v)) throw DatasetError(DatasetFault::NonFiniteSample, "CSV contains non-finite samples");
            if (c == 0) times.push_back(v);
            else row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (times.size() < 2) throw DatasetError(DatasetFault::DimensionMismatch, "CSV needs at least two rows to infer fs");

    Recording rec;
    rec.fs = static_cast<double>(times.size() - 1) / (times.back() - times.front());
    if (!(rec.fs > 0.0) || !std::isfinite(rec.fs)) throw DatasetError(DatasetFault::MalformedSidecar, "CSV time column is not increasing");
    std::vector<std::string> labels(header.begin() + 1, header.end());
    rec.channels = make_montage(labels);
    for (auto& ch : rec.channels) {
        std::string lower = ch.name;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        if (lower == "stim" || lower == "sti" || lower == "trigger") ch.kind = ChannelKind::StimMarker;
    }
    rec.data.resize(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t s = 0; s < rows.size(); ++s)
        for (std::size_t c = 0; c < labels.size(); ++c) rec.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s)) = rows[s][c];
    return extract_markers(std::move(rec));
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

}  // namespace tmseeg
