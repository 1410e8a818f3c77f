#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "tmseeg/io.hpp"
#include "tmseeg/pipeline.hpp"

using namespace tmseeg;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    const auto dir = fs::temp_directory_path() / "tmseeg-test-pipeline";
    fs::create_directories(dir);
    return dir;
}

// 25 trials at 1 kHz: enough pseudo-epoch samples for a 30-channel ICA after decimation.
fs::path simulated_input() {
    static const fs::path prefix = [] {
        SimConfig cfg;
        cfg.seed = 12;
        cfg.n_trials = 25;
        auto [rec, truth] = simulate(cfg);
        const auto p = scratch() / "input";
        save_dataset(rec, p);
        return p;
    }();
    return prefix;
}

PipelineConfig quick(const fs::path& out) {
    PipelineConfig cfg;
    cfg.input = simulated_input();
    cfg.output = out;
    cfg.stages = {"preprocess", "ica", "ssp", "sound"};
    cfg.ica.passes = 1;
    cfg.ica.max_iterations = 100;
    return cfg;
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

std::size_t count_fields(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

}  // namespace

TEST_CASE("config text") {
    SUBCASE("unknown key") { CHECK_THROWS_AS(parse_config("[ssp]\nkk = 3\n"), Error); }
    SUBCASE("unknown section") { CHECK_THROWS_AS(parse_config("[nope]\n"), Error); }
    SUBCASE("duplicate key") { CHECK_THROWS_AS(parse_config("[ssp]\nk = 3\nk = 4\n"), Error); }
    SUBCASE("values land where they belong") {
        const auto c = parse_config("[pipeline]\nseed = 7\nstages = preprocess, ssp\n[ssp]\nk = 5\nwindow_ms = 6, 40\n[ica]\nreject = 1, 4\n");
        CHECK(c.seed == 7);
        CHECK(c.stages == std::vector<std::string>{"preprocess", "ssp"});
        CHECK(c.ssp.k == 5);
        CHECK(c.ssp.window_ms.first == 6.0);
        CHECK(c.ica.reject == std::set<int>{1, 4});
    }
    SUBCASE("canonical text round trips") {
        PipelineConfig c;
        c.seed = 99;
        c.ssp.sir = true;
        c.sound.options.lambda = 0.123456789;
        c.tfr.baseline.reset();
        c.sim.noisy_channels = {"C4", "Pz"};
        const auto text = canonical(c);
        CHECK(canonical(parse_config(text)) == text);
    }
    SUBCASE("hash ignores locations but not settings") {
        PipelineConfig a, b;
        b.input = "elsewhere/data";
        b.output = "other-out";
        CHECK(config_hash(a) == config_hash(b));
        b.ssp.k = 4;
        CHECK(config_hash(a) != config_hash(b));
    }
    SUBCASE("stage list checks") {
        PipelineConfig c;
        c.stages = {"ssp", "preprocess"};
        CHECK_THROWS_AS(validate(c), Error);
        c.stages = {"preprocess", "magic"};
        CHECK_THROWS_AS(validate(c), Error);
        c.stages = {"preprocess", "ssp", "ssp"};
        CHECK_THROWS_AS(validate(c), Error);
    }
}

TEST_CASE("empty stage list records only the input") {
    PipelineConfig cfg;
    cfg.input = simulated_input();
    cfg.output = scratch() / "empty";
    cfg.stages.clear();
    const auto m = run_pipeline(cfg);
    CHECK(m.stages.empty());
    CHECK(m.input_hash == dataset_hash(cfg.input));
    const auto back = load_manifest(cfg.output / "manifest.json");
    CHECK(back.input_hash == m.input_hash);
    CHECK(back.stages.empty());
}

TEST_CASE("two runs give the same hashes and reports") {
    const auto a = run_pipeline(quick(scratch() / "run-a"));
    const auto b = run_pipeline(quick(scratch() / "run-b"));
    CHECK(a.config_hash == b.config_hash);
    REQUIRE(a.stages.size() == 4);
    REQUIRE(b.stages.size() == 4);
    for (std::size_t s = 0; s < 4; ++s) {
        CHECK(a.stages[s].output_hash == b.stages[s].output_hash);
        CHECK(a.stages[s].output_hash == dataset_hash(a.stages[s].output));
    }
    CHECK(a.stages[1].input_hash == a.stages[0].output_hash);
    CHECK(a.sound_sigma.has_value());
    CHECK_FALSE(a.beta_rebound_db.has_value());

    const auto reports = scratch() / "run-a" / "reports";
    const auto files = emit_reports(a, reports);
    CHECK_FALSE(files.empty());
    REQUIRE(a.ica.size() == 1);
    std::size_t folders = 0;
    for (const auto& entry : fs::directory_iterator(reports / "ica-pass1")) {
        if (!entry.is_directory()) continue;
        ++folders;
        CHECK(fs::exists(entry.path() / "topography.csv"));
        CHECK(fs::exists(entry.path() / "spectrum.csv"));
        CHECK(fs::exists(entry.path() / "label.json"));
    }
    CHECK(folders == a.ica[0].labels.size());
    CHECK_FALSE(fs::exists(reports / "tfr"));

    const auto epochs = load_epochs(a.stages[3].output);
    const auto post = reports / "butterfly" / "04-sound-post.csv";
    REQUIRE(fs::exists(post));
    CHECK(count_lines(post) == static_cast<std::size_t>(epochs.n_samples()) + 1);
    CHECK(count_fields(post) == epochs.channels.size() + 1);

    const auto back = load_manifest(scratch() / "run-a" / "manifest.json");
    CHECK(back.config_hash == a.config_hash);
    CHECK(back.stages.size() == 4);
    CHECK(back.stages[2].output_hash == a.stages[2].output_hash);
}

TEST_CASE("missing input is a data error") {
    PipelineConfig cfg;
    cfg.input = scratch() / "nothing-here";
    cfg.output = scratch() / "missing";
    try {
        run_pipeline(cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Data);
    }
}
