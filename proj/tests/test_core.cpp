#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "tmseeg/io.hpp"
#include "tmseeg/montage.hpp"
#include "tmseeg/preprocess.hpp"

using namespace tmseeg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "tmseeg-test-core";
    fs::create_directories(dir);
    return dir / name;
}

Recording tiny(Eigen::Index channels, Eigen::Index samples, double fs = 250.0) {
    Recording rec;
    rec.fs = fs;
    std::vector<std::string> names;
    const std::vector<std::string> pool{"Fz", "Cz", "Pz", "C3", "C4", "Oz", "F3", "F4"};
    for (Eigen::Index c = 0; c < channels; ++c) names.push_back(pool[static_cast<std::size_t>(c)]);
    rec.channels = make_montage(names);
    rec.data.resize(channels, samples);
    for (Eigen::Index i = 0; i < rec.data.size(); ++i) rec.data(i) = 0.25 * static_cast<double>(i) - 1.0;
    return rec;
}

Recording pulsed(int n_events, double spacing_s, double fs) {
    Recording rec;
    rec.fs = fs;
    rec.channels = make_montage({"C3", "C4"});
    const auto spacing = static_cast<std::int64_t>(std::llround(spacing_s * fs));
    const auto n = spacing * (n_events + 1);
    rec.data = Eigen::MatrixXd::Zero(2, n);
    for (int k = 0; k < n_events; ++k) rec.events.push_back({spacing * (k + 1) - spacing / 2, kTmsEventCode});
    return rec;
}

}  // namespace

TEST_CASE("dataset round trip is bit exact") {
    auto rec = tiny(2, 4);
    rec.events = {{1, 1}};
    const auto path = scratch("tiny");
    save_dataset(rec, path);
    CHECK(fs::file_size(payload_path(path)) == 4u * 2u * 4u);

    const auto back = load_dataset(path);
    CHECK(back.fs == rec.fs);
    CHECK(back.events == rec.events);
    REQUIRE(back.data.rows() == 2);
    for (Eigen::Index i = 0; i < rec.data.size(); ++i) CHECK(back.data(i) == static_cast<double>(static_cast<float>(rec.data(i))));

    save_dataset(back, scratch("tiny2"));
    CHECK(sha256_file(payload_path(path)) == sha256_file(payload_path(scratch("tiny2"))));
}

TEST_CASE("payload bytes are float32 little endian, channel major") {
    auto rec = tiny(2, 4);
    const auto path = scratch("bytes");
    save_dataset(rec, path);
    std::ifstream in(payload_path(path), std::ios::binary);
    std::vector<float> raw(8);
    in.read(reinterpret_cast<char*>(raw.data()), 32);
    for (Eigen::Index c = 0; c < 2; ++c)
        for (Eigen::Index j = 0; j < 4; ++j) CHECK(raw[static_cast<std::size_t>(c * 4 + j)] == static_cast<float>(rec.data(c, j)));
}

TEST_CASE("sidecar records fs and empty events") {
    auto rec = tiny(3, 10, 250.0);
    const auto path = scratch("sidecar");
    save_dataset(rec, path);
    std::ifstream in(sidecar_path(path));
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("\"events\": []") != std::string::npos);
    CHECK(load_dataset(path).fs == 250.0);
}

TEST_CASE("csv import") {
    const auto path = scratch("three.csv");
    std::ofstream(path) << "t,Fz,Cz\n0,1,2\n0.004,3,4\n0.008,5,6\n";
    const auto rec = load_csv(path);
    CHECK(rec.n_channels() == 2);
    CHECK(rec.n_samples() == 3);
    CHECK(rec.fs == doctest::Approx(250.0));
    CHECK(rec.data(1, 2) == 6.0);
    CHECK(rec.channels[0].name == "Fz");
}

TEST_CASE("dataset faults") {
    SUBCASE("missing file") {
        try {
            load_dataset(scratch("does-not-exist"));
            FAIL("expected an error");
        } catch (const DatasetError& e) {
            CHECK(e.fault() == DatasetFault::MissingFile);
            CHECK(e.code() == ErrorCode::Data);
        }
    }
    SUBCASE("truncated payload") {
        auto rec = tiny(2, 4);
        const auto path = scratch("short");
        save_dataset(rec, path);
        fs::resize_file(payload_path(path), 12);
        try {
            load_dataset(path);
            FAIL("expected an error");
        } catch (const DatasetError& e) {
            CHECK(e.fault() == DatasetFault::DimensionMismatch);
        }
    }
    SUBCASE("non-finite sample") {
        auto rec = tiny(2, 4);
        const auto path = scratch("nan");
        save_dataset(rec, path);
        std::fstream io(payload_path(path), std::ios::in | std::ios::out | std::ios::binary);
        const float bad = std::nanf("");
        io.seekp(8);
        io.write(reinterpret_cast<const char*>(&bad), 4);
        io.close();
        try {
            load_dataset(path);
            FAIL("expected an error");
        } catch (const DatasetError& e) {
            CHECK(e.fault() == DatasetFault::NonFiniteSample);
        }
    }
    SUBCASE("malformed sidecar") {
        auto rec = tiny(2, 4);
        const auto path = scratch("garbled");
        save_dataset(rec, path);
        std::ofstream(sidecar_path(path)) << "{ not json";
        try {
            load_dataset(path);
            FAIL("expected an error");
        } catch (const DatasetError& e) {
            CHECK(e.fault() == DatasetFault::MalformedSidecar);
        }
    }
}

TEST_CASE("epochs round trip") {
    auto rec = pulsed(5, 3.0, 250.0);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    for (Eigen::Index i = 0; i < rec.data.size(); ++i) rec.data(i) = g(rng);
    auto e = epoch(rec, {-1.0, 1.0});
    e.rejected[2] = true;
    const auto path = scratch("epochs");
    save_epochs(e, path);
    const auto back = load_epochs(path);
    CHECK(back.n_trials() == 5);
    CHECK(back.rejected == e.rejected);
    CHECK(back.t0 == doctest::Approx(-1.0));
    CHECK((back.trials[3] - e.trials[3]).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("epoching arithmetic") {
    SUBCASE("50 pulses every 3 s give 50 trials of 3 s") {
        const auto rec = pulsed(50, 3.0, 1000.0);
        std::size_t dropped = 9;
        const auto e = epoch(rec, {-1.0, 2.0}, kTmsEventCode, &dropped);
        CHECK(e.n_trials() == 50);
        CHECK(e.n_samples() == 3000);
        CHECK(dropped == 0);
    }
    SUBCASE("single-sample window") {
        const auto rec = pulsed(3, 3.0, 250.0);
        CHECK(epoch(rec, {0.0, 0.004}).n_samples() == 1);
    }
    SUBCASE("marker too close to the start is dropped") {
        auto rec = pulsed(3, 3.0, 250.0);
        rec.events.insert(rec.events.begin(), Event{10, kTmsEventCode});
        std::size_t dropped = 0;
        const auto e = epoch(rec, {-1.0, 2.0}, kTmsEventCode, &dropped);
        CHECK(e.n_trials() == 3);
        CHECK(dropped == 1);
    }
}

TEST_CASE("average reference") {
    Recording rec;
    rec.fs = 100.0;
    rec.channels = make_montage({"C3", "C4"});
    rec.data.resize(2, 3);
    rec.data << 1, 2, 3, 5, 5, 5;
    const auto [out, op] = average_reference(rec);
    CHECK(out.data(0, 0) == doctest::Approx(-2.0));
    CHECK(out.data(1, 0) == doctest::Approx(2.0));
    CHECK(out.data(0, 2) == doctest::Approx(-1.0));

    const auto m = analysis30();
    auto op30 = average_reference_operator(m);
    CHECK((op30.matrix * op30.matrix - op30.matrix).norm() < 1e-12);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(30, 50);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    CHECK((op30.matrix * x).colwise().sum().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("bad channels are left out of the reference") {
    auto m = make_montage({"C3", "C4", "Cz"});
    m[2].bad = true;
    const auto op = average_reference_operator(m);
    Eigen::Vector3d x(1.0, 3.0, 100.0);
    const Eigen::Vector3d y = op.matrix * x;
    CHECK(y(0) == doctest::Approx(-1.0));
    CHECK(y(1) == doctest::Approx(1.0));
}

TEST_CASE("validation") {
    auto rec = tiny(2, 4);
    rec.events = {{3, 1}, {1, 1}};
    CHECK_THROWS_AS(validate(rec), Error);
    rec.events = {{1, 1}, {9, 1}};
    CHECK_THROWS_AS(validate(rec), Error);
    rec.events = {{1, 1}};
    rec.fs = 0.0;
    CHECK_THROWS_AS(validate(rec), Error);
}

TEST_CASE("montage") {
    const auto m = easycap32();
    CHECK(m.size() == 32);
    CHECK(analysis30().size() == 30);
    for (const auto& ch : m) CHECK(ch.position.norm() == doctest::Approx(1.0));
    int periocular = 0;
    for (const auto& ch : m) periocular += is_periocular(ch.position) ? 1 : 0;
    CHECK(periocular == 4);
    CHECK(is_periocular(*standard_position("Fp1")));
    CHECK_FALSE(is_periocular(*standard_position("Cz")));
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("parallel results do not depend on the thread count") {
    std::vector<double> a(1000), b(1000);
    const auto before = thread_count();
    set_thread_count(1);
    parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
    set_thread_count(4);
    parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); });
    set_thread_count(before);
    CHECK(a == b);
}
