#include "tmseeg/montage.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string_view>

namespace tmseeg {

namespace {

// BESA-style spherical coordinates in degrees: theta is the signed angle from
// the vertex (negative = left hemisphere), phi the azimuth from the
// left-right axis.
struct SphericalLabel {
    std::string_view name;
    double theta;
    double phi;
};

constexpr std::array<SphericalLabel, 32> kEasyCap32 = {{
    {"Fp1", -92, -72}, {"Fp2", 92, 72},   {"F7", -92, -36},  {"F3", -60, -51},  {"Fz", 46, 90},
    {"F4", 60, 51},    {"F8", 92, 36},    {"FC5", -72, -21}, {"FC1", -32, -45}, {"FC2", 32, 45},
    {"FC6", 72, 21},   {"T7", -92, 0},    {"C3", -46, 0},    {"Cz", 0, 0},      {"C4", 46, 0},
    {"T8", 92, 0},     {"TP9", -115, 18}, {"CP5", -72, 21},  {"CP1", -32, 45},  {"CP2", 32, -45},
    {"CP6", 72, -21},  {"TP10", 115, -18}, {"P7", -92, 36},  {"P3", -60, 51},   {"Pz", 46, -90},
    {"P4", 60, -51},   {"P8", 92, -36},   {"PO9", -115, 54}, {"O1", -92, 72},   {"Oz", 92, -90},
    {"O2", 92, -72},   {"PO10", 115, -54},
}};

Eigen::Vector3d to_cartesian(double theta_deg, double phi_deg) {
    const double th = theta_deg * std::numbers::pi / 180.0;
    const double ph = phi_deg * std::numbers::pi / 180.0;
    return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
}

}  // namespace

std::optional<Eigen::Vector3d> standard_position(const std::string& label) {
    for (const auto& e : kEasyCap32) {
        if (e.name == label) return to_cartesian(e.theta, e.phi);
    }
    return std::nullopt;
}

Montage make_montage(const std::vector<std::string>& labels) {
    Montage out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        ChannelInfo ch;
        ch.name = l;
        ch.position = standard_position(l).value_or(Eigen::Vector3d::Zero());
        out.push_back(std::move(ch));
    }
    return out;
}

Montage easycap32() {
    std::vector<std::string> labels;
    for (const auto& e : kEasyCap32) labels.emplace_back(e.name);
    return make_montage(labels);
}

Montage analysis30() {
    std::vector<std::string> labels;
    for (const auto& e : kEasyCap32) {
        if (e.name != "TP9" && e.name != "TP10") labels.emplace_back(e.name);
    }
    return make_montage(labels);
}

bool is_periocular(const Eigen::Vector3d& position) {
    return position.y() > 0.5 && position.z() < 0.3;
}

}  // namespace tmseeg
