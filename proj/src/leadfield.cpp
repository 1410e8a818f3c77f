#include "tmseeg/leadfield.hpp"

#include <cmath>
#include <numbers>

namespace tmseeg {

double sphere_dipole_potential(const Eigen::Vector3d& r, const Eigen::Vector3d& r0, const Eigen::Vector3d& q) {
    const Eigen::Vector3d d = r - r0;
    const double dn = d.norm();
    const double rn = r.norm();
    const Eigen::Vector3d field =
        2.0 * d / (dn * dn * dn) + (r * dn + rn * d) / (rn * dn * (rn * dn + r.dot(d)));
    return q.dot(field) / (4.0 * std::numbers::pi);
}

std::vector<Eigen::Vector3d> fibonacci_shell(int n, double radius) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(static_cast<std::size_t>(n));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        out.emplace_back(radius * rho * std::cos(phi), radius * rho * std::sin(phi), radius * z);
    }
    return out;
}

namespace {

void check_positions(const Montage& montage) {
    for (const auto& ch : montage) {
        if (ch.kind == ChannelKind::Eeg && !(ch.position.norm() > 0.5))
            fail(ErrorCode::Data, "channel '" + ch.name + "' has no head-sphere position");
    }
}

// Subtracts the good-EEG mean from every EEG row; zeroes non-EEG rows.
void reference_rows(Eigen::MatrixXd& gain, const Montage& montage) {
    const auto good = good_eeg_channels(montage);
    if (good.empty()) fail(ErrorCode::Data, "no good EEG channels");
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(gain.cols());
    for (auto c : good) mean += gain.row(c);
    mean /= static_cast<double>(good.size());
    for (std::size_t c = 0; c < montage.size(); ++c) {
        if (montage[c].kind == ChannelKind::Eeg) gain.row(static_cast<Eigen::Index>(c)) -= mean;
        else gain.row(static_cast<Eigen::Index>(c)).setZero();
    }
}

}  // namespace

LeadField build_spherical_leadfield(const Montage& montage, int n_sources, double radii_ratio) {
    if (!(radii_ratio > 0.0 && radii_ratio < 1.0)) fail(ErrorCode::Config, "radii_ratio must lie in (0, 1)");
    if (n_sources < 1) fail(ErrorCode::Config, "n_sources must be positive");
    check_positions(montage);
    LeadField lf;
    lf.source_positions = fibonacci_shell(n_sources, radii_ratio);
    const auto n_ch = static_cast<Eigen::Index>(montage.size());
    lf.gain.resize(n_ch, 3 * n_sources);
    for (Eigen::Index c = 0; c < n_ch; ++c) {
        const auto& ch = montage[static_cast<std::size_t>(c)];
        for (int s = 0; s < n_sources; ++s) {
            for (int axis = 0; axis < 3; ++axis) {
                lf.gain(c, 3 * s + axis) = ch.kind == ChannelKind::Eeg
                                               ? sphere_dipole_potential(ch.position, lf.source_positions[static_cast<std::size_t>(s)],
                                                                         Eigen::Vector3d::Unit(axis))
                                               : 0.0;
            }
        }
    }
    reference_rows(lf.gain, montage);
    lf.referenced = true;
    return lf;
}

Eigen::VectorXd dipole_topography(const Montage& montage, const Eigen::Vector3d& position, const Eigen::Vector3d& moment) {
    check_positions(montage);
    Eigen::MatrixXd col(static_cast<Eigen::Index>(montage.size()), 1);
    for (std::size_t c = 0; c < montage.size(); ++c)
        col(static_cast<Eigen::Index>(c), 0) =
            montage[c].kind == ChannelKind::Eeg ? sphere_dipole_potential(montage[c].position, position, moment) : 0.0;
    reference_rows(col, montage);
    return col.col(0);
}

}  // namespace tmseeg
