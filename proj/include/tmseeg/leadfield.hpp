#pragma once

#include <vector>

#include "tmseeg/core.hpp"

namespace tmseeg {

/// Gain matrix for 3 orthogonal unit dipoles per source.
struct LeadField {
    Eigen::MatrixXd gain;  ///< channels x (3 * n_sources); rows follow the montage
    std::vector<Eigen::Vector3d> source_positions;
    bool referenced = false;

    Eigen::Index n_sources() const { return static_cast<Eigen::Index>(source_positions.size()); }
};

/// Potential on the surface of a homogeneous unit-conductivity sphere at
/// electrode `r` (|r| = sphere radius) due to dipole `q` at `r0` inside it.
double sphere_dipole_potential(const Eigen::Vector3d& r, const Eigen::Vector3d& r0, const Eigen::Vector3d& q);

/// n quasi-uniform points on a sphere of the given radius (Fibonacci lattice).
std::vector<Eigen::Vector3d> fibonacci_shell(int n, double radius);

/// Single-sphere lead field with sources on a Fibonacci shell at
/// `radii_ratio`, common-average referenced over the good EEG channels.
/// Rows of non-EEG channels are zero.
LeadField build_spherical_leadfield(const Montage& montage, int n_sources = 200, double radii_ratio = 0.8);

/// Sensor topography of one dipole, average-referenced over good EEG channels.
Eigen::VectorXd dipole_topography(const Montage& montage, const Eigen::Vector3d& position, const Eigen::Vector3d& moment);

}  // namespace tmseeg
