#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tmseeg/core.hpp"

namespace tmseeg {

/// Unit-sphere position of a 10-20 label (x right, y nose, z vertex).
std::optional<Eigen::Vector3d> standard_position(const std::string& label);

/// The 32-channel EasyCap layout.
Montage easycap32();

/// easycap32 without the mastoid-adjacent TP9/TP10, leaving 30 analysis electrodes.
Montage analysis30();

Montage make_montage(const std::vector<std::string>& labels);

/// Low frontal electrodes closest to the eyes (Fp1/Fp2/F7/F8 on easycap32).
bool is_periocular(const Eigen::Vector3d& position);

}  // namespace tmseeg
