#pragma once

#include <filesystem>
#include <string>

#include "tmseeg/core.hpp"

namespace tmseeg {

enum class DatasetFault {
    MissingFile,
    MalformedSidecar,
    DimensionMismatch,
    NonFiniteSample,
    Unwritable,
};

/// Dataset-format failure. `code()` is always ErrorCode::Data; `fault()` tells
/// the failure modes apart.
class DatasetError : public Error {
public:
    DatasetError(DatasetFault fault, const std::string& what) : Error(ErrorCode::Data, what), fault_(fault) {}
    DatasetFault fault() const noexcept { return fault_; }

private:
    DatasetFault fault_;
};

inline constexpr int kFormatVersion = 1;

/// Sidecar + payload paths for a dataset given either prefix, `.json` or `.f32` path.
std::filesystem::path sidecar_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

// Dataset pair: `<name>.json` sidecar and `<name>.f32` payload (float32 LE,
// channel-major). `.csv` files are imported as time column + one column per
// channel in microvolts.
Recording load_dataset(const std::filesystem::path& path);
void save_dataset(const Recording& rec, const std::filesystem::path& path);

// Epoch sets share the format with layout "epochs"; the payload is trial-major,
// channel-major within a trial.
EpochSet load_epochs(const std::filesystem::path& path);
void save_epochs(const EpochSet& epochs, const std::filesystem::path& path);

Recording load_csv(const std::filesystem::path& path);

/// Writes a row-major float32 LE matrix (used for operators and ground truth).
void write_f32(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_f32(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols);

/// SHA-256 hex digest of a byte string / file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace tmseeg
