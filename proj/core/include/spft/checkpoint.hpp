#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "spft/network.hpp"

namespace spft {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: "SPFT", u32 version, input C/H/W, u32 layer count,
/// per layer a u32 tag and five u32 fields, u64 parameter count, then the
/// parameters as little-endian float64 in layout order.
[[nodiscard]] std::string encode_checkpoint(const Network& net);
[[nodiscard]] Network decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
[[nodiscard]] Network load_checkpoint(const std::filesystem::path& path);

/// Sidecar holding the Fisher diagonal of a checkpoint: "SPFI", u32 sample count,
/// then |S| little-endian float64 values.
struct FisherSidecar {
    std::uint32_t sample_count = 0;
    std::vector<double> values;
};

[[nodiscard]] std::filesystem::path fisher_sidecar_path(const std::filesystem::path& checkpoint);
[[nodiscard]] std::string encode_fisher(const FisherSidecar& sidecar);
[[nodiscard]] FisherSidecar decode_fisher(const std::string& bytes);
void save_fisher(const FisherSidecar& sidecar, const std::filesystem::path& path);
[[nodiscard]] FisherSidecar load_fisher(const std::filesystem::path& path);

/// Reads a whole file; throws FormatError when it cannot be opened.
[[nodiscard]] std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace spft
