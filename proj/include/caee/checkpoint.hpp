#pragma once

#include <filesystem>
#include <iosfwd>

#include <nlohmann/json.hpp>

#include "caee/graph.hpp"

namespace caee {

/// Flat parameter archive: magic, format version, a JSON metadata record,
/// then (path, shape, little-endian float64 buffer) entries in set order.
struct Checkpoint {
    nlohmann::json metadata;
    ParamSet params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParamSet& params, const nlohmann::json& metadata);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace caee
