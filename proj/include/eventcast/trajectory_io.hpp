#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "eventcast/systems.hpp"

namespace eventcast {

/// Writes `path` (raw little-endian float64, row-major K x n) and the JSON
/// header sidecar `path + ".json"` holding {system_tag, n, dt, t0, K}.
void write_trajectory(const std::filesystem::path& path, const TrajectoryRecord& rec);
TrajectoryRecord read_trajectory(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& traj_path);

// Little-endian float64 block helpers shared by the binary formats.
void write_f64_le(std::ostream& os, std::span<const double> values);
void read_f64_le(std::istream& is, std::span<double> values);

}  // namespace eventcast
