#include "eventcast/trajectory_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace eventcast {

namespace {

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
        return r;
    }
}

}  // namespace

void write_f64_le(std::ostream& os, std::span<const double> values) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else {
        for (double v : values) {
            const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
            os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    }
}

void read_f64_le(std::istream& is, std::span<double> values) {
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw IoError("truncated float64 block");
    if constexpr (std::endian::native != std::endian::little) {
        for (double& v : values) v = std::bit_cast<double>(to_le(std::bit_cast<std::uint64_t>(v)));
    }
}

std::filesystem::path sidecar_path(const std::filesystem::path& traj_path) {
    auto p = traj_path;
    p += ".json";
    return p;
}

void write_trajectory(const std::filesystem::path& path, const TrajectoryRecord& rec) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    nlohmann::json header = {
        {"system_tag", std::string(to_string(rec.system_tag))},
        {"n", rec.dim()},
        {"dt", rec.dt},
        {"t0", rec.t0},
        {"K", rec.size()},
    };
    std::ofstream hs(sidecar_path(path));
    if (!hs) throw IoError("cannot write " + sidecar_path(path).string());
    hs << header.dump(2) << '\n';

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    write_f64_le(os, std::span<const double>(rec.states.data(), static_cast<std::size_t>(rec.states.size())));
    if (!os) throw IoError("write failed for " + path.string());
}

TrajectoryRecord read_trajectory(const std::filesystem::path& path) {
    std::ifstream hs(sidecar_path(path));
    if (!hs) throw IoError("missing trajectory header " + sidecar_path(path).string());
    nlohmann::json header;
    try {
        hs >> header;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed trajectory header: ") + e.what());
    }
    TrajectoryRecord rec;
    rec.system_tag = system_tag_from_string(header.at("system_tag").get<std::string>());
    rec.dt = header.at("dt").get<double>();
    rec.t0 = header.at("t0").get<double>();
    const auto n = header.at("n").get<Eigen::Index>();
    const auto k = header.at("K").get<Eigen::Index>();
    rec.states.resize(k, n);

    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    read_f64_le(is, std::span<double>(rec.states.data(), static_cast<std::size_t>(rec.states.size())));
    return rec;
}

}  // namespace eventcast
