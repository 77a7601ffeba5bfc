#pragma once

// Run manifests: one JSON file next to each CSV the CLI writes.

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace gapsandwich::cli {

inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[md[i] >> 4];
        out += kHex[md[i] & 0xF];
    }
    return out;
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::uint64_t seed = 0;
    double wall_time_seconds = 0.0;
    std::vector<std::filesystem::path> outputs;

    [[nodiscard]] nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool"] = "gapsandwich";
        j["version"] = GAPSANDWICH_VERSION;
        j["command"] = command;
        j["argv"] = argv;
        j["config"] = config;
        j["seed"] = seed;
        j["wall_time_seconds"] = wall_time_seconds;
        auto files = nlohmann::ordered_json::array();
        for (const auto& p : outputs) {
            const auto bytes = read_bytes(p);
            files.push_back({{"path", p.string()}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
        }
        j["outputs"] = files;
        return j;
    }
};

inline std::filesystem::path manifest_path(const std::filesystem::path& csv) {
    return std::filesystem::path(csv.string() + ".manifest.json");
}

/// Writes <csv>.manifest.json for every CSV among the outputs.
inline void write_manifests(const Manifest& m) {
    const std::string text = m.to_json().dump(2) + "\n";
    for (const auto& p : m.outputs) {
        if (p.extension() == ".csv") write_bytes(manifest_path(p), text);
    }
}

}  // namespace gapsandwich::cli
