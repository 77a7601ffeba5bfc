#pragma once

// Flat parameter files.
//
//   offset  size  field
//   0       8     magic, ASCII, e.g. "GSVAE001" (no terminator)
//   8       4     format version, uint32 little-endian (currently 1)
//   12      4     parameter count N, uint32 little-endian
//   16      8*N   parameters, IEEE-754 binary64 little-endian, declared order
//
// Nothing follows the last parameter; a file of any other length is corrupt.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gapsandwich/error.hpp"

namespace gapsandwich::checkpoint {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* p) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::vector<unsigned char> encode(std::string_view magic, std::span<const double> params) {
    if (magic.size() != 8) throw Error(ErrorCode::InvalidParams, "checkpoint magic must be 8 bytes");
    std::vector<unsigned char> out(magic.begin(), magic.end());
    detail::put_le(out, kVersion);
    detail::put_le(out, static_cast<std::uint32_t>(params.size()));
    for (double v : params) detail::put_le(out, v);
    return out;
}

inline std::vector<double> decode(std::string_view magic, std::span<const unsigned char> bytes) {
    if (bytes.size() < kHeaderSize) throw Error(ErrorCode::CheckpointError, "file shorter than the 16-byte header");
    if (std::memcmp(bytes.data(), magic.data(), 8) != 0) {
        throw Error(ErrorCode::CheckpointError, "magic mismatch, expected " + std::string(magic));
    }
    const auto version = detail::get_le<std::uint32_t>(bytes.data() + 8);
    if (version != kVersion) throw Error(ErrorCode::CheckpointError, "unsupported version " + std::to_string(version));
    const auto count = detail::get_le<std::uint32_t>(bytes.data() + 12);
    if (bytes.size() != kHeaderSize + 8ull * count) {
        throw Error(ErrorCode::CheckpointError, "size does not match parameter count " + std::to_string(count));
    }
    std::vector<double> params(count);
    for (std::size_t i = 0; i < count; ++i) params[i] = detail::get_le<double>(bytes.data() + kHeaderSize + 8 * i);
    return params;
}

inline void save(const std::filesystem::path& path, std::string_view magic, std::span<const double> params) {
    const auto bytes = encode(magic, params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::CheckpointError, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::CheckpointError, "write failed for " + path.string());
}

inline std::vector<double> load(const std::filesystem::path& path, std::string_view magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::CheckpointError, "cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(magic, bytes);
}

}  // namespace gapsandwich::checkpoint
