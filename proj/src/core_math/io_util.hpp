#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace mergelab {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and renames, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view bytes);

template <typename T>
void append_pod(std::string& out, const T& value) {
    out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::string_view bytes, std::size_t offset) {
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    return value;
}

inline std::string_view as_chars(std::span<const float> values) {
    return {reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float)};
}

/// Fixed 6-decimal rendering used for every numeric report field.
std::string fixed6(double value);

/// Shortest-roundtrip-safe float rendering (9 significant digits).
std::string float9(float value);

}  // namespace mergelab
