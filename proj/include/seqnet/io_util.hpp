#pragma once

// Byte-level helpers shared by the binary and CSV formats.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace seqnet::io {

inline std::uint32_t read_u32_le(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

inline std::uint64_t read_u64_le(const unsigned char* p) {
  return std::uint64_t{read_u32_le(p)} | (std::uint64_t{read_u32_le(p + 4)} << 32);
}

inline void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void append_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);
void write_file(const std::filesystem::path& path, std::string_view text);
std::vector<unsigned char> read_file(const std::filesystem::path& path);

std::vector<std::string> split_csv(const std::string& line);

/// Strict parse: the whole field must be a number.
bool parse_double(const std::string& field, double& out);

}  // namespace seqnet::io
