#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace nvstorm {

// Run identity embedded in every text output so a result file can always be
// traced back to the exact (tool, config, seed) that produced it.
struct Provenance {
  std::string tool_version;
  std::string config_hash;
  std::uint64_t seed = 0;
};

// "# key = value" comment block placed ahead of CSV headers and in sidecars.
std::string provenance_comment(const Provenance& p);

// Shortest round-trip decimal representation of a double ("%.17g" trimmed);
// identical inputs always print identical bytes.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view data);
std::string hash_hex(std::uint64_t h);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

// Binary 16-bit PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const std::filesystem::path& path, int width, int height,
                 std::span<const std::uint16_t> samples);

}  // namespace nvstorm
