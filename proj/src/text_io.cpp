#include "nvstorm/text_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nvstorm {

std::string provenance_comment(const Provenance& p) {
  std::ostringstream out;
  out << "# tool_version = " << p.tool_version << "\n";
  out << "# config_hash = " << p.config_hash << "\n";
  out << "# seed = " << p.seed << "\n";
  return out.str();
}

std::string format_double(double v) {
  char buf[40];
  // %.17g is exact for doubles; prefer the shortest representation that
  // round-trips so files stay readable.
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  return buf;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_pgm16(const std::filesystem::path& path, int width, int height,
                 std::span<const std::uint16_t> samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("write_pgm16: sample count does not match geometry");
  std::ostringstream out;
  out << "P5\n" << width << " " << height << "\n65535\n";
  for (std::uint16_t s : samples) {
    out.put(static_cast<char>(s >> 8));  // most significant byte first per Netpbm
    out.put(static_cast<char>(s & 0xff));
  }
  write_text_file(path, out.str());
}

}  // namespace nvstorm
