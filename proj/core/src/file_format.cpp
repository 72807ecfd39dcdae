#include "file_format.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "bitta/errors.hpp"

namespace bitta::detail {

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

RawContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::string header_text;
  std::string line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      terminated = true;
      break;
    }
    header_text += line;
    header_text += '\n';
  }
  if (!terminated) {
    throw CorruptHeaderError("no blank-line terminator in " + path.string());
  }

  RawContainer c;
  try {
    c.header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeaderError(std::string("invalid JSON (") + e.what() + ")");
  }
  if (!c.header.is_object()) {
    throw CorruptHeaderError("header is not a JSON object");
  }

  std::ostringstream rest;
  rest << in.rdbuf();
  c.payload = rest.str();
  if (in.bad()) throw IoError("read failure on " + path.string());
  return c;
}

void require_format(const nlohmann::json& header, const std::string& expected) {
  const auto found = header_field<std::string>(header, "format");
  if (found != expected) throw UnsupportedVersionError(found);
}

void write_container(const std::filesystem::path& path,
                     const nlohmann::json& header, std::string_view payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << header.dump() << "\n\n";
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

std::string encode_f32(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (double v : values) {
    put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

std::string encode_f64(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 8);
  for (double v : values) put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::vector<double> decode_f32(std::string_view payload, std::size_t expected) {
  if (payload.size() != expected * 4) {
    throw LengthMismatchError(expected, payload.size() / 4);
  }
  std::vector<double> out(expected);
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < expected; ++i) {
    out[i] = static_cast<double>(std::bit_cast<float>(get_u32_le(p + 4 * i)));
  }
  return out;
}

std::vector<double> decode_f64(std::string_view payload, std::size_t expected) {
  if (payload.size() != expected * 8) {
    throw LengthMismatchError(expected, payload.size() / 8);
  }
  std::vector<double> out(expected);
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < expected; ++i) {
    out[i] = std::bit_cast<double>(get_u64_le(p + 8 * i));
  }
  return out;
}

}  // namespace bitta::detail
