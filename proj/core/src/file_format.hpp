#ifndef BITTA_SRC_FILE_FORMAT_HPP
#define BITTA_SRC_FILE_FORMAT_HPP

// Shared on-disk container used by stream, checkpoint, and adapter-state
// files: one compact JSON header line, a blank line, then a little-endian
// binary payload. Private to the library.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bitta/errors.hpp"

namespace bitta::detail {

struct RawContainer {
  nlohmann::json header;
  std::string payload;
};

/// Throws IoError on open/read failure, CorruptHeaderError when the header
/// is missing, unterminated, or not valid JSON.
RawContainer read_container(const std::filesystem::path& path);

/// Throws CorruptHeaderError when "format" is absent,
/// UnsupportedVersionError when it differs from `expected`.
void require_format(const nlohmann::json& header, const std::string& expected);

void write_container(const std::filesystem::path& path,
                     const nlohmann::json& header, std::string_view payload);

std::string encode_f32(std::span<const double> values);
std::string encode_f64(std::span<const double> values);

/// Throw LengthMismatchError when the payload does not hold exactly
/// `expected` values.
std::vector<double> decode_f32(std::string_view payload, std::size_t expected);
std::vector<double> decode_f64(std::string_view payload, std::size_t expected);

/// Fetch a header field, throwing CorruptHeaderError when absent or of the
/// wrong JSON type.
template <typename T>
T header_field(const nlohmann::json& header, const char* key) {
  if (!header.contains(key)) {
    throw CorruptHeaderError(std::string("missing field \"") + key + "\"");
  }
  try {
    return header.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw CorruptHeaderError(std::string("field \"") + key +
                             "\" has the wrong type");
  }
}

}  // namespace bitta::detail

#endif  // BITTA_SRC_FILE_FORMAT_HPP
