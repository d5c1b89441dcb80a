#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace codewm {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// hashing / encoding (OpenSSL-backed)
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::string_view bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// text helpers
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Removes a surrounding markdown code fence (```lang ... ```) if present.
std::string strip_code_fences(std::string_view s);

// file helpers
std::string read_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
/// Non-blank lines.
std::vector<std::string> read_lines(const std::filesystem::path& path);
struct NumberedLine {
  std::size_t number;  // 1-based, blank lines included in the count
  std::string text;
};
std::vector<NumberedLine> read_numbered_lines(const std::filesystem::path& path);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// raised by any task is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace codewm
