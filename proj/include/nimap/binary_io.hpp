#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace nimap::io {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
  requires std::is_trivially_copyable_v<T>
void write(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
  requires std::is_trivially_copyable_v<T>
T read(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("unexpected end of checkpoint data");
  return value;
}

template <class T>
void write_array(std::ostream& out, std::span<const T> values) {
  write<std::uint64_t>(out, values.size());
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

template <class T>
std::vector<T> read_array(std::istream& in, std::uint64_t max_count = (std::uint64_t{1} << 34)) {
  auto n = read<std::uint64_t>(in);
  if (n > max_count) throw FormatError("array length out of range");
  std::vector<T> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw FormatError("unexpected end of checkpoint data");
  return values;
}

inline void write_tag(std::ostream& out, const char (&tag)[9], std::uint32_t version) {
  out.write(tag, 8);
  write<std::uint32_t>(out, version);
}

inline void expect_tag(std::istream& in, const char (&tag)[9], std::uint32_t version) {
  char buf[8];
  in.read(buf, 8);
  if (!in || std::string(buf, 8) != std::string(tag, 8)) {
    throw FormatError(std::string("missing chunk tag ") + tag);
  }
  auto v = read<std::uint32_t>(in);
  if (v != version) throw FormatError(std::string("unsupported version for chunk ") + tag);
}

/// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t hash = 0xcbf29ce484222325ull) {
  for (std::byte b : bytes) {
    hash ^= static_cast<std::uint64_t>(b);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 0xcbf29ce484222325ull) {
  return fnv1a(std::as_bytes(std::span(text.data(), text.size())), hash);
}

template <class T>
std::uint64_t checksum(std::span<const T> values, std::uint64_t hash = 0xcbf29ce484222325ull) {
  return fnv1a(std::as_bytes(values), hash);
}

}  // namespace nimap::io
