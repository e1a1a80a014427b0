#pragma once

// Little-endian scalar packing and crash-safe file replacement.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "voxworld/error.hpp"

namespace voxworld::binio {

using Bytes = std::vector<std::uint8_t>;

template <typename T>
  requires std::is_arithmetic_v<T>
void put(Bytes& out, T value) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

inline void put_bytes(Bytes& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
}

/// Bounds-checked forward reader over a byte buffer.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data, std::string what = "buffer")
      : data_(data), what_(std::move(what)) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    need(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> get_span(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(std::size_t n) { need(n); pos_ += n; }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::MalformedContainer,
                  "unexpected end of " + what_ + " at byte " + std::to_string(pos_), what_);
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoFailure, "cannot open " + path.string(), path.string());
  }
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline std::string read_text(const std::filesystem::path& path) {
  auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

/// Writes to a sibling temporary and renames over `path`, so readers and
/// crash recovery only ever see the old or the new content.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::span<const std::uint8_t> data) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string(), path.string());
    }
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      throw Error(ErrorCode::IoFailure, "short write to " + tmp.string(), path.string());
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorCode::IoFailure, "rename failed: " + ec.message(), path.string());
  }
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

}  // namespace voxworld::binio
