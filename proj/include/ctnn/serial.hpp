#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctnn/errors.hpp"

// Little-endian binary payload helpers and JSON header I/O shared by the
// raster, tree, hierarchy and checkpoint file formats.

namespace ctnn::serial {

inline void append_u8(std::vector<std::uint8_t>& out, std::uint8_t value) {
  out.push_back(value);
}

inline void append_u32(std::vector<std::uint8_t>& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

inline void append_u64(std::vector<std::uint8_t>& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

inline void append_f64(std::vector<std::uint8_t>& out, double value) {
  append_u64(out, std::bit_cast<std::uint64_t>(value));
}

// Bounds-checked sequential reader over a payload buffer.
class Reader {
public:
  Reader(const std::vector<std::uint8_t>& data, std::string origin)
      : data_(data.data()), size_(data.size()), origin_(std::move(origin)) {}

  std::uint8_t read_u8() {
    need(1);
    return data_[pos_++];
  }

  std::uint32_t read_u32() {
    need(4);
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
      value |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return value;
  }

  std::uint64_t read_u64() {
    need(8);
    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) {
      value |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return value;
  }

  double read_f64() { return std::bit_cast<double>(read_u64()); }

  std::size_t remaining() const { return size_ - pos_; }

  void expect_end() const {
    require(pos_ == size_, ErrorCode::corrupt_payload,
            origin_ + ": trailing bytes in payload");
  }

private:
  void need(std::size_t n) {
    require(pos_ + n <= size_, ErrorCode::corrupt_payload,
            origin_ + ": payload truncated");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data);

nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& value);

// Header field accessors that turn missing or mistyped fields into
// malformed_header errors naming the file.
std::int64_t require_int(const nlohmann::json& j, const std::string& key,
                         const std::string& origin);
double require_double(const nlohmann::json& j, const std::string& key,
                      const std::string& origin);
std::string require_string(const nlohmann::json& j, const std::string& key,
                           const std::string& origin);

// Validates "format" and "version" and returns the parsed header.
nlohmann::json load_header(const std::filesystem::path& path, const std::string& format,
                           int version);

// Path of the binary payload referenced by a header.
std::filesystem::path payload_path(const std::filesystem::path& header_path,
                                   const nlohmann::json& header);

} // namespace ctnn::serial
