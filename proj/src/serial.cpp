#include "ctnn/serial.hpp"

#include <fstream>

namespace ctnn::serial {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_failure, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  require(size >= 0, ErrorCode::io_failure, "cannot stat " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(size));
  if (!data.empty()) {
    in.read(reinterpret_cast<char*>(data.data()), size);
  }
  require(in.good(), ErrorCode::io_failure, "cannot read " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io_failure, "cannot open " + path.string() + " for writing");
  if (!data.empty()) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  }
  out.flush();
  require(out.good(), ErrorCode::io_failure, "cannot write " + path.string());
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_failure, "cannot open " + path.string());
  nlohmann::json value = nlohmann::json::parse(in, nullptr, false);
  require(!value.is_discarded(), ErrorCode::malformed_header,
          path.string() + ": not valid JSON");
  return value;
}

void save_json(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::io_failure, "cannot open " + path.string() + " for writing");
  out << value.dump(2) << "\n";
  out.flush();
  require(out.good(), ErrorCode::io_failure, "cannot write " + path.string());
}

std::int64_t require_int(const nlohmann::json& j, const std::string& key,
                         const std::string& origin) {
  require(j.contains(key) && j.at(key).is_number_integer(), ErrorCode::malformed_header,
          origin + ": missing or non-integer field \"" + key + "\"");
  return j.at(key).get<std::int64_t>();
}

double require_double(const nlohmann::json& j, const std::string& key,
                      const std::string& origin) {
  require(j.contains(key) && j.at(key).is_number(), ErrorCode::malformed_header,
          origin + ": missing or non-numeric field \"" + key + "\"");
  return j.at(key).get<double>();
}

std::string require_string(const nlohmann::json& j, const std::string& key,
                           const std::string& origin) {
  require(j.contains(key) && j.at(key).is_string(), ErrorCode::malformed_header,
          origin + ": missing or non-string field \"" + key + "\"");
  return j.at(key).get<std::string>();
}

nlohmann::json load_header(const std::filesystem::path& path, const std::string& format,
                           int version) {
  nlohmann::json header = load_json(path);
  require(header.is_object(), ErrorCode::malformed_header,
          path.string() + ": header must be a JSON object");
  const std::string actual = require_string(header, "format", path.string());
  require(actual == format, ErrorCode::malformed_header,
          path.string() + ": expected format \"" + format + "\", found \"" + actual + "\"");
  const std::int64_t v = require_int(header, "version", path.string());
  require(v == version, ErrorCode::version_mismatch,
          path.string() + ": unsupported version " + std::to_string(v));
  return header;
}

std::filesystem::path payload_path(const std::filesystem::path& header_path,
                                   const nlohmann::json& header) {
  const std::string name = require_string(header, "payload", header_path.string());
  return header_path.parent_path() / name;
}

} // namespace ctnn::serial
