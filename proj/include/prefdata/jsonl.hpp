#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefdata/manifest.hpp"
#include "prefdata/types.hpp"

namespace prefdata {

using ojson = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Field order on the wire is the declaration order of each struct, with absent
// optionals omitted.
ojson to_json(const ResponseRecord& r);
ojson to_json(const PromptRecord& r);
ojson to_json(const PromptPool& p);
ojson to_json(const PreferencePair& p);
ojson to_json(const FilterSummary& s);
ojson to_json(const RunManifest& m);

// Decoders throw ValidationError naming the field on type errors or invariant
// violations.
void from_json(const nlohmann::json& j, ResponseRecord& r);
void from_json(const nlohmann::json& j, PromptRecord& r);
void from_json(const nlohmann::json& j, PromptPool& p);
void from_json(const nlohmann::json& j, PreferencePair& p);
void from_json(const nlohmann::json& j, FilterSummary& s);
void from_json(const nlohmann::json& j, RunManifest& m);

// Write text to path via a temporary file and rename. Throws IoError with the
// path on failure.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

// One compact JSON document per line.
std::string encode_line(const ojson& j);

namespace detail {
void check_unique_ids(std::span<const ResponseRecord> records);
template <typename T>
void check_batch(std::span<const T>) {}
template <>
inline void check_batch<ResponseRecord>(std::span<const ResponseRecord> records) {
  check_unique_ids(records);
}
}  // namespace detail

template <typename T>
std::size_t write_jsonl(std::span<const T> records, const std::string& path) {
  std::string out;
  for (const auto& r : records) {
    out += encode_line(to_json(r));
    out += '\n';
  }
  write_file_atomic(path, out);
  return records.size();
}

template <typename T>
std::size_t write_jsonl(const std::vector<T>& records, const std::string& path) {
  return write_jsonl(std::span<const T>(records), path);
}

// Parse and validate every line. Blank lines are skipped. Errors carry the
// 1-based line number.
template <typename T>
std::vector<T> parse_jsonl(const std::string& contents) {
  std::vector<T> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string::npos) end = contents.size();
    ++line_no;
    std::string_view line(contents.data() + pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    T value{};
    try {
      from_json(j, value);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(value));
  }
  detail::check_batch<T>(out);
  return out;
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path) {
  return parse_jsonl<T>(read_file(path));
}

RunManifest read_manifest(const std::string& path);
void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace prefdata
