#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "master/util/error.hpp"
#include "master/util/rng.hpp"

namespace master {

using json = nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::filesystem::path p{path};
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("io", "cannot write " + path);
  out << contents;
  if (!out) fail("io", "write failed for " + path);
}

inline std::string file_fingerprint(const std::string& path) {
  std::string bytes = read_file(path);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes.data(), bytes.size())));
  return std::string(buf);
}

// Calls fn(line_number, parsed_object) for each non-empty line. Line numbers
// are 1-based; parse failures report them.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail("format", path + ":" + std::to_string(lineno) + ": malformed JSON line: " + e.what());
    }
    fn(lineno, obj);
  }
}

inline std::string require_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string())
    fail("format", where + ": missing string field '" + std::string(key) + "'");
  return obj[key].get<std::string>();
}

}  // namespace master
