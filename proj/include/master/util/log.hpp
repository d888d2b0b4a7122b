#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

namespace master {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Level comes from MASTER_LOG in {error, info, debug}; default info.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("MASTER_LOG");
    if (!env) return LogLevel::Info;
    std::string s{env};
    if (s == "error") return LogLevel::Error;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

inline void log_line(LogLevel lvl, const std::string& msg) {
  if (lvl > log_level()) return;
  const char* tag = lvl == LogLevel::Error ? "error" : (lvl == LogLevel::Info ? "info" : "debug");
  std::cerr << "[" << tag << "] " << msg << "\n";
}

inline void log_info(const std::string& msg) { log_line(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log_line(LogLevel::Debug, msg); }
inline void log_error(const std::string& msg) { log_line(LogLevel::Error, msg); }

}  // namespace master
