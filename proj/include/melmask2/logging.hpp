#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace melmask2 {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Verbosity comes from the MELMASK2_LOG environment variable
// (error | info | debug); default is error-only.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MELMASK2_LOG");
    if (env == nullptr) return LogLevel::kError;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    return LogLevel::kError;
  }();
  return level;
}

inline void log_error(const std::string& msg) {
  std::fprintf(stderr, "[melmask2] error: %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo)
    std::fprintf(stderr, "[melmask2] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug)
    std::fprintf(stderr, "[melmask2] debug: %s\n", msg.c_str());
}

}  // namespace melmask2
