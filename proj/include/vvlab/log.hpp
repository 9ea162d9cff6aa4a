#pragma once

// Structured (JSON-lines) logging to standard error.

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

#include <json.hpp>

namespace vvlab::log {

inline std::atomic<bool>& verbose_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}
inline std::atomic<bool>& quiet_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void emit(const char* level, const std::string& msg, const nlohmann::json& extra = {}) {
  if (quiet_flag()) return;
  static std::mutex m;
  nlohmann::json line = {{"level", level}, {"msg", msg}};
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) line[it.key()] = it.value();
  std::lock_guard lock(m);
  std::cerr << line.dump() << '\n';
}

inline void info(const std::string& msg, const nlohmann::json& extra = {}) {
  if (verbose_flag()) emit("info", msg, extra);
}
inline void warn(const std::string& msg, const nlohmann::json& extra = {}) { emit("warn", msg, extra); }
inline void error(const std::string& msg, const nlohmann::json& extra = {}) { emit("error", msg, extra); }

}  // namespace vvlab::log
