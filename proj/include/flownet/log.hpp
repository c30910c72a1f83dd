#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace flownet::log {

enum class Level : int
{
  Error = 0,
  Warn = 1,
  Info = 2,
  Debug = 3
};

inline std::atomic<int>& threshold()
{
  static std::atomic<int> level{ static_cast<int>(Level::Warn) };
  return level;
}

inline void set_level(Level level) { threshold() = static_cast<int>(level); }

inline bool enabled(Level level)
{
  return static_cast<int>(level) <= threshold().load();
}

inline void write(Level level, std::string_view msg)
{
  if (!enabled(level))
    return;
  static std::mutex mutex;
  static constexpr std::string_view tags[] = { "error", "warn", "info", "debug" };
  std::lock_guard lock(mutex);
  std::cerr << "[flownet " << tags[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void warn(std::string_view msg) { write(Level::Warn, msg); }
inline void info(std::string_view msg) { write(Level::Info, msg); }
inline void debug(std::string_view msg) { write(Level::Debug, msg); }

} // namespace flownet::log
