#pragma once

#include <functional>
#include <string_view>

namespace ipseg::log {

enum class Level { debug = 0, info = 1, warning = 2, error = 3 };

using Sink = std::function<void(Level, std::string_view)>;

/// Replaces the process-wide sink; an empty sink restores the stderr default.
void set_sink(Sink sink);
void set_threshold(Level level);
Level threshold();

void write(Level level, std::string_view message);

inline void debug(std::string_view message) { write(Level::debug, message); }
inline void info(std::string_view message) { write(Level::info, message); }
inline void warn(std::string_view message) { write(Level::warning, message); }
inline void error(std::string_view message) { write(Level::error, message); }

}  // namespace ipseg::log
