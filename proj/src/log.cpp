#include "ipseg/log.hpp"

#include <iostream>
#include <mutex>

namespace ipseg::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

Sink& current_sink() {
  static Sink sink;
  return sink;
}

Level& current_threshold() {
  static Level level = Level::warning;
  return level;
}

const char* tag(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warning: return "warn";
    case Level::error: return "error";
  }
  return "?";
}

}  // namespace

void set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  current_sink() = std::move(sink);
}

void set_threshold(Level level) {
  std::lock_guard lock(sink_mutex());
  current_threshold() = level;
}

Level threshold() {
  std::lock_guard lock(sink_mutex());
  return current_threshold();
}

void write(Level level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(level, message);
    return;
  }
  if (level < current_threshold()) return;
  std::clog << '[' << tag(level) << "] " << message << '\n';
}

}  // namespace ipseg::log
