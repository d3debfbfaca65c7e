#include "alsim/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace alsim::log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;
Sink g_sink;
}  // namespace

void set_level(Level lvl) { g_level.store(lvl); }
Level level() { return g_level.load(); }

void set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void write(Level lvl, std::string_view message) {
  static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(lvl, message);
    return;
  }
  std::fprintf(stderr, "[%s] %.*s\n", kNames[static_cast<int>(lvl)], static_cast<int>(message.size()),
               message.data());
}

}  // namespace alsim::log
