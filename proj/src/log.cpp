#include "cw/log.hpp"

#include <cstdio>
#include <mutex>

namespace cw::log {

namespace {

std::mutex g_mutex;
Sink g_sink;

const char* level_name(Level level) {
    switch (level) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
    }
    return "?";
}

} // namespace

void set_sink(Sink sink) {
    std::lock_guard<std::mutex> lock(g_mutex);
    g_sink = std::move(sink);
}

void emit(Level level, std::string_view message) {
    std::lock_guard<std::mutex> lock(g_mutex);
    if (g_sink) {
        g_sink(level, message);
        return;
    }
    if (level == Level::debug) return;
    std::fprintf(stderr, "[%s] %.*s\n", level_name(level),
                 static_cast<int>(message.size()), message.data());
}

} // namespace cw::log
