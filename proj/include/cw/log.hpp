#pragma once

#include <fmt/format.h>

#include <functional>
#include <string>
#include <string_view>

namespace cw::log {

enum class Level { debug, info, warn, error };

using Sink = std::function<void(Level, std::string_view)>;

// Replace the global sink (tests use this to capture warnings).
// Passing nullptr restores the default stderr sink.
void set_sink(Sink sink);
void emit(Level level, std::string_view message);

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
    emit(Level::debug, fmt::format(f, std::forward<Args>(args)...));
}
template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
    emit(Level::info, fmt::format(f, std::forward<Args>(args)...));
}
template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
    emit(Level::warn, fmt::format(f, std::forward<Args>(args)...));
}
template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
    emit(Level::error, fmt::format(f, std::forward<Args>(args)...));
}

} // namespace cw::log
