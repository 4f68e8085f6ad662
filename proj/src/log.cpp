#include "gitseed/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>

#include "gitseed/timeutil.hpp"

namespace gitseed {
namespace {

std::mutex g_log_mutex;
std::atomic<int> g_min_level{static_cast<int>(LogLevel::Info)};

const char* level_name(LogLevel l) {
    switch (l) {
        case LogLevel::Debug: return "DEBUG";
        case LogLevel::Info: return "INFO";
        case LogLevel::Warn: return "WARN";
        case LogLevel::Error: return "ERROR";
    }
    return "?";
}

bool needs_quoting(const std::string& v) {
    if (v.empty()) return true;
    for (char c : v) {
        if (c == ' ' || c == '"' || c == '=' || c == '\n' || c == '\t') return true;
    }
    return false;
}

std::string quote(const std::string& v) {
    std::string out = "\"";
    for (char c : v) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

void set_log_min_level(LogLevel level) { g_min_level.store(static_cast<int>(level)); }

void log_event(LogLevel level, std::string_view event, const LogFields& fields) {
    if (static_cast<int>(level) < g_min_level.load()) return;
    std::ostringstream line;
    line << format_iso8601(system_clock()()) << ' ' << level_name(level) << ' ' << event;
    for (const auto& [k, v] : fields) {
        line << ' ' << k << '=' << (needs_quoting(v) ? quote(v) : v);
    }
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::fprintf(stderr, "%s\n", line.str().c_str());
}

}  // namespace gitseed
