#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gitseed {

enum class LogLevel { Debug, Info, Warn, Error };

using LogFields = std::vector<std::pair<std::string, std::string>>;

// One structured line to stderr: `ts level event key=value...`.
// Values containing spaces or quotes are double-quoted.
void log_event(LogLevel level, std::string_view event, const LogFields& fields = {});

void set_log_min_level(LogLevel level);

}  // namespace gitseed
