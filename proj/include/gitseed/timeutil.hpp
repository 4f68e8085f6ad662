#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace gitseed {

// Epoch-seconds clock, injectable so tests can pin time.
using Clock = std::function<std::int64_t()>;

Clock system_clock();

// "2024-03-01T10:00:00Z"
std::string format_iso8601(std::int64_t epoch_s);

// Parses "YYYY-MM-DD" as midnight UTC. Returns nothing on malformed input.
std::optional<std::int64_t> parse_utc_date(const std::string& s);

// Parses "YYYY-MM-DDTHH:MM:SSZ". Returns nothing on malformed input.
std::optional<std::int64_t> parse_utc_timestamp(const std::string& s);

// Days elapsed since the UTC midnight of start_epoch's day, clamped at 0.
std::int64_t days_since(std::int64_t now, std::int64_t start_of_day_epoch);

}  // namespace gitseed
