#include "gitseed/timeutil.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

namespace gitseed {

Clock system_clock() {
    return [] {
        return static_cast<std::int64_t>(
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count());
    };
}

std::string format_iso8601(std::int64_t epoch_s) {
    std::time_t t = static_cast<std::time_t>(epoch_s);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::optional<std::int64_t> parse_utc_date(const std::string& s) {
    std::tm tm{};
    int y = 0, mo = 0, d = 0;
    char trail = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &y, &mo, &d, &trail) != 3) return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    return static_cast<std::int64_t>(timegm(&tm));
}

std::optional<std::int64_t> parse_utc_timestamp(const std::string& s) {
    std::tm tm{};
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char z = 0, trail = 0;
    int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c%c", &y, &mo, &d, &h, &mi, &sec, &z,
                        &trail);
    if (n != 7 || z != 'Z') return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = sec;
    return static_cast<std::int64_t>(timegm(&tm));
}

std::int64_t days_since(std::int64_t now, std::int64_t start_of_day_epoch) {
    if (now <= start_of_day_epoch) return 0;
    return (now - start_of_day_epoch) / 86400;
}

}  // namespace gitseed
