#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

struct sqlite3;

namespace gitseed {

enum class SubmissionStatus { Evaluated, SkippedCooldown, SkippedTamper, Failed };

std::string to_string(SubmissionStatus s);
std::optional<SubmissionStatus> submission_status_from_string(const std::string& s);

// One row of durable submission history; cooldowns and dashboards read these.
struct SubmissionRecord {
    std::string assessment_id;
    std::string group_id;
    std::string commit;  // 40 lowercase hex
    std::int64_t pushed_at = 0;
    std::int64_t received_at = 0;
    SubmissionStatus status = SubmissionStatus::Failed;
    std::optional<std::int64_t> evaluated_at;
    int tests_passed = 0;
    int tests_failed = 0;

    bool operator==(const SubmissionRecord&) const = default;
};

struct CooldownDecision {
    bool evaluate = true;
    std::int64_t skipped_until = 0;  // meaningful only when !evaluate
};

struct GroupStats {
    int passed = 0;
    int failed = 0;
    int submissions = 0;
    std::int64_t days = 0;
};

// Single-file history store. Serialized writer, concurrent readers; every
// public call is internally locked.
class CommitDb {
public:
    explicit CommitDb(const std::filesystem::path& path);
    ~CommitDb();
    CommitDb(const CommitDb&) = delete;
    CommitDb& operator=(const CommitDb&) = delete;

    // Evaluate iff no prior Evaluated record, or now - last_evaluated_at >=
    // cooldown_s (inclusive boundary). Skipped records never extend the window.
    CooldownDecision check_cooldown(const std::string& group_id, const std::string& assessment_id,
                                    std::int64_t now, std::int64_t cooldown_s);

    // Appends one row; re-pushes of the same commit are distinct rows.
    void record(const SubmissionRecord& rec);

    // passed/failed from the most recent Evaluated record (0/0 if none);
    // submissions counts all rows; days since UTC midnight of start_date.
    GroupStats stats(const std::string& group_id, const std::string& assessment_id,
                     std::int64_t now, std::int64_t start_date);

    std::vector<SubmissionRecord> all_records();

    // Header-bearing CSV of every record, insertion order.
    std::string dump_csv();

private:
    sqlite3* db_ = nullptr;
    std::mutex mutex_;
};

}  // namespace gitseed
