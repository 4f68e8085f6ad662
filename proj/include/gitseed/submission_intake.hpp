#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "gitseed/errors.hpp"

namespace gitseed {

// One runner-reported push, parsed from a drop-dir event file.
struct SubmissionEvent {
    std::string assessment_id;
    std::string group_id;
    std::string commit;  // 40 lowercase hex
    std::int64_t pushed_at = 0;
    std::string repo_path;
    std::string pusher;

    bool operator==(const SubmissionEvent&) const = default;
};

struct EventError : Error {
    enum class Kind { MissingField, BadCommitId, UnknownAssessment, UnknownGroup };
    EventError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
    Kind kind;
};

// Valid ids an incoming event may reference.
struct EventContext {
    std::set<std::string> assessment_ids;
    std::set<std::string> group_ids;
};

// Parses the key=value body of an event file. Throws EventError naming the
// first bad field (field order: assessment_id, group_id, commit, pushed_at,
// repo_path, pusher).
SubmissionEvent parse_event(const std::string& body, const EventContext& ctx);

// Keeps at most one pending event per (assessment_id, group_id): the one
// with the greatest pushed_at, at the key's first position. Relative order
// of distinct keys is preserved.
std::vector<SubmissionEvent> coalesce(std::vector<SubmissionEvent> queue);

// Polls a drop directory for completed `*.sub` files and hands each one to
// the sink exactly once. A file counts as complete when its size is stable
// across two polls; consumption is the atomic rename into processing/.
// Malformed files land in failed/ with a `.reason` sidecar. Never throws on
// bad input.
class DropDirWatcher {
public:
    struct Options {
        std::chrono::milliseconds poll_interval{1000};
    };

    DropDirWatcher(std::filesystem::path dir, Options options = {});

    using Sink = std::function<void(SubmissionEvent, std::filesystem::path)>;

    // Runs until `stop` becomes true.
    void run(const EventContext& ctx, const Sink& sink, const std::atomic<bool>& stop);

    // Terminal accounting for a consumed file: done/ on success, failed/
    // (plus reason sidecar) otherwise.
    static void finish(const std::filesystem::path& processing_file, bool ok,
                       const std::string& reason = "");

    // Returns an unstarted file to the drop dir so a later run re-ingests it.
    static void requeue(const std::filesystem::path& processing_file);

private:
    std::filesystem::path dir_;
    Options options_;
};

}  // namespace gitseed
