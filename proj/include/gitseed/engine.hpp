#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "gitseed/commit_db.hpp"
#include "gitseed/config.hpp"
#include "gitseed/evaluator.hpp"
#include "gitseed/gitlab_api.hpp"
#include "gitseed/provisioner.hpp"
#include "gitseed/submission_intake.hpp"
#include "gitseed/timeutil.hpp"

namespace gitseed {

// Serve-mode runtime: one drop-dir watcher feeding a bounded queue drained
// by N evaluation workers. At most one in-flight evaluation per
// (assessment, group); queued duplicates coalesce to the newest push.
class Engine {
public:
    struct Options {
        int workers = 2;
        std::chrono::milliseconds poll_interval{1000};
        Clock clock = system_clock();
        ClientOptions client_options{};
        std::size_t queue_capacity = 256;
    };

    Engine(const CourseConfig& config, const Roster& roster, const std::string& token,
           Options options = {});
    ~Engine();

    // Blocks until request_stop(); in-flight evaluations finish, queued but
    // unstarted events return to the drop dir.
    void run();

    // Safe to call from a signal handler path (atomic flag only).
    void request_stop();

    CommitDb& db() { return db_; }
    Evaluator& evaluator() { return evaluator_; }

private:
    struct Pending {
        SubmissionEvent event;
        std::filesystem::path file;
    };

    void enqueue(SubmissionEvent event, std::filesystem::path file);
    bool dequeue(Pending& out);
    void worker_loop();
    std::mutex& key_lock(const std::string& assessment_id, const std::string& group_id);

    const CourseConfig& config_;
    const Roster& roster_;
    Options options_;
    GitLabClient client_;
    CommitDb db_;
    Evaluator evaluator_;

    std::atomic<bool> stop_{false};
    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<Pending> queue_;

    std::mutex key_locks_mutex_;
    std::map<std::pair<std::string, std::string>, std::unique_ptr<std::mutex>> key_locks_;
};

}  // namespace gitseed
