#include "gitseed/engine.hpp"

#include "gitseed/log.hpp"

namespace gitseed {

Engine::Engine(const CourseConfig& config, const Roster& roster, const std::string& token,
               Options options)
    : config_(config),
      roster_(roster),
      options_(std::move(options)),
      client_(config.server_base_url, token, options_.client_options),
      db_(config.state_db_path),
      evaluator_(config_, roster_, client_, db_, token, Evaluator::Options{options_.clock}) {}

Engine::~Engine() = default;

void Engine::request_stop() { stop_.store(true); }

std::mutex& Engine::key_lock(const std::string& assessment_id, const std::string& group_id) {
    std::lock_guard<std::mutex> lock(key_locks_mutex_);
    auto& slot = key_locks_[{assessment_id, group_id}];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

void Engine::enqueue(SubmissionEvent event, std::filesystem::path file) {
    std::unique_lock<std::mutex> lock(queue_mutex_);
    queue_cv_.wait(lock, [&] { return queue_.size() < options_.queue_capacity || stop_.load(); });

    // coalesce: one pending event per key, newest push wins, slot position kept
    for (auto& pending : queue_) {
        if (pending.event.assessment_id == event.assessment_id &&
            pending.event.group_id == event.group_id) {
            if (event.pushed_at >= pending.event.pushed_at) {
                DropDirWatcher::finish(pending.file, true);  // superseded
                pending = Pending{std::move(event), std::move(file)};
            } else {
                DropDirWatcher::finish(file, true);
            }
            queue_cv_.notify_all();
            return;
        }
    }
    queue_.push_back(Pending{std::move(event), std::move(file)});
    queue_cv_.notify_all();
}

bool Engine::dequeue(Pending& out) {
    std::unique_lock<std::mutex> lock(queue_mutex_);
    queue_cv_.wait(lock, [&] { return !queue_.empty() || stop_.load(); });
    // on stop, unstarted work stays queued for requeueing
    if (stop_.load() || queue_.empty()) return false;
    out = std::move(queue_.front());
    queue_.pop_front();
    queue_cv_.notify_all();
    return true;
}

void Engine::worker_loop() {
    Pending pending;
    while (dequeue(pending)) {
        std::lock_guard<std::mutex> guard(
            key_lock(pending.event.assessment_id, pending.event.group_id));
        try {
            EvalOutcome outcome = evaluator_.evaluate(pending.event);
            bool ok = outcome.status != SubmissionStatus::Failed;
            DropDirWatcher::finish(pending.file, ok, outcome.detail);
        } catch (const std::exception& e) {
            // evaluate() reports failures through its outcome; this is a
            // last-resort guard so a worker never dies on student input
            log_event(LogLevel::Error, "worker_error", {{"error", e.what()}});
            DropDirWatcher::finish(pending.file, false, e.what());
        }
    }
}

void Engine::run() {
    std::filesystem::create_directories(config_.drop_dir);
    std::filesystem::create_directories(config_.work_dir);

    EventContext ctx;
    for (const auto& a : config_.assessments) ctx.assessment_ids.insert(a.id);
    for (const auto& g : roster_.entries) ctx.group_ids.insert(g.group_id);

    log_event(LogLevel::Info, "serve_started",
              {{"course", config_.course_id},
               {"workers", std::to_string(options_.workers)},
               {"drop_dir", config_.drop_dir.string()}});

    DropDirWatcher watcher(config_.drop_dir, {options_.poll_interval});
    std::thread watcher_thread([&] {
        watcher.run(
            ctx,
            [this](SubmissionEvent ev, std::filesystem::path file) {
                enqueue(std::move(ev), std::move(file));
            },
            stop_);
    });

    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(options_.workers));
    for (int i = 0; i < options_.workers; ++i)
        workers.emplace_back([this] { worker_loop(); });

    watcher_thread.join();
    queue_cv_.notify_all();
    for (auto& w : workers) w.join();

    // unstarted events go back to the drop dir for the next run
    std::lock_guard<std::mutex> lock(queue_mutex_);
    for (auto& pending : queue_) DropDirWatcher::requeue(pending.file);
    queue_.clear();
    log_event(LogLevel::Info, "serve_stopped", {{"course", config_.course_id}});
}

}  // namespace gitseed
