#include "gitseed/submission_intake.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "gitseed/log.hpp"

namespace gitseed {

namespace fs = std::filesystem;

namespace {

bool is_commit_sha(const std::string& s) {
    if (s.size() != 40) return false;
    for (char c : s) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
    return true;
}

std::map<std::string, std::string> parse_kv(const std::string& body) {
    std::map<std::string, std::string> kv;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace

SubmissionEvent parse_event(const std::string& body, const EventContext& ctx) {
    auto kv = parse_kv(body);
    auto field = [&](const char* name) -> std::string {
        auto it = kv.find(name);
        if (it == kv.end() || it->second.empty())
            throw EventError(EventError::Kind::MissingField,
                             std::string("missing field: ") + name);
        return it->second;
    };

    SubmissionEvent ev;
    ev.assessment_id = field("assessment_id");
    ev.group_id = field("group_id");
    ev.commit = field("commit");
    std::string pushed = field("pushed_at");
    ev.repo_path = field("repo_path");
    ev.pusher = field("pusher");

    if (!is_commit_sha(ev.commit))
        throw EventError(EventError::Kind::BadCommitId,
                         "commit must be 40 lowercase hex chars, got '" + ev.commit + "'");
    try {
        size_t pos = 0;
        ev.pushed_at = std::stoll(pushed, &pos);
        if (pos != pushed.size() || ev.pushed_at <= 0) throw std::invalid_argument("range");
    } catch (const std::exception&) {
        throw EventError(EventError::Kind::MissingField,
                         "pushed_at must be a positive epoch integer, got '" + pushed + "'");
    }
    if (!ctx.assessment_ids.count(ev.assessment_id))
        throw EventError(EventError::Kind::UnknownAssessment,
                         "unknown assessment '" + ev.assessment_id + "'");
    if (!ctx.group_ids.count(ev.group_id))
        throw EventError(EventError::Kind::UnknownGroup, "unknown group '" + ev.group_id + "'");
    return ev;
}

std::vector<SubmissionEvent> coalesce(std::vector<SubmissionEvent> queue) {
    std::vector<SubmissionEvent> out;
    std::map<std::pair<std::string, std::string>, size_t> slot;
    for (auto& ev : queue) {
        auto key = std::make_pair(ev.assessment_id, ev.group_id);
        auto it = slot.find(key);
        if (it == slot.end()) {
            slot[key] = out.size();
            out.push_back(std::move(ev));
        } else if (ev.pushed_at >= out[it->second].pushed_at) {
            out[it->second] = std::move(ev);
        }
    }
    return out;
}

DropDirWatcher::DropDirWatcher(fs::path dir, Options options)
    : dir_(std::move(dir)), options_(options) {}

void DropDirWatcher::run(const EventContext& ctx, const Sink& sink,
                         const std::atomic<bool>& stop) {
    fs::create_directories(dir_ / "processing");
    fs::create_directories(dir_ / "done");
    fs::create_directories(dir_ / "failed");

    std::map<fs::path, std::uintmax_t> sizes;  // completion heuristic state
    while (!stop.load()) {
        std::set<fs::path> seen;
        std::error_code ec;
        for (const auto& entry : fs::directory_iterator(dir_, ec)) {
            if (!entry.is_regular_file(ec)) continue;
            if (entry.path().extension() != ".sub") continue;
            seen.insert(entry.path());

            std::uintmax_t size = entry.file_size(ec);
            if (ec) continue;
            auto it = sizes.find(entry.path());
            if (it == sizes.end() || it->second != size) {
                sizes[entry.path()] = size;  // first sighting or still growing
                continue;
            }
            sizes.erase(it);

            fs::path staged = dir_ / "processing" / entry.path().filename();
            fs::rename(entry.path(), staged, ec);
            if (ec) continue;  // raced with another consumer

            try {
                std::ifstream in(staged, std::ios::binary);
                std::ostringstream body;
                body << in.rdbuf();
                SubmissionEvent ev = parse_event(body.str(), ctx);
                log_event(LogLevel::Info, "event_received",
                          {{"file", staged.filename().string()},
                           {"assessment", ev.assessment_id},
                           {"group", ev.group_id}});
                sink(std::move(ev), staged);
            } catch (const std::exception& e) {
                log_event(LogLevel::Warn, "event_rejected",
                          {{"file", staged.filename().string()}, {"error", e.what()}});
                finish(staged, false, e.what());
            }
        }
        for (auto it = sizes.begin(); it != sizes.end();) {
            it = seen.count(it->first) ? std::next(it) : sizes.erase(it);
        }
        std::this_thread::sleep_for(options_.poll_interval);
    }
}

void DropDirWatcher::finish(const fs::path& processing_file, bool ok, const std::string& reason) {
    fs::path target =
        processing_file.parent_path().parent_path() / (ok ? "done" : "failed") /
        processing_file.filename();
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    fs::rename(processing_file, target, ec);
    if (!ok) {
        fs::path sidecar = target;
        sidecar += ".reason";
        std::ofstream out(sidecar, std::ios::binary);
        out << reason << "\n";
    }
}

void DropDirWatcher::requeue(const fs::path& processing_file) {
    fs::path target =
        processing_file.parent_path().parent_path() / processing_file.filename();
    std::error_code ec;
    fs::rename(processing_file, target, ec);
}

}  // namespace gitseed
