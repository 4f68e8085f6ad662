#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "gitseed/config.hpp"
#include "gitseed/subprocess.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Self-cleaning unique temp directory.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = fs::temp_directory_path() /
                ("gitseed-test-" + std::to_string(stamp) + "-" +
                 std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& sub) const { return path_ / sub; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

// Test clock whose reading is set explicitly.
class FakeClock {
public:
    explicit FakeClock(std::int64_t start = 1700000000) : now_(std::make_shared<Value>()) {
        now_->v.store(start);
    }
    gitseed::Clock fn() const {
        auto now = now_;
        return [now] { return now->v.load(); };
    }
    void set(std::int64_t t) { now_->v.store(t); }
    void advance(std::int64_t dt) { now_->v.fetch_add(dt); }
    std::int64_t now() const { return now_->v.load(); }

private:
    struct Value {
        std::atomic<std::int64_t> v{0};
    };
    std::shared_ptr<Value> now_;
};

// Builds one-assessment course configs for tests.
struct ConfigBuilder {
    fs::path root;
    explicit ConfigBuilder(const fs::path& r) : root(r) {}

    gitseed::CourseConfig make(const std::string& course_id = "cs101") {
        gitseed::CourseConfig c;
        c.course_id = course_id;
        c.server_base_url = "http://127.0.0.1:1";  // callers override
        c.auth_token_env = "GS_TOKEN";
        c.drop_dir = root / "drop";
        c.work_dir = root / "work";
        c.state_db_path = root / "state.db";
        c.roster_path = root / "roster.txt";
        return c;
    }

    gitseed::AssessmentConfig lab(const std::string& id, const fs::path& tests_dir,
                                  const std::string& run_cmd) {
        gitseed::AssessmentConfig a;
        a.id = id;
        a.kind = gitseed::AssessmentKind::Lab;
        a.start_date = 1700000000 - (1700000000 % 86400);  // midnight before the epoch base
        a.cooldown_s = 60;
        a.cpu_limit_s = 5;
        a.wall_limit_s = 15;
        a.tests_dir = tests_dir;
        a.run_cmd = run_cmd;
        return a;
    }
};

// Waits for `pred` to become true, polling; returns false on timeout.
template <typename Pred>
bool eventually(Pred pred, std::chrono::milliseconds timeout = std::chrono::seconds(10),
                std::chrono::milliseconds step = std::chrono::milliseconds(50)) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        if (pred()) return true;
        std::this_thread::sleep_for(step);
    }
    return pred();
}

// git helpers for fixtures
inline gitseed::CmdResult git(const fs::path& cwd, const std::vector<std::string>& args) {
    std::vector<std::string> argv = {"git"};
    argv.insert(argv.end(), args.begin(), args.end());
    return gitseed::run_command(argv, cwd,
                                {{"GIT_AUTHOR_NAME", "tester"},
                                 {"GIT_AUTHOR_EMAIL", "tester@example.invalid"},
                                 {"GIT_COMMITTER_NAME", "tester"},
                                 {"GIT_COMMITTER_EMAIL", "tester@example.invalid"}});
}

// Creates a bare repo with one initial commit containing the given files.
inline fs::path make_bare_repo_with_commit(
    const fs::path& root, const std::string& name,
    const std::vector<std::pair<std::string, std::string>>& files) {
    fs::path bare = root / (name + ".git");
    git(root, {"init", "--quiet", "--bare", "--initial-branch=main", bare.string()});
    fs::path clone = root / (name + "-seed");
    git(root, {"clone", "--quiet", "file://" + fs::absolute(bare).string(), clone.string()});
    for (const auto& [fname, content] : files) write_file(clone / fname, content);
    git(clone, {"add", "-A"});
    git(clone, {"commit", "--quiet", "-m", "seed"});
    git(clone, {"push", "--quiet", "origin", "HEAD:refs/heads/main"});
    std::error_code ec;
    fs::remove_all(clone, ec);
    return bare;
}

}  // namespace testutil
