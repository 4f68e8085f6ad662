#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gitseed/gitlab_api.hpp"

namespace gitseed {

// Offline stand-in for a GitLab server: serves the REST subset the client
// uses, backs every project with a local bare repository, and plays the CI
// runner by dropping an event file on each push to a submission repo.
class MockGitLab {
public:
    struct Options {
        std::filesystem::path repo_root;
        std::filesystem::path drop_dir;
        std::string token = "test-token";
    };

    explicit MockGitLab(Options options);
    ~MockGitLab();
    MockGitLab(const MockGitLab&) = delete;
    MockGitLab& operator=(const MockGitLab&) = delete;

    std::string base_url() const;
    const std::string& token() const;
    void stop();

    void add_user(const std::string& username);

    // Commits `files` to the project's bare repo as `author` and, for
    // submission repos, writes the runner event file. Authors below
    // Developer are rejected with PermissionDenied.
    std::string simulate_student_push(const std::string& project_path,
                                      const std::map<std::string, std::string>& files,
                                      const std::string& author);

    // Pure read of membership state; nullopt when never added.
    std::optional<Role> member_role(const std::string& project_path,
                                    const std::string& username) const;

    std::filesystem::path bare_repo_path(const std::string& project_path) const;

    // Deterministic deep snapshot of groups/projects/memberships/users.
    nlohmann::json state_snapshot() const;

    std::vector<std::pair<std::string, std::string>> request_log() const;

    // Next n requests answer 500, for retry-path tests.
    void fail_next_requests(int n);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace gitseed
