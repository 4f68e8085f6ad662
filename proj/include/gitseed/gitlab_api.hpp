#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gitseed {

// GitLab REST access levels; totally ordered.
enum class Role : int { Reporter = 20, Developer = 30, Maintainer = 40, Owner = 50 };

std::string to_string(Role r);
std::optional<Role> role_from_access_level(int level);
std::optional<Role> role_from_string(const std::string& s);

enum class RemoteKind { Group, Project };

struct RemoteRef {
    RemoteKind kind = RemoteKind::Group;
    std::int64_t id = 0;
    std::string full_path;
    std::string clone_url;  // projects only

    bool operator==(const RemoteRef&) const = default;
};

struct Member {
    std::string username;
    Role role = Role::Reporter;
};

enum class MembershipChange { Unchanged, Added, Updated };

struct ClientOptions {
    // waits between retried attempts on 5xx/transport failures
    std::vector<std::chrono::milliseconds> retry_backoff = {std::chrono::milliseconds(500),
                                                            std::chrono::milliseconds(1000),
                                                            std::chrono::milliseconds(2000)};
    int per_page = 20;
};

// Minimal idempotent client for the GitLab-compatible REST v4 surface.
// Safe for concurrent use; every mutator converges when re-applied.
class GitLabClient {
public:
    GitLabClient(std::string base_url, std::string token, ClientOptions options = {});
    ~GitLabClient();
    GitLabClient(const GitLabClient&) = delete;
    GitLabClient& operator=(const GitLabClient&) = delete;

    struct Ensured {
        RemoteRef ref;
        bool created = false;
    };

    // Group exists under parent (server root when absent) on return.
    Ensured ensure_group(const std::optional<RemoteRef>& parent, const std::string& name);

    // Project exists under the parent group on return.
    Ensured ensure_project(const RemoteRef& parent, const std::string& name);

    // Membership exists with exactly `role`; upgrades and downgrades converge.
    MembershipChange set_member_role(const RemoteRef& project, const std::string& username,
                                     Role role);

    // Demotes an existing member to Reporter. Throws UnknownUser for
    // non-members.
    void revoke_write(const RemoteRef& project, const std::string& username);

    // Drops a membership if present; returns whether one was removed.
    bool remove_member(const RemoteRef& project, const std::string& username);

    MembershipChange set_group_member_role(const RemoteRef& group, const std::string& username,
                                           Role role);

    std::optional<RemoteRef> find_group(const std::string& full_path);
    std::optional<RemoteRef> find_project(const std::string& full_path);

    // Complete membership list (pagination handled internally).
    std::vector<Member> list_members(const RemoteRef& project);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// `name` must be usable as a single path segment.
bool valid_path_segment(const std::string& name);

}  // namespace gitseed
