#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace gitseed {

struct GitIdentity {
    std::string name;
    std::string email;
};

// All engine-authored commits use this identity.
inline const GitIdentity kBotIdentity{"GitSEED Bot", "bot@course.invalid"};

struct WorkTree {
    std::filesystem::path local_path;
    std::string remote_url;
    std::optional<std::string> current_commit;  // absent while the remote is empty
};

// Injects token auth into http(s) clone URLs; other schemes pass through.
std::string authenticated_url(const std::string& url, const std::string& token);

// Clones remote_url to local_path, or fast-forwards an existing clone to the
// remote default branch head. A directory that is not a clone of remote_url
// is quarantined (renamed aside) and recloned.
WorkTree clone_or_update(const std::string& remote_url, const std::filesystem::path& local_path);

// Detached checkout of `commit`; removes untracked leftovers. Destructive
// and idempotent. Throws UnknownCommit.
void checkout_commit(WorkTree& tree, const std::string& commit);

// Stages everything, commits as `author`, pushes; on a concurrent remote
// commit, pull-rebases and retries up to 3 times. With nothing to commit
// returns the current head (success). Throws PushRejected after retries.
std::string commit_all_push(WorkTree& tree, const std::string& message,
                            const GitIdentity& author);

// Content of `rel_path` at `commit` (git show). Throws UnknownCommit.
std::string read_file_at(const WorkTree& tree, const std::string& commit,
                         const std::string& rel_path);

// Head commit of a local repository; nullopt while unborn.
std::optional<std::string> head_commit(const std::filesystem::path& repo);

}  // namespace gitseed
