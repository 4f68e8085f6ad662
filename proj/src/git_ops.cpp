#include "gitseed/git_ops.hpp"

#include <chrono>

#include "gitseed/errors.hpp"
#include "gitseed/log.hpp"
#include "gitseed/subprocess.hpp"

namespace gitseed {
namespace {

namespace fs = std::filesystem;

const std::vector<std::pair<std::string, std::string>> kGitEnv = {
    {"GIT_TERMINAL_PROMPT", "0"},
};

CmdResult git(const std::vector<std::string>& args, const std::optional<fs::path>& cwd,
              const GitIdentity* ident = nullptr) {
    std::vector<std::string> argv = {"git"};
    argv.insert(argv.end(), args.begin(), args.end());
    auto env = kGitEnv;
    if (ident) {
        env.emplace_back("GIT_AUTHOR_NAME", ident->name);
        env.emplace_back("GIT_AUTHOR_EMAIL", ident->email);
        env.emplace_back("GIT_COMMITTER_NAME", ident->name);
        env.emplace_back("GIT_COMMITTER_EMAIL", ident->email);
    }
    return run_command(argv, cwd, env);
}

CmdResult git_checked(const std::vector<std::string>& args, const std::optional<fs::path>& cwd,
                      const GitIdentity* ident = nullptr) {
    CmdResult r = git(args, cwd, ident);
    if (!r.ok()) throw Error("git " + args.front() + " failed: " + r.err);
    return r;
}

std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

bool is_clone_of(const fs::path& dir, const std::string& remote_url) {
    CmdResult inside = git({"rev-parse", "--is-inside-work-tree"}, dir);
    if (!inside.ok() || strip(inside.out) != "true") return false;
    CmdResult origin = git({"remote", "get-url", "origin"}, dir);
    return origin.ok() && strip(origin.out) == remote_url;
}

// Remote default branch from `ls-remote --symref`; nullopt for empty remotes.
std::optional<std::string> remote_default_branch(const fs::path& dir) {
    CmdResult r = git({"ls-remote", "--symref", "origin", "HEAD"}, dir);
    if (!r.ok()) throw TransportError("ls-remote failed: " + r.err);
    const std::string prefix = "ref: refs/heads/";
    size_t pos = r.out.find(prefix);
    if (pos == std::string::npos) return std::nullopt;
    size_t end = r.out.find_first_of(" \t\n", pos + prefix.size());
    return r.out.substr(pos + prefix.size(), end - (pos + prefix.size()));
}

void clone_fresh(const std::string& remote_url, const fs::path& local_path) {
    fs::create_directories(local_path.parent_path());
    CmdResult r = git({"clone", "--quiet", remote_url, local_path.string()}, std::nullopt);
    if (!r.ok()) throw TransportError("clone of " + remote_url + " failed: " + r.err);
}

}  // namespace

std::string authenticated_url(const std::string& url, const std::string& token) {
    if (token.empty()) return url;
    for (const std::string scheme : {"https://", "http://"}) {
        if (url.rfind(scheme, 0) == 0 && url.find('@') == std::string::npos)
            return scheme + "oauth2:" + token + "@" + url.substr(scheme.size());
    }
    return url;
}

WorkTree clone_or_update(const std::string& remote_url, const fs::path& local_path) {
    std::error_code ec;
    if (fs::exists(local_path, ec)) {
        if (is_clone_of(local_path, remote_url)) {
            CmdResult f = git({"fetch", "--quiet", "--prune", "origin"}, local_path);
            if (!f.ok()) throw TransportError("fetch failed: " + f.err);
            if (auto branch = remote_default_branch(local_path)) {
                git_checked({"checkout", "--quiet", "-B", *branch, "origin/" + *branch},
                            local_path);
                git_checked({"clean", "-fdxq"}, local_path);
            }
        } else {
            auto quarantine =
                local_path.string() + ".corrupt-" +
                std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::system_clock::now().time_since_epoch())
                                   .count());
            fs::rename(local_path, quarantine);
            log_event(LogLevel::Warn, "corrupt_clone_quarantined",
                      {{"path", local_path.string()}, {"moved_to", quarantine}});
            clone_fresh(remote_url, local_path);
        }
    } else {
        clone_fresh(remote_url, local_path);
    }
    return WorkTree{local_path, remote_url, head_commit(local_path)};
}

void checkout_commit(WorkTree& tree, const std::string& commit) {
    CmdResult e = git({"cat-file", "-e", commit + "^{commit}"}, tree.local_path);
    if (!e.ok()) throw UnknownCommit("commit " + commit + " not found in " + tree.remote_url);
    git_checked({"-c", "advice.detachedHead=false", "checkout", "--quiet", "--force", "--detach",
                 commit},
                tree.local_path);
    git_checked({"clean", "-fdxq"}, tree.local_path);
    tree.current_commit = commit;
}

std::string commit_all_push(WorkTree& tree, const std::string& message,
                            const GitIdentity& author) {
    const auto& dir = tree.local_path;
    git_checked({"add", "-A"}, dir);
    CmdResult status = git_checked({"status", "--porcelain"}, dir);
    if (status.out.empty()) {
        auto head = head_commit(dir);
        tree.current_commit = head;
        return head.value_or("");
    }
    git_checked({"commit", "--quiet", "-m", message}, dir, &author);

    CmdResult branch = git_checked({"rev-parse", "--abbrev-ref", "HEAD"}, dir);
    std::string branch_name = strip(branch.out);

    std::string last_err;
    for (int attempt = 0; attempt < 3; ++attempt) {
        CmdResult push = git({"push", "--quiet", "origin", "HEAD:" + branch_name}, dir);
        if (push.ok()) {
            auto head = head_commit(dir);
            tree.current_commit = head;
            return head.value_or("");
        }
        last_err = push.err;
        CmdResult pull =
            git({"pull", "--quiet", "--rebase", "origin", branch_name}, dir, &author);
        if (!pull.ok()) {
            git({"rebase", "--abort"}, dir);
            last_err += "; rebase failed: " + pull.err;
        }
    }
    throw PushRejected("push to " + tree.remote_url + " rejected: " + strip(last_err));
}

std::string read_file_at(const WorkTree& tree, const std::string& commit,
                         const std::string& rel_path) {
    CmdResult e = git({"cat-file", "-e", commit + "^{commit}"}, tree.local_path);
    if (!e.ok()) throw UnknownCommit("commit " + commit + " not found");
    CmdResult r = git({"show", commit + ":" + rel_path}, tree.local_path);
    if (!r.ok()) throw Error("path " + rel_path + " not present at " + commit);
    return r.out;
}

std::optional<std::string> head_commit(const fs::path& repo) {
    CmdResult r = git({"rev-parse", "HEAD"}, repo);
    if (!r.ok()) return std::nullopt;  // unborn branch
    return strip(r.out);
}

}  // namespace gitseed
