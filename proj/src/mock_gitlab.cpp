#include "gitseed/mock_gitlab.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "gitseed/errors.hpp"
#include "gitseed/subprocess.hpp"

namespace gitseed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_path(const std::string& p) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(p);
    while (std::getline(in, item, '/')) {
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

std::int64_t now_epoch() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

struct MockGitLab::Impl {
    Options opts;
    httplib::Server server;
    std::thread server_thread;
    int port = 0;
    std::atomic<bool> stopped{false};

    struct Group {
        std::int64_t id;
        std::string path;
        std::string full_path;
        std::optional<std::int64_t> parent_id;
    };
    struct Project {
        std::int64_t id;
        std::string path;
        std::string full_path;
        std::int64_t namespace_id;
        std::string clone_url;
    };

    mutable std::mutex mutex;
    std::int64_t next_id = 1;
    std::map<std::int64_t, Group> groups;
    std::map<std::int64_t, Project> projects;
    std::map<std::int64_t, std::map<std::int64_t, int>> project_members;  // pid -> uid -> level
    std::map<std::int64_t, std::map<std::int64_t, int>> group_members;
    std::map<std::int64_t, std::string> users;
    std::vector<std::pair<std::string, std::string>> req_log;
    std::atomic<int> fail_budget{0};

    // ---- state helpers (mutex held by caller) ----

    std::optional<std::int64_t> group_by_path(const std::string& full_path) const {
        for (const auto& [id, g] : groups) {
            if (g.full_path == full_path) return id;
        }
        return std::nullopt;
    }

    std::optional<std::int64_t> project_by_path(const std::string& full_path) const {
        for (const auto& [id, p] : projects) {
            if (p.full_path == full_path) return id;
        }
        return std::nullopt;
    }

    std::optional<std::int64_t> user_by_name(const std::string& username) const {
        for (const auto& [id, u] : users) {
            if (u == username) return id;
        }
        return std::nullopt;
    }

    bool path_taken(const std::string& full_path) const {
        return group_by_path(full_path).has_value() || project_by_path(full_path).has_value();
    }

    json group_json(const Group& g) const {
        json j = {{"id", g.id}, {"name", g.path}, {"path", g.path}, {"full_path", g.full_path}};
        if (g.parent_id) j["parent_id"] = *g.parent_id;
        return j;
    }

    json project_json(const Project& p) const {
        return {{"id", p.id},
                {"name", p.path},
                {"path", p.path},
                {"path_with_namespace", p.full_path},
                {"namespace_id", p.namespace_id},
                {"http_url_to_repo", p.clone_url}};
    }

    fs::path bare_path(const std::string& full_path) const {
        return opts.repo_root / (full_path + ".git");
    }

    void init_bare_repo(const fs::path& at) {
        fs::create_directories(at.parent_path());
        CmdResult r = run_command(
            {"git", "init", "--quiet", "--bare", "--initial-branch=main", at.string()});
        if (!r.ok()) throw Error("mock: git init --bare failed: " + r.err);
    }

    // ---- REST handlers ----

    void respond_json(httplib::Response& res, int status, const json& j) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    void handle_get_group(const std::string& id_or_path, httplib::Response& res) {
        std::lock_guard<std::mutex> lock(mutex);
        std::optional<std::int64_t> id;
        if (!id_or_path.empty() && id_or_path.find_first_not_of("0123456789") == std::string::npos)
            id = std::stoll(id_or_path);
        else
            id = group_by_path(id_or_path);
        if (!id || !groups.count(*id)) {
            respond_json(res, 404, {{"message", "404 Group Not Found"}});
            return;
        }
        respond_json(res, 200, group_json(groups.at(*id)));
    }

    void handle_create_group(const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("path")) {
            respond_json(res, 400, {{"message", "path is required"}});
            return;
        }
        std::lock_guard<std::mutex> lock(mutex);
        std::string path = body["path"].get<std::string>();
        std::string full_path = path;
        std::optional<std::int64_t> parent_id;
        if (body.contains("parent_id")) {
            parent_id = body["parent_id"].get<std::int64_t>();
            if (!groups.count(*parent_id)) {
                respond_json(res, 404, {{"message", "parent group not found"}});
                return;
            }
            full_path = groups.at(*parent_id).full_path + "/" + path;
        }
        if (path_taken(full_path)) {
            respond_json(res, 400, {{"message", "has already been taken"}});
            return;
        }
        Group g{next_id++, path, full_path, parent_id};
        groups[g.id] = g;
        respond_json(res, 201, group_json(g));
    }

    void handle_get_project(const std::string& id_or_path, httplib::Response& res) {
        std::lock_guard<std::mutex> lock(mutex);
        std::optional<std::int64_t> id;
        if (!id_or_path.empty() && id_or_path.find_first_not_of("0123456789") == std::string::npos)
            id = std::stoll(id_or_path);
        else
            id = project_by_path(id_or_path);
        if (!id || !projects.count(*id)) {
            respond_json(res, 404, {{"message", "404 Project Not Found"}});
            return;
        }
        respond_json(res, 200, project_json(projects.at(*id)));
    }

    void handle_create_project(const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("path") || !body.contains("namespace_id")) {
            respond_json(res, 400, {{"message", "path and namespace_id are required"}});
            return;
        }
        std::lock_guard<std::mutex> lock(mutex);
        std::int64_t ns = body["namespace_id"].get<std::int64_t>();
        if (!groups.count(ns)) {
            respond_json(res, 404, {{"message", "namespace not found"}});
            return;
        }
        std::string path = body["path"].get<std::string>();
        std::string full_path = groups.at(ns).full_path + "/" + path;
        if (path_taken(full_path)) {
            respond_json(res, 400, {{"message", "has already been taken"}});
            return;
        }
        fs::path bare = bare_path(full_path);
        init_bare_repo(bare);
        Project p{next_id++, path, full_path, ns,
                  "file://" + fs::absolute(bare).string()};
        projects[p.id] = p;
        respond_json(res, 201, project_json(p));
    }

    template <typename MemberMap>
    void handle_members(const httplib::Request& req, httplib::Response& res, MemberMap& members,
                        std::int64_t owner_id, bool owner_exists,
                        const std::optional<std::int64_t>& member_uid, const std::string& verb) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!owner_exists) {
            respond_json(res, 404, {{"message", "owner not found"}});
            return;
        }
        auto member_json = [&](std::int64_t uid, int level) {
            return json{{"id", uid},
                        {"user_id", uid},
                        {"username", users.at(uid)},
                        {"access_level", level}};
        };
        auto& mm = members[owner_id];
        if (verb == "GET" && member_uid) {
            auto it = mm.find(*member_uid);
            if (it == mm.end()) {
                respond_json(res, 404, {{"message", "404 Not found"}});
                return;
            }
            respond_json(res, 200, member_json(it->first, it->second));
            return;
        }
        if (verb == "GET") {
            int page = req.has_param("page") ? std::stoi(req.get_param_value("page")) : 1;
            int per_page =
                req.has_param("per_page") ? std::stoi(req.get_param_value("per_page")) : 20;
            json arr = json::array();
            int ix = 0;
            for (const auto& [uid, level] : mm) {
                if (ix >= (page - 1) * per_page && ix < page * per_page)
                    arr.push_back(member_json(uid, level));
                ++ix;
            }
            respond_json(res, 200, arr);
            return;
        }
        if (verb == "POST") {
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.contains("user_id") ||
                !body.contains("access_level")) {
                respond_json(res, 400, {{"message", "user_id and access_level required"}});
                return;
            }
            std::int64_t uid = body["user_id"].get<std::int64_t>();
            if (!users.count(uid)) {
                respond_json(res, 404, {{"message", "user not found"}});
                return;
            }
            if (mm.count(uid)) {
                respond_json(res, 409, {{"message", "member already exists"}});
                return;
            }
            mm[uid] = body["access_level"].get<int>();
            respond_json(res, 201, member_json(uid, mm[uid]));
            return;
        }
        if (verb == "PUT" && member_uid) {
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.contains("access_level") || !mm.count(*member_uid)) {
                respond_json(res, 400, {{"message", "bad update"}});
                return;
            }
            mm[*member_uid] = body["access_level"].get<int>();
            respond_json(res, 200, member_json(*member_uid, mm[*member_uid]));
            return;
        }
        if (verb == "DELETE" && member_uid) {
            if (!mm.count(*member_uid)) {
                respond_json(res, 404, {{"message", "member not found"}});
                return;
            }
            mm.erase(*member_uid);
            res.status = 204;
            return;
        }
        respond_json(res, 400, {{"message", "unsupported member request"}});
    }

    void route() {
        using httplib::Request;
        using httplib::Response;

        server.set_pre_routing_handler([this](const Request& req, Response& res) {
            {
                std::lock_guard<std::mutex> lock(mutex);
                req_log.emplace_back(req.method, req.path);
            }
            if (fail_budget.load() > 0) {
                fail_budget.fetch_sub(1);
                respond_json(res, 500, {{"message", "injected failure"}});
                return httplib::Server::HandlerResponse::Handled;
            }
            auto token = req.get_header_value("PRIVATE-TOKEN");
            if (token != opts.token) {
                respond_json(res, 401, {{"message", "401 Unauthorized"}});
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });

        server.Get(R"(/api/v4/users)", [this](const Request& req, Response& res) {
            std::lock_guard<std::mutex> lock(mutex);
            json arr = json::array();
            std::string want = req.get_param_value("username");
            for (const auto& [id, name] : users) {
                if (want.empty() || name == want)
                    arr.push_back({{"id", id}, {"username", name}});
            }
            respond_json(res, 200, arr);
        });

        // member routes must be registered before the catch-all id-or-path ones
        server.Get(R"(/api/v4/projects/(\d+)/members/(\d+))",
                   [this](const Request& req, Response& res) {
                       std::int64_t pid = std::stoll(req.matches[1]);
                       handle_members(req, res, project_members, pid, projects.count(pid) > 0,
                                      std::stoll(req.matches[2]), "GET");
                   });
        server.Get(R"(/api/v4/projects/(\d+)/members)",
                   [this](const Request& req, Response& res) {
                       std::int64_t pid = std::stoll(req.matches[1]);
                       handle_members(req, res, project_members, pid, projects.count(pid) > 0,
                                      std::nullopt, "GET");
                   });
        server.Post(R"(/api/v4/projects/(\d+)/members)",
                    [this](const Request& req, Response& res) {
                        std::int64_t pid = std::stoll(req.matches[1]);
                        handle_members(req, res, project_members, pid, projects.count(pid) > 0,
                                       std::nullopt, "POST");
                    });
        server.Put(R"(/api/v4/projects/(\d+)/members/(\d+))",
                   [this](const Request& req, Response& res) {
                       std::int64_t pid = std::stoll(req.matches[1]);
                       handle_members(req, res, project_members, pid, projects.count(pid) > 0,
                                      std::stoll(req.matches[2]), "PUT");
                   });
        server.Delete(R"(/api/v4/projects/(\d+)/members/(\d+))",
                      [this](const Request& req, Response& res) {
                          std::int64_t pid = std::stoll(req.matches[1]);
                          handle_members(req, res, project_members, pid, projects.count(pid) > 0,
                                         std::stoll(req.matches[2]), "DELETE");
                      });

        server.Get(R"(/api/v4/groups/(\d+)/members/(\d+))",
                   [this](const Request& req, Response& res) {
                       std::int64_t gid = std::stoll(req.matches[1]);
                       handle_members(req, res, group_members, gid, groups.count(gid) > 0,
                                      std::stoll(req.matches[2]), "GET");
                   });
        server.Get(R"(/api/v4/groups/(\d+)/members)",
                   [this](const Request& req, Response& res) {
                       std::int64_t gid = std::stoll(req.matches[1]);
                       handle_members(req, res, group_members, gid, groups.count(gid) > 0,
                                      std::nullopt, "GET");
                   });
        server.Post(R"(/api/v4/groups/(\d+)/members)",
                    [this](const Request& req, Response& res) {
                        std::int64_t gid = std::stoll(req.matches[1]);
                        handle_members(req, res, group_members, gid, groups.count(gid) > 0,
                                       std::nullopt, "POST");
                    });
        server.Put(R"(/api/v4/groups/(\d+)/members/(\d+))",
                   [this](const Request& req, Response& res) {
                       std::int64_t gid = std::stoll(req.matches[1]);
                       handle_members(req, res, group_members, gid, groups.count(gid) > 0,
                                      std::stoll(req.matches[2]), "PUT");
                   });

        server.Get(R"(/api/v4/groups/(.+))", [this](const Request& req, Response& res) {
            handle_get_group(req.matches[1], res);
        });
        server.Post(R"(/api/v4/groups)", [this](const Request& req, Response& res) {
            handle_create_group(req, res);
        });
        server.Get(R"(/api/v4/projects/(.+))", [this](const Request& req, Response& res) {
            handle_get_project(req.matches[1], res);
        });
        server.Post(R"(/api/v4/projects)", [this](const Request& req, Response& res) {
            handle_create_project(req, res);
        });
    }
};

MockGitLab::MockGitLab(Options options) : impl_(std::make_unique<Impl>()) {
    impl_->opts = std::move(options);
    fs::create_directories(impl_->opts.repo_root);
    fs::create_directories(impl_->opts.drop_dir);
    impl_->route();
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
    if (impl_->port <= 0) throw Error("mock: cannot bind a listen port");
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockGitLab::~MockGitLab() { stop(); }

void MockGitLab::stop() {
    if (impl_->stopped.exchange(true)) return;
    impl_->server.stop();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

std::string MockGitLab::base_url() const {
    return "http://127.0.0.1:" + std::to_string(impl_->port);
}

const std::string& MockGitLab::token() const { return impl_->opts.token; }

void MockGitLab::add_user(const std::string& username) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    if (impl_->user_by_name(username)) return;
    impl_->users[impl_->next_id++] = username;
}

std::string MockGitLab::simulate_student_push(const std::string& project_path,
                                              const std::map<std::string, std::string>& files,
                                              const std::string& author) {
    fs::path bare;
    std::string pusher = author;
    {
        std::lock_guard<std::mutex> lock(impl_->mutex);
        auto pid = impl_->project_by_path(project_path);
        if (!pid) throw UnknownProject("mock: no project at " + project_path);
        auto uid = impl_->user_by_name(author);
        if (!uid) throw UnknownUser("mock: no user " + author);
        auto& mm = impl_->project_members[*pid];
        auto it = mm.find(*uid);
        if (it == mm.end() || it->second < static_cast<int>(Role::Developer))
            throw PermissionDenied("mock: " + author + " cannot push to " + project_path);
        bare = impl_->bare_path(project_path);
    }

    fs::path tmp = fs::temp_directory_path() /
                   ("mockpush-" + std::to_string(now_epoch()) + "-" +
                    std::to_string(reinterpret_cast<std::uintptr_t>(&bare) % 100000));
    fs::create_directories(tmp);
    std::vector<std::pair<std::string, std::string>> env = {
        {"GIT_AUTHOR_NAME", author},
        {"GIT_AUTHOR_EMAIL", author + "@users.invalid"},
        {"GIT_COMMITTER_NAME", author},
        {"GIT_COMMITTER_EMAIL", author + "@users.invalid"},
    };
    auto git_in = [&](const fs::path& cwd, const std::vector<std::string>& args) {
        std::vector<std::string> argv = {"git"};
        argv.insert(argv.end(), args.begin(), args.end());
        CmdResult r = run_command(argv, cwd, env);
        if (!r.ok()) throw Error("mock push: git " + args.front() + " failed: " + r.err);
        return r;
    };

    fs::path clone = tmp / "clone";
    git_in(tmp, {"clone", "--quiet", "file://" + fs::absolute(bare).string(), clone.string()});
    for (const auto& [name, content] : files) {
        fs::path target = clone / name;
        fs::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary);
        out << content;
    }
    git_in(clone, {"add", "-A"});
    git_in(clone, {"commit", "--quiet", "--allow-empty", "-m", "student push"});
    git_in(clone, {"push", "--quiet", "origin", "HEAD:refs/heads/main"});
    std::string sha = git_in(clone, {"rev-parse", "HEAD"}).out;
    while (!sha.empty() && (sha.back() == '\n' || sha.back() == '\r')) sha.pop_back();
    fs::remove_all(tmp);

    // runner emulation: submission repos are <course>/<assessment>/<group>
    auto parts = split_path(project_path);
    if (parts.size() == 3 && parts[1] != "feedback") {
        std::int64_t epoch = now_epoch();
        fs::create_directories(impl_->opts.drop_dir);
        fs::path event;
        for (;; ++epoch) {
            event = impl_->opts.drop_dir / (std::to_string(epoch) + "__" + parts[1] + "__" +
                                            parts[2] + "__" + sha + ".sub");
            if (!fs::exists(event)) break;
        }
        fs::path tmp_event = event;
        tmp_event += ".tmp";
        {
            std::ofstream out(tmp_event, std::ios::binary);
            out << "assessment_id=" << parts[1] << "\n";
            out << "group_id=" << parts[2] << "\n";
            out << "commit=" << sha << "\n";
            out << "pushed_at=" << epoch << "\n";
            out << "repo_path=" << project_path << "\n";
            out << "pusher=" << pusher << "\n";
        }
        fs::rename(tmp_event, event);
    }
    return sha;
}

std::optional<Role> MockGitLab::member_role(const std::string& project_path,
                                            const std::string& username) const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    auto pid = impl_->project_by_path(project_path);
    if (!pid) return std::nullopt;
    auto uid = impl_->user_by_name(username);
    if (!uid) return std::nullopt;
    auto members_it = impl_->project_members.find(*pid);
    if (members_it == impl_->project_members.end()) return std::nullopt;
    auto it = members_it->second.find(*uid);
    if (it == members_it->second.end()) return std::nullopt;
    return role_from_access_level(it->second);
}

std::filesystem::path MockGitLab::bare_repo_path(const std::string& project_path) const {
    return impl_->bare_path(project_path);
}

json MockGitLab::state_snapshot() const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    json j;
    j["groups"] = json::object();
    for (const auto& [id, g] : impl_->groups) j["groups"][g.full_path] = impl_->group_json(g);
    j["projects"] = json::object();
    for (const auto& [id, p] : impl_->projects)
        j["projects"][p.full_path] = impl_->project_json(p);
    auto members_to_json = [&](const auto& mm, auto path_of) {
        json out = json::object();
        for (const auto& [owner, members] : mm) {
            json entry = json::object();
            for (const auto& [uid, level] : members)
                entry[impl_->users.at(uid)] = level;
            if (!entry.empty()) out[path_of(owner)] = entry;
        }
        return out;
    };
    j["project_members"] = members_to_json(impl_->project_members, [&](std::int64_t id) {
        return impl_->projects.at(id).full_path;
    });
    j["group_members"] = members_to_json(impl_->group_members, [&](std::int64_t id) {
        return impl_->groups.at(id).full_path;
    });
    j["users"] = json::array();
    for (const auto& [id, name] : impl_->users) j["users"].push_back(name);
    return j;
}

std::vector<std::pair<std::string, std::string>> MockGitLab::request_log() const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    return impl_->req_log;
}

void MockGitLab::fail_next_requests(int n) { impl_->fail_budget.store(n); }

}  // namespace gitseed
