#include "gitseed/gitlab_api.hpp"

#include <httplib.h>

#include <json.hpp>
#include <stdexcept>
#include <thread>

#include "gitseed/errors.hpp"
#include "gitseed/log.hpp"

namespace gitseed {

using nlohmann::json;

namespace {

std::string url_encode_path(const std::string& path) {
    std::string out;
    for (char c : path) {
        if (c == '/')
            out += "%2F";
        else
            out += c;
    }
    return out;
}

}  // namespace

std::string to_string(Role r) {
    switch (r) {
        case Role::Reporter: return "Reporter";
        case Role::Developer: return "Developer";
        case Role::Maintainer: return "Maintainer";
        case Role::Owner: return "Owner";
    }
    return "?";
}

std::optional<Role> role_from_access_level(int level) {
    switch (level) {
        case 20: return Role::Reporter;
        case 30: return Role::Developer;
        case 40: return Role::Maintainer;
        case 50: return Role::Owner;
    }
    return std::nullopt;
}

std::optional<Role> role_from_string(const std::string& s) {
    if (s == "Reporter") return Role::Reporter;
    if (s == "Developer") return Role::Developer;
    if (s == "Maintainer") return Role::Maintainer;
    if (s == "Owner") return Role::Owner;
    return std::nullopt;
}

bool valid_path_segment(const std::string& name) {
    if (name.empty() || name.size() > 255) return false;
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '-' || c == '_' || c == '.';
        if (!ok) return false;
    }
    return name.front() != '.' && name.back() != '.';
}

struct GitLabClient::Impl {
    std::string base_url;
    std::string token;
    ClientOptions options;

    struct Response {
        int status = 0;
        std::string body;
    };

    // One request with retry on transport errors and 5xx.
    Response request(const std::string& method, const std::string& path,
                     const std::optional<json>& body) {
        size_t attempts = options.retry_backoff.size() + 1;
        std::string transport_detail;
        for (size_t i = 0; i < attempts; ++i) {
            if (i > 0) std::this_thread::sleep_for(options.retry_backoff[i - 1]);
            httplib::Client cli(base_url);
            cli.set_connection_timeout(10);
            cli.set_read_timeout(30);
            httplib::Headers headers = {{"PRIVATE-TOKEN", token}};
            httplib::Result res;
            std::string payload = body ? body->dump() : "";
            if (method == "GET") {
                res = cli.Get(path, headers);
            } else if (method == "POST") {
                res = cli.Post(path, headers, payload, "application/json");
            } else if (method == "PUT") {
                res = cli.Put(path, headers, payload, "application/json");
            } else if (method == "DELETE") {
                res = cli.Delete(path, headers);
            } else {
                throw std::logic_error("unsupported method " + method);
            }
            if (!res) {
                transport_detail = httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                transport_detail = "server returned " + std::to_string(res->status);
                continue;
            }
            if (res->status == 401 || res->status == 403)
                throw AuthError("server rejected token for " + method + " " + path);
            return {res->status, res->body};
        }
        if (transport_detail.rfind("server returned", 0) == 0)
            throw ServerError(method + " " + path + " failed after retries: " + transport_detail);
        throw TransportError(method + " " + path + " failed after retries: " + transport_detail);
    }

    json parse_body(const Response& r, const std::string& what) {
        json j = json::parse(r.body, nullptr, false);
        if (j.is_discarded()) throw ServerError("malformed JSON from server for " + what);
        return j;
    }

    RemoteRef group_ref(const json& j) {
        return RemoteRef{RemoteKind::Group, j.at("id").get<std::int64_t>(),
                         j.at("full_path").get<std::string>(), ""};
    }

    RemoteRef project_ref(const json& j) {
        return RemoteRef{RemoteKind::Project, j.at("id").get<std::int64_t>(),
                         j.at("path_with_namespace").get<std::string>(),
                         j.value("http_url_to_repo", "")};
    }

    std::optional<json> get_optional(const std::string& path) {
        Response r = request("GET", path, std::nullopt);
        if (r.status == 404) return std::nullopt;
        if (r.status != 200) throw ServerError("GET " + path + " returned " +
                                               std::to_string(r.status) + ": " + r.body);
        return parse_body(r, path);
    }

    // Collects a paginated listing in full.
    json get_all_pages(const std::string& path) {
        json all = json::array();
        for (int page = 1;; ++page) {
            std::string sep = path.find('?') == std::string::npos ? "?" : "&";
            std::string url = path + sep + "page=" + std::to_string(page) +
                              "&per_page=" + std::to_string(options.per_page);
            Response r = request("GET", url, std::nullopt);
            if (r.status != 200)
                throw ServerError("GET " + url + " returned " + std::to_string(r.status));
            json j = parse_body(r, url);
            for (auto& item : j) all.push_back(std::move(item));
            if (static_cast<int>(j.size()) < options.per_page) break;
        }
        return all;
    }

    std::optional<std::int64_t> user_id(const std::string& username) {
        json users = get_all_pages("/api/v4/users?username=" + username);
        for (const auto& u : users) {
            if (u.at("username").get<std::string>() == username)
                return u.at("id").get<std::int64_t>();
        }
        return std::nullopt;
    }

    MembershipChange set_role(const std::string& members_base, const std::string& username,
                              Role role) {
        auto uid = user_id(username);
        if (!uid) throw UnknownUser("no such user: " + username);
        std::string member_path = members_base + "/" + std::to_string(*uid);
        auto existing = get_optional(member_path);
        if (!existing) {
            json body = {{"user_id", *uid}, {"access_level", static_cast<int>(role)}};
            Response r = request("POST", members_base, body);
            if (r.status == 409) {
                // raced with a concurrent add; converge via PUT
                json put = {{"access_level", static_cast<int>(role)}};
                request("PUT", member_path, put);
                return MembershipChange::Updated;
            }
            if (r.status != 201)
                throw ServerError("POST " + members_base + " returned " +
                                  std::to_string(r.status) + ": " + r.body);
            return MembershipChange::Added;
        }
        if (existing->at("access_level").get<int>() == static_cast<int>(role))
            return MembershipChange::Unchanged;
        json put = {{"access_level", static_cast<int>(role)}};
        Response r = request("PUT", member_path, put);
        if (r.status != 200)
            throw ServerError("PUT " + member_path + " returned " + std::to_string(r.status));
        return MembershipChange::Updated;
    }
};

GitLabClient::GitLabClient(std::string base_url, std::string token, ClientOptions options)
    : impl_(std::make_unique<Impl>()) {
    impl_->base_url = std::move(base_url);
    impl_->token = std::move(token);
    impl_->options = std::move(options);
}

GitLabClient::~GitLabClient() = default;

std::optional<RemoteRef> GitLabClient::find_group(const std::string& full_path) {
    auto j = impl_->get_optional("/api/v4/groups/" + url_encode_path(full_path));
    if (!j) return std::nullopt;
    return impl_->group_ref(*j);
}

std::optional<RemoteRef> GitLabClient::find_project(const std::string& full_path) {
    auto j = impl_->get_optional("/api/v4/projects/" + url_encode_path(full_path));
    if (!j) return std::nullopt;
    return impl_->project_ref(*j);
}

GitLabClient::Ensured GitLabClient::ensure_group(const std::optional<RemoteRef>& parent,
                                                 const std::string& name) {
    if (!valid_path_segment(name))
        throw std::invalid_argument("group name is not a valid path segment: " + name);
    if (parent && parent->kind != RemoteKind::Group)
        throw ConflictError("parent of a group must be a group: " + parent->full_path);
    std::string full_path = parent ? parent->full_path + "/" + name : name;
    if (auto existing = find_group(full_path)) return {*existing, false};

    json body = {{"name", name}, {"path", name}};
    if (parent) body["parent_id"] = parent->id;
    Impl::Response r = impl_->request("POST", "/api/v4/groups", body);
    if (r.status == 201) return {impl_->group_ref(impl_->parse_body(r, "create group")), true};
    if (r.status == 400 || r.status == 409) {
        // lost a creation race, or the path is taken by a project
        if (auto existing = find_group(full_path)) return {*existing, false};
        throw ConflictError("path " + full_path + " is occupied by a non-group");
    }
    throw ServerError("group creation returned " + std::to_string(r.status) + ": " + r.body);
}

GitLabClient::Ensured GitLabClient::ensure_project(const RemoteRef& parent,
                                                   const std::string& name) {
    if (!valid_path_segment(name))
        throw std::invalid_argument("project name is not a valid path segment: " + name);
    if (parent.kind != RemoteKind::Group)
        throw ConflictError("parent of a project must be a group: " + parent.full_path);
    std::string full_path = parent.full_path + "/" + name;
    if (auto existing = find_project(full_path)) return {*existing, false};

    json body = {{"name", name}, {"path", name}, {"namespace_id", parent.id}};
    Impl::Response r = impl_->request("POST", "/api/v4/projects", body);
    if (r.status == 201) return {impl_->project_ref(impl_->parse_body(r, "create project")), true};
    if (r.status == 400 || r.status == 409) {
        if (auto existing = find_project(full_path)) return {*existing, false};
        throw ConflictError("path " + full_path + " is occupied by a non-project");
    }
    throw ServerError("project creation returned " + std::to_string(r.status) + ": " + r.body);
}

MembershipChange GitLabClient::set_member_role(const RemoteRef& project,
                                               const std::string& username, Role role) {
    return impl_->set_role("/api/v4/projects/" + std::to_string(project.id) + "/members",
                           username, role);
}

MembershipChange GitLabClient::set_group_member_role(const RemoteRef& group,
                                                     const std::string& username, Role role) {
    return impl_->set_role("/api/v4/groups/" + std::to_string(group.id) + "/members", username,
                           role);
}

void GitLabClient::revoke_write(const RemoteRef& project, const std::string& username) {
    auto uid = impl_->user_id(username);
    if (!uid) throw UnknownUser("no such user: " + username);
    std::string member_path =
        "/api/v4/projects/" + std::to_string(project.id) + "/members/" + std::to_string(*uid);
    auto existing = impl_->get_optional(member_path);
    if (!existing) throw UnknownUser(username + " is not a member of " + project.full_path);
    if (existing->at("access_level").get<int>() == static_cast<int>(Role::Reporter)) return;
    json put = {{"access_level", static_cast<int>(Role::Reporter)}};
    impl_->request("PUT", member_path, put);
}

bool GitLabClient::remove_member(const RemoteRef& project, const std::string& username) {
    auto uid = impl_->user_id(username);
    if (!uid) return false;
    std::string member_path =
        "/api/v4/projects/" + std::to_string(project.id) + "/members/" + std::to_string(*uid);
    Impl::Response r = impl_->request("DELETE", member_path, std::nullopt);
    return r.status == 204;
}

std::vector<Member> GitLabClient::list_members(const RemoteRef& project) {
    json all = impl_->get_all_pages("/api/v4/projects/" + std::to_string(project.id) + "/members");
    std::vector<Member> out;
    for (const auto& m : all) {
        auto role = role_from_access_level(m.at("access_level").get<int>());
        if (!role) continue;  // unknown levels (e.g. Guest) are not ours to manage
        out.push_back({m.at("username").get<std::string>(), *role});
    }
    return out;
}

}  // namespace gitseed
