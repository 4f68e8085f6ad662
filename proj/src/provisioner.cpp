#include "gitseed/provisioner.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gitseed/errors.hpp"
#include "gitseed/git_ops.hpp"
#include "gitseed/log.hpp"

namespace gitseed {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void copy_tree(const fs::path& from, const fs::path& to) {
    for (const auto& entry : fs::recursive_directory_iterator(from)) {
        fs::path rel = fs::relative(entry.path(), from);
        fs::path target = to / rel;
        if (entry.is_directory()) {
            fs::create_directories(target);
        } else if (entry.is_regular_file()) {
            fs::create_directories(target.parent_path());
            fs::copy_file(entry.path(), target, fs::copy_options::overwrite_existing);
        }
    }
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
    if (!out) throw Error("cannot write " + p.string());
}

}  // namespace

const RosterGroup* Roster::find(const std::string& group_id) const {
    for (const auto& g : entries) {
        if (g.group_id == group_id) return &g;
    }
    return nullptr;
}

std::vector<std::string> Roster::all_usernames() const {
    std::vector<std::string> out;
    for (const auto& g : entries)
        for (const auto& m : g.members) out.push_back(m);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Roster parse_roster_text(const std::string& text) {
    Roster roster;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::set<std::string> seen_groups;
    std::set<std::string> seen_users;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t colon = t.find(':');
        if (colon == std::string::npos)
            throw ParseError("expected 'group_id: user1,user2'", line_no);
        RosterGroup g;
        g.group_id = trim(t.substr(0, colon));
        if (!valid_path_segment(g.group_id))
            throw ValidationError("group_id",
                                  "'" + g.group_id + "' is not usable as a repo path segment");
        if (!seen_groups.insert(g.group_id).second)
            throw ValidationError("group_id", "duplicate group '" + g.group_id + "'");
        std::istringstream members(t.substr(colon + 1));
        std::string member;
        while (std::getline(members, member, ',')) {
            member = trim(member);
            if (member.empty()) continue;
            if (!seen_users.insert(member).second)
                throw ValidationError("members",
                                      "user '" + member + "' appears in more than one group");
            g.members.push_back(member);
        }
        if (g.members.empty())
            throw ValidationError("members", "group '" + g.group_id + "' has no members");
        roster.entries.push_back(std::move(g));
    }
    return roster;
}

Roster load_roster(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read roster file: " + path.string());
    std::ostringstream body;
    body << in.rdbuf();
    return parse_roster_text(body.str());
}

std::string generate_ci_yaml(const CourseConfig& config) {
    std::string drop = fs::absolute(config.drop_dir).string();
    std::ostringstream out;
    out << "# Managed by gitseed for course " << config.course_id << ". DO NOT EDIT.\n"
        << "# Tampering with this file locks the repository.\n"
        << "submission-notice:\n"
        << "  tags:\n"
        << "    - gitseed-" << config.course_id << "\n"
        << "  script:\n"
        << "    - ts=$(date +%s)\n"
        << "    - ass=$(echo \"$CI_PROJECT_PATH\" | cut -d/ -f2)\n"
        << "    - grp=$(echo \"$CI_PROJECT_PATH\" | cut -d/ -f3)\n"
        << "    - tmp=$(mktemp \"" << drop << "/.event-XXXXXX\")\n"
        << "    - printf 'assessment_id=%s\\ngroup_id=%s\\ncommit=%s\\npushed_at=%s\\n"
           "repo_path=%s\\npusher=%s\\n' \"$ass\" \"$grp\" \"$CI_COMMIT_SHA\" \"$ts\" "
           "\"$CI_PROJECT_PATH\" \"$GITLAB_USER_LOGIN\" > \"$tmp\"\n"
        << "    - mv \"$tmp\" \"" << drop << "/${ts}__${ass}__${grp}__${CI_COMMIT_SHA}.sub\"\n";
    return out.str();
}

fs::path canonical_ci_path(const CourseConfig& config) {
    return config.state_db_path.parent_path() / ("ci-canonical-" + config.course_id + ".yml");
}

std::string canonical_ci(const CourseConfig& config) {
    fs::path stored = canonical_ci_path(config);
    std::error_code ec;
    if (fs::exists(stored, ec)) return read_file(stored);
    return generate_ci_yaml(config);
}

std::string ci_warning_footer() {
    return "\n---\n\nThis repository is evaluated automatically on every push. Do not edit or "
           "delete `.gitlab-ci.yml`; a modified copy locks the repository until faculty "
           "intervene.\n";
}

std::string gitignore_note() {
    return "# The CI pipeline file .gitlab-ci.yml is managed by the course tooling.\n"
           "# It must stay versioned and unmodified; evaluation rejects tampered copies.\n";
}

Provisioner::Provisioner(GitLabClient& client, const CourseConfig& config, std::string git_token)
    : client_(client), config_(config), token_(std::move(git_token)),
      scheme_{config.course_id} {}

CourseTopology Provisioner::provision_course(const Roster& roster, ProvisionReport* report) {
    CourseTopology topo;
    auto note_created = [&](const std::string& what, bool created) {
        if (report && created) {
            report->lines.push_back("created " + what);
            ++report->created;
        }
    };
    auto note_membership = [&](const std::string& what, MembershipChange change) {
        if (report && change != MembershipChange::Unchanged) {
            report->lines.push_back((change == MembershipChange::Added ? "added " : "repaired ") +
                                    what);
            ++report->repaired;
        }
    };

    auto main = client_.ensure_group(std::nullopt, config_.course_id);
    note_created("group " + main.ref.full_path, main.created);
    topo.main_group = main.ref;

    auto course = client_.ensure_project(topo.main_group, "course-info");
    note_created("project " + course.ref.full_path, course.created);
    topo.course_project = course.ref;

    auto feedback = client_.ensure_group(topo.main_group, "feedback");
    note_created("group " + feedback.ref.full_path, feedback.created);
    topo.feedback_group = feedback.ref;

    for (const auto& f : config_.faculty) {
        Role role = role_from_string(config_.faculty_role).value_or(Role::Maintainer);
        auto change = client_.set_group_member_role(topo.main_group, f, role);
        note_membership("faculty " + f + " as " + to_string(role) + " on " +
                            topo.main_group.full_path,
                        change);
    }

    for (const auto& assessment : config_.assessments) {
        auto ag = client_.ensure_group(topo.main_group, assessment.id);
        note_created("group " + ag.ref.full_path, ag.created);
        topo.assessment_groups[assessment.id] = ag.ref;

        for (const auto& group : roster.entries) {
            auto sub = client_.ensure_project(ag.ref, group.group_id);
            note_created("project " + sub.ref.full_path, sub.created);
            auto fb =
                client_.ensure_project(topo.feedback_group, assessment.id + "-" + group.group_id);
            note_created("project " + fb.ref.full_path, fb.created);
            topo.group_repos[{assessment.id, group.group_id}] = {sub.ref, fb.ref};

            for (const auto& member : group.members) {
                auto c1 = client_.set_member_role(sub.ref, member, Role::Developer);
                note_membership(member + " as Developer on " + sub.ref.full_path, c1);
                auto c2 = client_.set_member_role(fb.ref, member, Role::Reporter);
                note_membership(member + " as Reporter on " + fb.ref.full_path, c2);
            }

            // converge: nobody outside the group (or faculty) may watch this
            // feedback repo
            std::set<std::string> allowed(group.members.begin(), group.members.end());
            for (const auto& f : config_.faculty) allowed.insert(f);
            for (const auto& m : client_.list_members(fb.ref)) {
                if (!allowed.count(m.username)) {
                    client_.remove_member(fb.ref, m.username);
                    if (report) {
                        report->lines.push_back("removed " + m.username + " from " +
                                                fb.ref.full_path);
                        ++report->repaired;
                    }
                }
            }
        }
    }

    for (const auto& username : roster.all_usernames()) {
        auto change = client_.set_member_role(topo.course_project, username, Role::Reporter);
        note_membership(username + " as Reporter on " + topo.course_project.full_path, change);
    }
    return topo;
}

CourseTopology Provisioner::resolve_topology(const Roster& roster) {
    CourseTopology topo;
    auto need_group = [&](const std::string& path) {
        auto ref = client_.find_group(path);
        if (!ref) throw Error("group " + path + " not found; run `init` first");
        return *ref;
    };
    auto need_project = [&](const std::string& path) {
        auto ref = client_.find_project(path);
        if (!ref) throw Error("project " + path + " not found; run `init` first");
        return *ref;
    };
    topo.main_group = need_group(scheme_.main_group());
    topo.feedback_group = need_group(scheme_.feedback_group());
    topo.course_project = need_project(scheme_.course_project());
    for (const auto& assessment : config_.assessments) {
        topo.assessment_groups[assessment.id] = need_group(scheme_.assessment_group(assessment.id));
        for (const auto& group : roster.entries) {
            topo.group_repos[{assessment.id, group.group_id}] = {
                need_project(scheme_.submission_project(assessment.id, group.group_id)),
                need_project(scheme_.feedback_project(assessment.id, group.group_id))};
        }
    }
    return topo;
}

std::vector<std::string> Provisioner::publish_assessment(const CourseTopology& topology,
                                                         const AssessmentConfig& assessment,
                                                         const fs::path& materials_dir) {
    if (!fs::exists(materials_dir / "README.md"))
        throw ValidationError("materials_dir",
                              "statement file README.md missing in " + materials_dir.string());

    std::string ci = generate_ci_yaml(config_);
    write_file(canonical_ci_path(config_), ci);

    std::vector<std::string> failures;
    for (const auto& [key, repos] : topology.group_repos) {
        if (key.first != assessment.id) continue;
        try {
            fs::path clone_dir =
                config_.work_dir / "publish" / (assessment.id + "__" + key.second);
            WorkTree tree = clone_or_update(authenticated_url(repos.submission.clone_url, token_),
                                            clone_dir);
            copy_tree(materials_dir, tree.local_path);
            write_file(tree.local_path / "README.md",
                       read_file(materials_dir / "README.md") + ci_warning_footer());
            write_file(tree.local_path / ".gitlab-ci.yml", ci);
            write_file(tree.local_path / ".gitignore", gitignore_note());
            commit_all_push(tree, "Publish " + assessment.id + " materials", kBotIdentity);
        } catch (const std::exception& e) {
            log_event(LogLevel::Error, "publish_failed",
                      {{"repo", repos.submission.full_path}, {"error", e.what()}});
            failures.push_back(repos.submission.full_path);
        }
    }
    return failures;
}

Provisioner::LockResult Provisioner::lock_assessment(const CourseTopology& topology,
                                                     const std::string& assessment_id) {
    if (!config_.find_assessment(assessment_id))
        throw ValidationError("assessment", "unknown assessment '" + assessment_id + "'");
    LockResult result;
    for (const auto& [key, repos] : topology.group_repos) {
        if (key.first != assessment_id) continue;
        try {
            for (const auto& member : client_.list_members(repos.submission)) {
                if (member.role != Role::Reporter) {
                    client_.set_member_role(repos.submission, member.username, Role::Reporter);
                    ++result.demotions;
                }
            }
        } catch (const std::exception& e) {
            result.errors.push_back(repos.submission.full_path + ": " + e.what());
        }
    }
    return result;
}

}  // namespace gitseed
