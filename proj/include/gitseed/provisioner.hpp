#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gitseed/config.hpp"
#include "gitseed/gitlab_api.hpp"

namespace gitseed {

struct RosterGroup {
    std::string group_id;
    std::vector<std::string> members;  // non-empty

    bool operator==(const RosterGroup&) const = default;
};

struct Roster {
    std::vector<RosterGroup> entries;

    const RosterGroup* find(const std::string& group_id) const;
    std::vector<std::string> all_usernames() const;

    bool operator==(const Roster&) const = default;
};

// Text format: one `group_id: user1,user2` line per group, `#` comments.
Roster parse_roster_text(const std::string& text);
Roster load_roster(const std::filesystem::path& path);

// Canonical server paths for one course.
struct PathScheme {
    std::string course_id;

    std::string main_group() const { return course_id; }
    std::string feedback_group() const { return course_id + "/feedback"; }
    std::string course_project() const { return course_id + "/course-info"; }
    std::string assessment_group(const std::string& assessment_id) const {
        return course_id + "/" + assessment_id;
    }
    std::string submission_project(const std::string& assessment_id,
                                   const std::string& group_id) const {
        return course_id + "/" + assessment_id + "/" + group_id;
    }
    std::string feedback_project(const std::string& assessment_id,
                                 const std::string& group_id) const {
        return course_id + "/feedback/" + assessment_id + "-" + group_id;
    }
};

struct GroupRepos {
    RemoteRef submission;
    RemoteRef feedback;
};

struct CourseTopology {
    RemoteRef main_group;
    RemoteRef feedback_group;
    RemoteRef course_project;
    std::map<std::string, RemoteRef> assessment_groups;
    std::map<std::pair<std::string, std::string>, GroupRepos> group_repos;  // (assessment, group)
};

// What provision_course touched; drives the `init` summary.
struct ProvisionReport {
    std::vector<std::string> lines;
    int created = 0;
    int repaired = 0;

    bool changed() const { return created + repaired > 0; }
};

// Normative content of the CI file published into every submission repo.
// One job, tagged for the course runner, whose only action writes the
// submission event file into drop_dir. Identical across repos.
std::string generate_ci_yaml(const CourseConfig& config);

// Copy of the CI file frozen at publish time; tamper checks compare
// against this, falling back to regeneration when it was never stored.
std::filesystem::path canonical_ci_path(const CourseConfig& config);
std::string canonical_ci(const CourseConfig& config);

std::string ci_warning_footer();
std::string gitignore_note();

class Provisioner {
public:
    Provisioner(GitLabClient& client, const CourseConfig& config, std::string git_token);

    // Creates/repairs the whole topology; idempotent and convergent.
    CourseTopology provision_course(const Roster& roster, ProvisionReport* report = nullptr);

    // Find-only topology lookup; throws when a path is missing (run `init`).
    CourseTopology resolve_topology(const Roster& roster);

    // Pushes materials + CI file + gitignore to every group's submission
    // repo; returns the repo paths whose push failed (others proceed).
    std::vector<std::string> publish_assessment(const CourseTopology& topology,
                                                const AssessmentConfig& assessment,
                                                const std::filesystem::path& materials_dir);

    struct LockResult {
        int demotions = 0;
        std::vector<std::string> errors;
    };

    // Demotes every member of every submission repo of the assessment to
    // Reporter. Feedback repos untouched.
    LockResult lock_assessment(const CourseTopology& topology, const std::string& assessment_id);

private:
    GitLabClient& client_;
    const CourseConfig& config_;
    std::string token_;
    PathScheme scheme_;
};

}  // namespace gitseed
