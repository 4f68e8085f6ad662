#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gitseed/config.hpp"
#include "gitseed/evaluator.hpp"
#include "gitseed/git_ops.hpp"

namespace gitseed {

struct DashboardRow {
    std::string group_id;
    int passed = 0;
    int failed = 0;
    int submissions = 0;
    std::int64_t days = 0;

    bool operator==(const DashboardRow&) const = default;
};

// Feedback README markdown. Pure: equal inputs yield identical bytes.
// Output-block visibility: output_visible shows every test's
// expected/actual block; otherwise only_first_wrong_visible shows exactly
// the lexicographically first non-Pass test's block; neither shows none.
std::string render_feedback(const EvaluationReport& report, const AssessmentConfig& assessment);

// (passed desc, submissions asc, group_id asc)
void sort_dashboard_rows(std::vector<DashboardRow>& rows);

// Dashboard markdown; rows are sorted internally. Pure and deterministic.
std::string render_dashboard(std::vector<DashboardRow> rows, const std::string& assessment_id,
                             std::int64_t generated_at);

// POSIX ustar archive of the worktree, `.git` excluded, entries sorted by
// path, fixed mtime; byte-deterministic for equal trees.
std::string package_code(const WorkTree& tree, std::int64_t mtime);

// Writes files into a clone of `clone_url` and pushes a bot commit.
// Returns the new head (unchanged head when nothing to commit).
std::string publish_files(const std::string& clone_url, const std::filesystem::path& local_clone,
                          const std::vector<std::pair<std::string, std::string>>& files,
                          const std::string& commit_message);

}  // namespace gitseed
