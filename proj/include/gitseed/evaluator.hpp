#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gitseed/commit_db.hpp"
#include "gitseed/config.hpp"
#include "gitseed/git_ops.hpp"
#include "gitseed/gitlab_api.hpp"
#include "gitseed/provisioner.hpp"
#include "gitseed/sandbox.hpp"
#include "gitseed/submission_intake.hpp"
#include "gitseed/timeutil.hpp"

namespace gitseed {

struct TestCase {
    std::string name;  // file stem; lexicographic order governs execution
    std::filesystem::path input_path;
    std::filesystem::path expected_path;
    std::vector<std::string> args;
};

enum class TestOutcome { Pass, WrongOutput, TimeLimit, MemoryLimit, RuntimeError };

std::string to_string(TestOutcome o);

struct TestVerdict {
    std::string name;
    TestOutcome outcome = TestOutcome::RuntimeError;
    RunOutcome run;
    std::string expected_excerpt;  // capped for rendering
    std::string actual_excerpt;
};

struct AnalyzerSection {
    std::string title;
    std::string body;
    bool ok = true;
};

enum class OverallResult { Evaluated, CompileError, Tampered };

struct EvaluationReport {
    SubmissionEvent event;
    std::int64_t evaluated_at = 0;
    OverallResult overall = OverallResult::Evaluated;
    std::vector<TestVerdict> test_verdicts;
    std::vector<AnalyzerSection> analyzer_sections;
    std::int64_t cooldown_until = 0;  // evaluated_at + cooldown_s
    std::string build_stderr_excerpt;  // CompileError only
};

// ---- pipeline building blocks ----

// <name>.in / <name>.out pairs, optional <name>.args (one argv token per
// line); sorted by name.
std::vector<TestCase> discover_tests(const std::filesystem::path& tests_dir);

// Normalized equality: trailing spaces/tabs stripped per line, equal line
// sequences required, a single missing final newline forgiven.
bool compare_output(const std::string& actual, const std::string& expected);

// True iff the worktree's .gitlab-ci.yml is absent or byte-differs from the
// canonical copy. Tree must be checked out at the event's commit.
bool detect_tamper(const WorkTree& tree, const std::string& canonical_ci);

// Scans sources under root (by extension) for lines containing any of the
// literal patterns; hits listed as `path:line: pattern`.
AnalyzerSection forbidden_includes(const std::filesystem::path& root,
                                   const std::vector<std::string>& patterns,
                                   const std::vector<std::string>& extensions);

std::vector<TestVerdict> run_tests(const WorkTree& tree, const AssessmentConfig& assessment);

std::vector<AnalyzerSection> run_analyzers(const WorkTree& tree,
                                           const std::vector<AnalyzerSpec>& specs,
                                           std::uint64_t mem_limit_bytes);

ResourceLimits limits_for(const AssessmentConfig& assessment);

// ---- orchestration ----

struct EvalOutcome {
    SubmissionStatus status = SubmissionStatus::Failed;
    std::string detail;  // populated for Failed
};

// Runs the full evaluation pipeline for one submission event: tamper check,
// cooldown check, build, tests, analyzers, feedback push, dashboard update,
// history record. Engine faults are caught, recorded as Failed and reported
// in the outcome; student repos are never pushed to.
class Evaluator {
public:
    struct Options {
        Clock clock = system_clock();
        std::size_t excerpt_cap = 64 * 1024;
    };

    struct Flags {
        bool bypass_cooldown = false;
        bool update_dashboard = true;
    };

    Evaluator(const CourseConfig& config, const Roster& roster, GitLabClient& client,
              CommitDb& db, std::string git_token, Options options = {});

    EvalOutcome evaluate(const SubmissionEvent& event, const Flags& flags = {});

    // Recomputes and pushes one assessment's dashboard from stored stats.
    void rebuild_dashboard(const std::string& assessment_id);

    const CourseConfig& config() const { return config_; }

private:
    struct ProjectRefs {
        RemoteRef submission;
        RemoteRef feedback;
    };
    ProjectRefs lookup_repos(const std::string& assessment_id, const std::string& group_id);
    void push_dashboard(const AssessmentConfig& assessment, std::int64_t generated_at,
                        const std::string& current_group, const std::optional<GroupStats>& merge);

    const CourseConfig& config_;
    const Roster& roster_;
    GitLabClient& client_;
    CommitDb& db_;
    std::string token_;
    Options options_;
    PathScheme scheme_;
    std::mutex course_repo_mutex_;  // single-writer lane for dashboard pushes
    std::mutex refs_mutex_;
    std::map<std::string, RemoteRef> ref_cache_;
};

}  // namespace gitseed
