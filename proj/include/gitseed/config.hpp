#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gitseed {

enum class AssessmentKind { Lab, Project };
enum class AnalyzerFailurePolicy { Warn, Skip };

std::string to_string(AssessmentKind k);
std::string to_string(AnalyzerFailurePolicy p);

// External tool whose output becomes a "Hints" section in the feedback README.
struct AnalyzerSpec {
    std::string name;
    std::string title;
    std::string command;  // template with {workdir} and optional {out}
    std::int64_t timeout_s = 60;
    AnalyzerFailurePolicy on_failure = AnalyzerFailurePolicy::Warn;

    bool operator==(const AnalyzerSpec&) const = default;
};

struct AssessmentConfig {
    std::string id;
    AssessmentKind kind = AssessmentKind::Lab;
    std::int64_t start_date = 0;  // UTC midnight, epoch seconds
    std::optional<std::int64_t> deadline;
    std::int64_t cooldown_s = 0;  // filled per kind when omitted: Lab 60, Project 600
    std::int64_t cpu_limit_s = 5;
    std::int64_t mem_limit_bytes = 8LL << 30;
    std::int64_t wall_limit_s = 0;  // default 2*cpu_limit_s + 5
    bool output_visible = false;
    bool only_first_wrong_visible = true;
    std::filesystem::path tests_dir;
    std::optional<std::string> build_cmd;
    std::string run_cmd;  // template with {workdir} and {test_input}
    std::vector<AnalyzerSpec> analyzers;
    std::vector<std::string> forbidden_patterns;
    std::vector<std::string> scan_extensions = {".c", ".h", ".py"};

    bool operator==(const AssessmentConfig&) const = default;
};

struct CourseConfig {
    std::string course_id;
    std::string server_base_url;
    std::string auth_token_env;
    std::filesystem::path drop_dir;
    std::filesystem::path work_dir;
    std::filesystem::path state_db_path;
    std::filesystem::path roster_path;
    std::vector<AssessmentConfig> assessments;
    std::vector<std::string> faculty;
    std::string faculty_role = "Maintainer";  // Maintainer or Owner

    const AssessmentConfig* find_assessment(const std::string& id) const;

    bool operator==(const CourseConfig&) const = default;
};

// Loads, default-fills and validates a course config.
// Throws ParseError (with line info) or ValidationError (naming the field).
CourseConfig load_config(const std::filesystem::path& path);

CourseConfig parse_config_text(const std::string& text);

// Canonical text form; load(parse(serialize(c))) == c.
std::string serialize_config(const CourseConfig& config);

// Returns environment[config.auth_token_env]; throws MissingToken when the
// variable is absent or empty.
std::string resolve_token(const CourseConfig& config,
                          const std::map<std::string, std::string>& environment);

// Convenience overload reading the process environment.
std::string resolve_token(const CourseConfig& config);

}  // namespace gitseed
