#include "gitseed/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gitseed/log.hpp"
#include "gitseed/reporting.hpp"

namespace gitseed {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += "'";
    return out;
}

// Commands from config run under `sh -c`; path placeholders are substituted
// shell-quoted.
std::string substitute(std::string tmpl,
                       const std::vector<std::pair<std::string, std::string>>& placeholders) {
    for (const auto& [key, value] : placeholders) {
        std::string quoted = shell_quote(value);
        size_t pos = 0;
        while ((pos = tmpl.find(key, pos)) != std::string::npos) {
            tmpl.replace(pos, key.size(), quoted);
            pos += quoted.size();
        }
    }
    return tmpl;
}

std::vector<std::string> sh(const std::string& command) { return {"/bin/sh", "-c", command}; }

std::string cap_excerpt(const std::string& s, size_t cap) {
    if (s.size() <= cap) return s;
    return s.substr(0, cap);
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= s.size()) {
        size_t nl = s.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(s.substr(start));
            break;
        }
        lines.push_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string rstrip_ws(const std::string& line) {
    size_t end = line.size();
    while (end > 0 && (line[end - 1] == ' ' || line[end - 1] == '\t')) --end;
    return line.substr(0, end);
}

}  // namespace

std::string to_string(TestOutcome o) {
    switch (o) {
        case TestOutcome::Pass: return "Pass";
        case TestOutcome::WrongOutput: return "WrongOutput";
        case TestOutcome::TimeLimit: return "TimeLimit";
        case TestOutcome::MemoryLimit: return "MemoryLimit";
        case TestOutcome::RuntimeError: return "RuntimeError";
    }
    return "?";
}

std::vector<TestCase> discover_tests(const fs::path& tests_dir) {
    std::vector<TestCase> tests;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(tests_dir, ec)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".in") continue;
        TestCase t;
        t.name = entry.path().stem().string();
        t.input_path = entry.path();
        t.expected_path = entry.path();
        t.expected_path.replace_extension(".out");
        if (!fs::exists(t.expected_path)) continue;  // unpaired input
        fs::path args_path = entry.path();
        args_path.replace_extension(".args");
        if (fs::exists(args_path)) {
            std::istringstream in(read_file(args_path));
            std::string token;
            while (std::getline(in, token)) {
                if (!token.empty() && token.back() == '\r') token.pop_back();
                if (!token.empty()) t.args.push_back(token);
            }
        }
        tests.push_back(std::move(t));
    }
    std::sort(tests.begin(), tests.end(),
              [](const TestCase& a, const TestCase& b) { return a.name < b.name; });
    return tests;
}

bool compare_output(const std::string& actual, const std::string& expected) {
    auto normalize = [](const std::string& s) {
        std::vector<std::string> lines = split_lines(s);
        // split_lines leaves one empty tail element for a trailing newline;
        // dropping it forgives exactly one missing final newline
        if (!lines.empty() && lines.back().empty()) lines.pop_back();
        for (auto& l : lines) l = rstrip_ws(l);
        return lines;
    };
    return normalize(actual) == normalize(expected);
}

bool detect_tamper(const WorkTree& tree, const std::string& canonical_ci) {
    fs::path ci = tree.local_path / ".gitlab-ci.yml";
    std::error_code ec;
    if (!fs::exists(ci, ec)) return true;
    return read_file(ci) != canonical_ci;
}

AnalyzerSection forbidden_includes(const fs::path& root,
                                   const std::vector<std::string>& patterns,
                                   const std::vector<std::string>& extensions) {
    AnalyzerSection section;
    section.title = "Forbidden libraries";
    section.ok = true;
    if (patterns.empty()) return section;

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        fs::path rel = fs::relative(entry.path(), root);
        if (rel.begin() != rel.end() && *rel.begin() == ".git") continue;
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end())
            files.push_back(rel);
    }
    std::sort(files.begin(), files.end());

    std::ostringstream body;
    for (const auto& rel : files) {
        std::istringstream in(read_file(root / rel));
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            for (const auto& pattern : patterns) {
                if (line.find(pattern) != std::string::npos) {
                    body << rel.generic_string() << ":" << line_no << ": " << pattern << "\n";
                    section.ok = false;
                }
            }
        }
    }
    section.body = body.str();
    return section;
}

ResourceLimits limits_for(const AssessmentConfig& assessment) {
    ResourceLimits limits;
    limits.cpu_s = static_cast<double>(assessment.cpu_limit_s);
    limits.mem_bytes = static_cast<std::uint64_t>(assessment.mem_limit_bytes);
    limits.wall_s = static_cast<double>(assessment.wall_limit_s);
    return limits;
}

std::vector<TestVerdict> run_tests(const WorkTree& tree, const AssessmentConfig& assessment) {
    std::vector<TestVerdict> verdicts;
    ResourceLimits limits = limits_for(assessment);
    const size_t display_cap = 64 * 1024;

    for (const auto& test : discover_tests(assessment.tests_dir)) {
        std::string cmd = substitute(assessment.run_cmd,
                                     {{"{workdir}", tree.local_path.string()},
                                      {"{test_input}", test.input_path.string()}});
        for (const auto& arg : test.args) cmd += " " + shell_quote(arg);

        TestVerdict v;
        v.name = test.name;
        v.run = sandbox_run(sh(cmd), test.input_path, tree.local_path, limits);
        switch (v.run.verdict) {
            case RunVerdict::OK:
                v.outcome = compare_output(v.run.stdout_data, read_file(test.expected_path))
                                ? TestOutcome::Pass
                                : TestOutcome::WrongOutput;
                break;
            case RunVerdict::TimeLimit: v.outcome = TestOutcome::TimeLimit; break;
            case RunVerdict::MemoryLimit: v.outcome = TestOutcome::MemoryLimit; break;
            case RunVerdict::OutputLimit: v.outcome = TestOutcome::WrongOutput; break;
            default: v.outcome = TestOutcome::RuntimeError; break;
        }
        v.expected_excerpt = cap_excerpt(read_file(test.expected_path), display_cap);
        v.actual_excerpt = cap_excerpt(v.run.stdout_data, display_cap);
        verdicts.push_back(std::move(v));  // no short-circuit on failure
    }
    return verdicts;
}

std::vector<AnalyzerSection> run_analyzers(const WorkTree& tree,
                                           const std::vector<AnalyzerSpec>& specs,
                                           std::uint64_t mem_limit_bytes) {
    std::vector<AnalyzerSection> sections;
    for (const auto& spec : specs) {
        fs::path out_file =
            fs::temp_directory_path() / ("analyzer-" + spec.name + "-" +
                                         std::to_string(reinterpret_cast<std::uintptr_t>(&spec)));
        bool uses_out_file = spec.command.find("{out}") != std::string::npos;
        std::string cmd = substitute(spec.command, {{"{workdir}", tree.local_path.string()},
                                                    {"{out}", out_file.string()}});
        ResourceLimits limits;
        limits.cpu_s = static_cast<double>(spec.timeout_s);
        limits.wall_s = static_cast<double>(spec.timeout_s);
        limits.mem_bytes = mem_limit_bytes;

        RunOutcome run = sandbox_run(sh(cmd), std::nullopt, tree.local_path, limits);
        std::string body = uses_out_file ? read_file(out_file) : run.stdout_data;
        std::error_code ec;
        fs::remove(out_file, ec);

        if (run.verdict == RunVerdict::OK) {
            sections.push_back({spec.title, body, true});
        } else {
            log_event(LogLevel::Warn, "analyzer_failed",
                      {{"analyzer", spec.name}, {"verdict", to_string(run.verdict)}});
            if (spec.on_failure == AnalyzerFailurePolicy::Warn)
                sections.push_back({spec.title, "Analyzer unavailable for this submission.\n",
                                    false});
            // Skip: no section at all
        }
    }
    return sections;
}

Evaluator::Evaluator(const CourseConfig& config, const Roster& roster, GitLabClient& client,
                     CommitDb& db, std::string git_token, Options options)
    : config_(config), roster_(roster), client_(client), db_(db), token_(std::move(git_token)),
      options_(std::move(options)), scheme_{config.course_id} {}

Evaluator::ProjectRefs Evaluator::lookup_repos(const std::string& assessment_id,
                                               const std::string& group_id) {
    auto lookup = [&](const std::string& path) {
        {
            std::lock_guard<std::mutex> lock(refs_mutex_);
            auto it = ref_cache_.find(path);
            if (it != ref_cache_.end()) return it->second;
        }
        auto ref = client_.find_project(path);
        if (!ref) throw Error("project " + path + " not found on server");
        std::lock_guard<std::mutex> lock(refs_mutex_);
        ref_cache_[path] = *ref;
        return *ref;
    };
    return {lookup(scheme_.submission_project(assessment_id, group_id)),
            lookup(scheme_.feedback_project(assessment_id, group_id))};
}

void Evaluator::push_dashboard(const AssessmentConfig& assessment, std::int64_t generated_at,
                               const std::string& current_group,
                               const std::optional<GroupStats>& merge) {
    // single-writer lane: stats are read and pushed under the course lock so
    // concurrent evaluations cannot interleave stale rows
    std::lock_guard<std::mutex> lock(course_repo_mutex_);
    std::vector<DashboardRow> rows;
    for (const auto& group : roster_.entries) {
        GroupStats s = db_.stats(group.group_id, assessment.id, generated_at,
                                 assessment.start_date);
        if (merge && group.group_id == current_group) s = *merge;
        rows.push_back({group.group_id, s.passed, s.failed, s.submissions,
                        days_since(generated_at, assessment.start_date)});
    }
    std::string body = render_dashboard(std::move(rows), assessment.id, generated_at);

    auto course_ref = client_.find_project(scheme_.course_project());
    if (!course_ref) throw Error("course project not found on server");
    publish_files(authenticated_url(course_ref->clone_url, token_),
                  config_.work_dir / "course-info",
                  {{"dashboards/" + assessment.id + ".md", body}},
                  "Update " + assessment.id + " dashboard");
}

void Evaluator::rebuild_dashboard(const std::string& assessment_id) {
    const AssessmentConfig* assessment = config_.find_assessment(assessment_id);
    if (!assessment) throw ValidationError("assessment", "unknown assessment '" + assessment_id +
                                                             "'");
    push_dashboard(*assessment, options_.clock(), "", std::nullopt);
}

EvalOutcome Evaluator::evaluate(const SubmissionEvent& event, const Flags& flags) {
    const AssessmentConfig* assessment = config_.find_assessment(event.assessment_id);
    const RosterGroup* group = roster_.find(event.group_id);
    std::int64_t received_at = options_.clock();

    SubmissionRecord rec;
    rec.assessment_id = event.assessment_id;
    rec.group_id = event.group_id;
    rec.commit = event.commit;
    rec.pushed_at = event.pushed_at;
    rec.received_at = received_at;

    auto fail = [&](const std::string& detail) {
        log_event(LogLevel::Error, "evaluation_failed",
                  {{"assessment", event.assessment_id},
                   {"group", event.group_id},
                   {"error", detail}});
        rec.status = SubmissionStatus::Failed;
        rec.evaluated_at.reset();
        rec.tests_passed = rec.tests_failed = 0;
        try {
            db_.record(rec);
        } catch (const std::exception& e) {
            log_event(LogLevel::Error, "record_failed", {{"error", e.what()}});
        }
        return EvalOutcome{SubmissionStatus::Failed, detail};
    };

    try {
        if (!assessment) return fail("unknown assessment " + event.assessment_id);
        if (!group) return fail("unknown group " + event.group_id);

        ProjectRefs repos = lookup_repos(event.assessment_id, event.group_id);
        fs::path sub_clone =
            config_.work_dir / "sub" / (event.assessment_id + "__" + event.group_id);
        WorkTree tree =
            clone_or_update(authenticated_url(repos.submission.clone_url, token_), sub_clone);
        checkout_commit(tree, event.commit);

        fs::path fb_clone =
            config_.work_dir / "feedback" / (event.assessment_id + "__" + event.group_id);
        std::string fb_url = authenticated_url(repos.feedback.clone_url, token_);

        // (1) tamper check; dominates every other outcome
        if (detect_tamper(tree, canonical_ci(config_))) {
            for (const auto& member : group->members) {
                try {
                    client_.set_member_role(repos.submission, member, Role::Reporter);
                } catch (const std::exception& e) {
                    log_event(LogLevel::Error, "tamper_demotion_failed",
                              {{"user", member}, {"error", e.what()}});
                }
            }
            EvaluationReport report;
            report.event = event;
            report.evaluated_at = options_.clock();
            report.overall = OverallResult::Tampered;
            report.cooldown_until = report.evaluated_at + assessment->cooldown_s;
            publish_files(fb_url, fb_clone,
                          {{"README.md", render_feedback(report, *assessment)}},
                          "Evaluation report for " + event.commit.substr(0, 8));
            rec.status = SubmissionStatus::SkippedTamper;
            db_.record(rec);
            log_event(LogLevel::Warn, "tamper_detected",
                      {{"assessment", event.assessment_id}, {"group", event.group_id}});
            return {SubmissionStatus::SkippedTamper, ""};
        }

        // (2) cooldown check
        if (!flags.bypass_cooldown) {
            CooldownDecision cd = db_.check_cooldown(event.group_id, event.assessment_id,
                                                     options_.clock(), assessment->cooldown_s);
            if (!cd.evaluate) {
                rec.status = SubmissionStatus::SkippedCooldown;
                db_.record(rec);
                log_event(LogLevel::Info, "cooldown_skip",
                          {{"assessment", event.assessment_id},
                           {"group", event.group_id},
                           {"until", std::to_string(cd.skipped_until)}});
                return {SubmissionStatus::SkippedCooldown, ""};
            }
        }

        // (3) worktree is already at the event commit; (4) optional build
        EvaluationReport report;
        report.event = event;
        report.overall = OverallResult::Evaluated;
        int test_count = static_cast<int>(discover_tests(assessment->tests_dir).size());

        if (assessment->build_cmd) {
            std::string cmd = substitute(*assessment->build_cmd,
                                         {{"{workdir}", tree.local_path.string()}});
            RunOutcome build =
                sandbox_run(sh(cmd), std::nullopt, tree.local_path, limits_for(*assessment));
            if (build.verdict != RunVerdict::OK) {
                report.overall = OverallResult::CompileError;
                report.build_stderr_excerpt =
                    cap_excerpt(build.stderr_data, options_.excerpt_cap);
            }
        }

        // (5) tests
        if (report.overall == OverallResult::Evaluated)
            report.test_verdicts = run_tests(tree, *assessment);

        // (6) analyzers: built-in section first, then spec order
        if (!assessment->forbidden_patterns.empty())
            report.analyzer_sections.push_back(forbidden_includes(
                tree.local_path, assessment->forbidden_patterns, assessment->scan_extensions));
        auto external = run_analyzers(tree, assessment->analyzers,
                                      static_cast<std::uint64_t>(assessment->mem_limit_bytes));
        report.analyzer_sections.insert(report.analyzer_sections.end(), external.begin(),
                                        external.end());

        // (7) compose
        report.evaluated_at = options_.clock();
        report.cooldown_until = report.evaluated_at + assessment->cooldown_s;

        int passed = 0;
        for (const auto& v : report.test_verdicts)
            if (v.outcome == TestOutcome::Pass) ++passed;
        int failed = test_count - passed;  // CompileError counts every test as failed

        // (8) feedback push: README + code tar
        std::string tar = package_code(tree, report.evaluated_at);
        publish_files(fb_url, fb_clone,
                      {{"README.md", render_feedback(report, *assessment)},
                       {"code-" + event.commit.substr(0, 8) + ".tar", tar}},
                      "Evaluation report for " + event.commit.substr(0, 8));

        // (9) dashboard; current evaluation merged in ahead of its record
        if (flags.update_dashboard) {
            GroupStats merged = db_.stats(event.group_id, event.assessment_id,
                                          report.evaluated_at, assessment->start_date);
            merged.passed = passed;
            merged.failed = failed;
            merged.submissions += 1;
            push_dashboard(*assessment, report.evaluated_at, event.group_id, merged);
        }

        // (10) durable record
        rec.status = SubmissionStatus::Evaluated;
        rec.evaluated_at = report.evaluated_at;
        rec.tests_passed = passed;
        rec.tests_failed = failed;
        db_.record(rec);
        log_event(LogLevel::Info, "evaluation_done",
                  {{"assessment", event.assessment_id},
                   {"group", event.group_id},
                   {"passed", std::to_string(passed)},
                   {"failed", std::to_string(failed)}});
        return {SubmissionStatus::Evaluated, ""};
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

}  // namespace gitseed
