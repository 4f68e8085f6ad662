#include "gitseed/reporting.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gitseed/errors.hpp"
#include "gitseed/timeutil.hpp"

namespace gitseed {

namespace fs = std::filesystem;

namespace {

std::string short_sha(const std::string& commit) { return commit.substr(0, 8); }

// fenced code block; content gets a final newline if it lacks one
void code_block(std::ostringstream& out, const std::string& content) {
    out << "```\n" << content;
    if (content.empty() || content.back() != '\n') out << "\n";
    out << "```\n";
}

void output_block(std::ostringstream& out, const TestVerdict& v) {
    out << "\n## Output: " << v.name << "\n\n";
    out << "Expected:\n\n";
    code_block(out, v.expected_excerpt);
    out << "\nActual:\n\n";
    code_block(out, v.actual_excerpt);
}

// ---- ustar writer ----

struct TarEntry {
    std::string name;  // posix-relative, directories end with '/'
    bool is_dir = false;
    bool executable = false;
    std::string content;
};

void octal_field(char* dst, size_t len, std::uint64_t value) {
    // len-1 digits, NUL terminated
    std::snprintf(dst, len, "%0*llo", static_cast<int>(len - 1),
                  static_cast<unsigned long long>(value));
}

void append_tar_entry(std::string& out, const TarEntry& e, std::int64_t mtime) {
    char header[512];
    std::memset(header, 0, sizeof(header));

    std::string name = e.name;
    std::string prefix;
    if (name.size() > 100) {
        // split at a '/' so the tail fits the 100-byte name field and the
        // head fits the 155-byte prefix field
        size_t cut = name.rfind('/', std::min<size_t>(155, name.size() - 1));
        if (cut == std::string::npos || name.size() - cut - 1 > 100)
            throw Error("tar entry name too long: " + e.name);
        prefix = name.substr(0, cut);
        name = name.substr(cut + 1);
    }
    std::memcpy(header, name.data(), name.size());
    octal_field(header + 100, 8, e.is_dir ? 0755 : (e.executable ? 0755 : 0644));
    octal_field(header + 108, 8, 0);  // uid
    octal_field(header + 116, 8, 0);  // gid
    octal_field(header + 124, 12, e.is_dir ? 0 : e.content.size());
    octal_field(header + 136, 12, static_cast<std::uint64_t>(mtime));
    std::memset(header + 148, ' ', 8);  // checksum placeholder
    header[156] = e.is_dir ? '5' : '0';
    std::memcpy(header + 257, "ustar", 6);
    header[263] = '0';
    header[264] = '0';
    std::memcpy(header + 345, prefix.data(), prefix.size());

    unsigned checksum = 0;
    for (unsigned char c : header) checksum += c;
    std::snprintf(header + 148, 8, "%06o", checksum);
    header[155] = ' ';

    out.append(header, sizeof(header));
    if (!e.is_dir) {
        out += e.content;
        size_t pad = (512 - e.content.size() % 512) % 512;
        out.append(pad, '\0');
    }
}

}  // namespace

std::string render_feedback(const EvaluationReport& report, const AssessmentConfig& assessment) {
    std::ostringstream out;
    out << "# " << report.event.assessment_id << " — " << report.event.group_id << "\n\n";
    out << "- Commit: `" << short_sha(report.event.commit) << "`\n";
    out << "- Evaluated at: " << format_iso8601(report.evaluated_at) << "\n";
    out << "- Next evaluation available at: " << format_iso8601(report.cooldown_until) << "\n";

    if (report.overall == OverallResult::Tampered) {
        out << "\n## Result: Tampered\n\n";
        out << "The repository's `.gitlab-ci.yml` is missing or differs from the published "
               "version. Write access to this repository has been revoked; please reach out to "
               "the course faculty.\n";
    } else if (report.overall == OverallResult::CompileError) {
        out << "\n## Result: Build failed\n\n";
        code_block(out, report.build_stderr_excerpt);
    } else {
        out << "\n## Results\n\n";
        out << "| Test | Verdict |\n";
        out << "| --- | --- |\n";
        for (const auto& v : report.test_verdicts)
            out << "| " << v.name << " | " << to_string(v.outcome) << " |\n";

        if (assessment.output_visible) {
            for (const auto& v : report.test_verdicts) output_block(out, v);
        } else if (assessment.only_first_wrong_visible) {
            for (const auto& v : report.test_verdicts) {
                if (v.outcome != TestOutcome::Pass) {
                    output_block(out, v);
                    break;  // verdicts arrive in name order; first wrong only
                }
            }
        }
    }

    if (report.overall != OverallResult::Tampered) {
        for (const auto& s : report.analyzer_sections) {
            out << "\n## Hints: " << s.title << "\n\n";
            out << (s.body.empty() ? std::string("No findings.\n") : s.body);
            if (!s.body.empty() && s.body.back() != '\n') out << "\n";
        }
    }

    out << "\n---\n\nThis report was generated automatically. Do not edit or delete "
           "`.gitlab-ci.yml` in your submission repository; a modified copy locks the "
           "repository.\n";
    return out.str();
}

void sort_dashboard_rows(std::vector<DashboardRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const DashboardRow& a, const DashboardRow& b) {
        if (a.passed != b.passed) return a.passed > b.passed;
        if (a.submissions != b.submissions) return a.submissions < b.submissions;
        return a.group_id < b.group_id;
    });
}

std::string render_dashboard(std::vector<DashboardRow> rows, const std::string& assessment_id,
                             std::int64_t generated_at) {
    sort_dashboard_rows(rows);
    std::ostringstream out;
    out << "# Dashboard — " << assessment_id << "\n\n";
    out << "Generated: " << format_iso8601(generated_at) << "\n\n";
    out << "| Group | Passed | Failed | Submissions | Days |\n";
    out << "| --- | --- | --- | --- | --- |\n";
    for (const auto& r : rows) {
        out << "| " << r.group_id << " | " << r.passed << " | " << r.failed << " | "
            << r.submissions << " | " << r.days << " |\n";
    }
    return out.str();
}

std::string package_code(const WorkTree& tree, std::int64_t mtime) {
    std::vector<TarEntry> entries;
    for (const auto& entry : fs::recursive_directory_iterator(tree.local_path)) {
        fs::path rel = fs::relative(entry.path(), tree.local_path);
        if (rel.begin() != rel.end() && *rel.begin() == ".git") continue;
        TarEntry te;
        te.name = rel.generic_string();
        if (entry.is_directory()) {
            te.is_dir = true;
            te.name += '/';
        } else if (entry.is_regular_file()) {
            auto perms = entry.status().permissions();
            te.executable = (perms & fs::perms::owner_exec) != fs::perms::none;
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream body;
            body << in.rdbuf();
            te.content = body.str();
        } else {
            continue;  // sockets/symlinks are not archived
        }
        entries.push_back(std::move(te));
    }
    std::sort(entries.begin(), entries.end(),
              [](const TarEntry& a, const TarEntry& b) { return a.name < b.name; });

    std::string out;
    for (const auto& e : entries) append_tar_entry(out, e, mtime);
    out.append(1024, '\0');  // two terminating zero blocks
    return out;
}

std::string publish_files(const std::string& clone_url, const fs::path& local_clone,
                          const std::vector<std::pair<std::string, std::string>>& files,
                          const std::string& commit_message) {
    WorkTree tree = clone_or_update(clone_url, local_clone);
    for (const auto& [name, bytes] : files) {
        fs::path target = tree.local_path / name;
        fs::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary | std::ios::trunc);
        out << bytes;
        if (!out) throw Error("cannot write " + target.string());
    }
    return commit_all_push(tree, commit_message, kBotIdentity);
}

}  // namespace gitseed
