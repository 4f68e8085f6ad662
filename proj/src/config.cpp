#include "gitseed/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "gitseed/errors.hpp"
#include "gitseed/timeutil.hpp"

namespace gitseed {
namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::int64_t parse_int(const std::string& key, const std::string& value, int line) {
    try {
        size_t pos = 0;
        std::int64_t v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw ParseError(key + ": expected an integer, got '" + value + "'", line);
    }
}

bool parse_bool(const std::string& key, const std::string& value, int line) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ParseError(key + ": expected true or false, got '" + value + "'", line);
}

// Raw key/value view of the file; defaults applied afterwards so that
// omitted-field tracking stays explicit.
struct RawAnalyzer {
    std::map<std::string, std::string> kv;
    std::map<std::string, int> lines;
};
struct RawAssessment {
    std::map<std::string, std::string> kv;
    std::map<std::string, int> lines;
    std::vector<RawAnalyzer> analyzers;
};
struct RawConfig {
    std::map<std::string, std::string> kv;
    std::map<std::string, int> lines;
    std::vector<RawAssessment> assessments;
};

RawConfig lex(const std::string& text) {
    RawConfig raw;
    enum class Section { Top, Assessment, Analyzer } section = Section::Top;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError("unterminated section header", line_no);
            std::string name = trim(t.substr(1, t.size() - 2));
            if (name == "assessment") {
                raw.assessments.emplace_back();
                section = Section::Assessment;
            } else if (name == "analyzer") {
                if (raw.assessments.empty())
                    throw ParseError("[analyzer] section must follow an [assessment] section",
                                     line_no);
                raw.assessments.back().analyzers.emplace_back();
                section = Section::Analyzer;
            } else {
                throw ParseError("unknown section [" + name + "]", line_no);
            }
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", line_no);

        auto put = [&](std::map<std::string, std::string>& kv, std::map<std::string, int>& lines) {
            if (kv.count(key)) throw ParseError("duplicate key '" + key + "'", line_no);
            kv[key] = value;
            lines[key] = line_no;
        };
        switch (section) {
            case Section::Top: put(raw.kv, raw.lines); break;
            case Section::Assessment:
                put(raw.assessments.back().kv, raw.assessments.back().lines);
                break;
            case Section::Analyzer:
                put(raw.assessments.back().analyzers.back().kv,
                    raw.assessments.back().analyzers.back().lines);
                break;
        }
    }
    return raw;
}

const std::set<std::string> kTopKeys = {"course_id", "server_base_url", "auth_token_env",
                                        "drop_dir",  "work_dir",        "state_db_path",
                                        "roster_path", "faculty",       "faculty_role"};
const std::set<std::string> kAssessmentKeys = {
    "id",           "kind",          "start_date",         "deadline",
    "cooldown_s",   "cpu_limit_s",   "mem_limit_bytes",    "wall_limit_s",
    "output_visible", "only_first_wrong_visible", "tests_dir", "build_cmd",
    "run_cmd",      "forbidden_patterns", "scan_extensions"};
const std::set<std::string> kAnalyzerKeys = {"name", "title", "command", "timeout_s",
                                             "on_failure"};

void reject_unknown(const std::map<std::string, std::string>& kv,
                    const std::map<std::string, int>& lines, const std::set<std::string>& known) {
    for (const auto& [k, _] : kv) {
        if (!known.count(k)) throw ParseError("unknown key '" + k + "'", lines.at(k));
    }
}

std::string require(const std::map<std::string, std::string>& kv, const std::string& key,
                    const std::string& scope) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError(key, "required in " + scope);
    return it->second;
}

AnalyzerSpec build_analyzer(const RawAnalyzer& raw) {
    reject_unknown(raw.kv, raw.lines, kAnalyzerKeys);
    AnalyzerSpec a;
    a.name = require(raw.kv, "name", "[analyzer]");
    a.title = require(raw.kv, "title", "[analyzer]");
    a.command = require(raw.kv, "command", "[analyzer]");
    if (auto it = raw.kv.find("timeout_s"); it != raw.kv.end())
        a.timeout_s = parse_int("timeout_s", it->second, raw.lines.at("timeout_s"));
    if (auto it = raw.kv.find("on_failure"); it != raw.kv.end()) {
        if (it->second == "Warn")
            a.on_failure = AnalyzerFailurePolicy::Warn;
        else if (it->second == "Skip")
            a.on_failure = AnalyzerFailurePolicy::Skip;
        else
            throw ValidationError("on_failure", "must be Warn or Skip, got '" + it->second + "'");
    }
    if (a.name.empty()) throw ValidationError("name", "analyzer name must not be empty");
    if (a.command.find("{workdir}") == std::string::npos)
        throw ValidationError("command", "analyzer '" + a.name + "' must contain {workdir}");
    if (a.timeout_s <= 0) throw ValidationError("timeout_s", "must be positive");
    return a;
}

AssessmentConfig build_assessment(const RawAssessment& raw) {
    reject_unknown(raw.kv, raw.lines, kAssessmentKeys);
    AssessmentConfig a;
    a.id = require(raw.kv, "id", "[assessment]");

    std::string kind = require(raw.kv, "kind", "assessment '" + a.id + "'");
    if (kind == "Lab")
        a.kind = AssessmentKind::Lab;
    else if (kind == "Project")
        a.kind = AssessmentKind::Project;
    else
        throw ValidationError("kind", "must be Lab or Project, got '" + kind + "'");

    std::string start = require(raw.kv, "start_date", "assessment '" + a.id + "'");
    if (auto d = parse_utc_date(start))
        a.start_date = *d;
    else
        throw ValidationError("start_date", "expected YYYY-MM-DD, got '" + start + "'");

    if (auto it = raw.kv.find("deadline"); it != raw.kv.end()) {
        auto ts = parse_utc_timestamp(it->second);
        if (!ts) {
            // a bare date is accepted as its UTC midnight
            ts = parse_utc_date(it->second);
        }
        if (!ts)
            throw ValidationError("deadline",
                                  "expected YYYY-MM-DDTHH:MM:SSZ, got '" + it->second + "'");
        a.deadline = *ts;
    }

    a.cooldown_s = (a.kind == AssessmentKind::Lab) ? 60 : 600;
    if (auto it = raw.kv.find("cooldown_s"); it != raw.kv.end())
        a.cooldown_s = parse_int("cooldown_s", it->second, raw.lines.at("cooldown_s"));
    if (auto it = raw.kv.find("cpu_limit_s"); it != raw.kv.end())
        a.cpu_limit_s = parse_int("cpu_limit_s", it->second, raw.lines.at("cpu_limit_s"));
    if (auto it = raw.kv.find("mem_limit_bytes"); it != raw.kv.end())
        a.mem_limit_bytes =
            parse_int("mem_limit_bytes", it->second, raw.lines.at("mem_limit_bytes"));
    a.wall_limit_s = 2 * a.cpu_limit_s + 5;
    if (auto it = raw.kv.find("wall_limit_s"); it != raw.kv.end())
        a.wall_limit_s = parse_int("wall_limit_s", it->second, raw.lines.at("wall_limit_s"));
    if (auto it = raw.kv.find("output_visible"); it != raw.kv.end())
        a.output_visible = parse_bool("output_visible", it->second, raw.lines.at("output_visible"));
    if (auto it = raw.kv.find("only_first_wrong_visible"); it != raw.kv.end())
        a.only_first_wrong_visible = parse_bool("only_first_wrong_visible", it->second,
                                                raw.lines.at("only_first_wrong_visible"));
    a.tests_dir = require(raw.kv, "tests_dir", "assessment '" + a.id + "'");
    if (auto it = raw.kv.find("build_cmd"); it != raw.kv.end() && !it->second.empty())
        a.build_cmd = it->second;
    a.run_cmd = require(raw.kv, "run_cmd", "assessment '" + a.id + "'");
    if (auto it = raw.kv.find("forbidden_patterns"); it != raw.kv.end())
        a.forbidden_patterns = split_list(it->second);
    if (auto it = raw.kv.find("scan_extensions"); it != raw.kv.end())
        a.scan_extensions = split_list(it->second);

    for (const auto& rawa : raw.analyzers) a.analyzers.push_back(build_analyzer(rawa));

    // invariants
    if (a.cooldown_s < 0) throw ValidationError("cooldown_s", "must be >= 0");
    if (a.cpu_limit_s <= 0) throw ValidationError("cpu_limit_s", "must be > 0");
    if (a.mem_limit_bytes <= 0) throw ValidationError("mem_limit_bytes", "must be > 0");
    if (a.wall_limit_s < a.cpu_limit_s)
        throw ValidationError("wall_limit_s", "must be >= cpu_limit_s");
    if (a.kind == AssessmentKind::Lab && a.deadline)
        throw ValidationError("deadline", "labs must not carry a deadline");
    std::set<std::string> names;
    for (const auto& an : a.analyzers) {
        if (!names.insert(an.name).second)
            throw ValidationError("name", "duplicate analyzer '" + an.name + "' in assessment '" +
                                              a.id + "'");
    }
    return a;
}

}  // namespace

std::string to_string(AssessmentKind k) {
    return k == AssessmentKind::Lab ? "Lab" : "Project";
}

std::string to_string(AnalyzerFailurePolicy p) {
    return p == AnalyzerFailurePolicy::Warn ? "Warn" : "Skip";
}

const AssessmentConfig* CourseConfig::find_assessment(const std::string& id) const {
    for (const auto& a : assessments) {
        if (a.id == id) return &a;
    }
    return nullptr;
}

CourseConfig parse_config_text(const std::string& text) {
    RawConfig raw = lex(text);
    reject_unknown(raw.kv, raw.lines, kTopKeys);

    CourseConfig c;
    c.course_id = require(raw.kv, "course_id", "config");
    c.server_base_url = require(raw.kv, "server_base_url", "config");
    c.auth_token_env = require(raw.kv, "auth_token_env", "config");
    c.drop_dir = require(raw.kv, "drop_dir", "config");
    c.work_dir = require(raw.kv, "work_dir", "config");
    c.state_db_path = require(raw.kv, "state_db_path", "config");
    c.roster_path = require(raw.kv, "roster_path", "config");
    if (auto it = raw.kv.find("faculty"); it != raw.kv.end()) c.faculty = split_list(it->second);
    if (auto it = raw.kv.find("faculty_role"); it != raw.kv.end()) {
        if (it->second != "Maintainer" && it->second != "Owner")
            throw ValidationError("faculty_role", "must be Maintainer or Owner");
        c.faculty_role = it->second;
    }

    static const std::regex id_re("[a-z0-9_-]{1,64}");
    if (!std::regex_match(c.course_id, id_re))
        throw ValidationError("course_id", "must match [a-z0-9_-]{1,64}");

    for (const auto& rawa : raw.assessments) c.assessments.push_back(build_assessment(rawa));

    std::set<std::string> ids;
    for (const auto& a : c.assessments) {
        if (!ids.insert(a.id).second)
            throw ValidationError("id", "duplicate assessment id '" + a.id + "'");
    }
    std::set<std::string> paths = {c.drop_dir.string(), c.work_dir.string(),
                                   c.state_db_path.string()};
    if (paths.size() != 3)
        throw ValidationError("drop_dir", "drop_dir, work_dir and state_db_path must be distinct");
    return c;
}

CourseConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read config file: " + path.string());
    std::ostringstream body;
    body << in.rdbuf();
    return parse_config_text(body.str());
}

std::string serialize_config(const CourseConfig& c) {
    std::ostringstream out;
    out << "course_id = " << c.course_id << "\n";
    out << "server_base_url = " << c.server_base_url << "\n";
    out << "auth_token_env = " << c.auth_token_env << "\n";
    out << "drop_dir = " << c.drop_dir.string() << "\n";
    out << "work_dir = " << c.work_dir.string() << "\n";
    out << "state_db_path = " << c.state_db_path.string() << "\n";
    out << "roster_path = " << c.roster_path.string() << "\n";
    if (!c.faculty.empty()) {
        out << "faculty = ";
        for (size_t i = 0; i < c.faculty.size(); ++i) out << (i ? ", " : "") << c.faculty[i];
        out << "\n";
    }
    out << "faculty_role = " << c.faculty_role << "\n";
    for (const auto& a : c.assessments) {
        out << "\n[assessment]\n";
        out << "id = " << a.id << "\n";
        out << "kind = " << to_string(a.kind) << "\n";
        out << "start_date = " << format_iso8601(a.start_date).substr(0, 10) << "\n";
        if (a.deadline) out << "deadline = " << format_iso8601(*a.deadline) << "\n";
        out << "cooldown_s = " << a.cooldown_s << "\n";
        out << "cpu_limit_s = " << a.cpu_limit_s << "\n";
        out << "mem_limit_bytes = " << a.mem_limit_bytes << "\n";
        out << "wall_limit_s = " << a.wall_limit_s << "\n";
        out << "output_visible = " << (a.output_visible ? "true" : "false") << "\n";
        out << "only_first_wrong_visible = " << (a.only_first_wrong_visible ? "true" : "false")
            << "\n";
        out << "tests_dir = " << a.tests_dir.string() << "\n";
        if (a.build_cmd) out << "build_cmd = " << *a.build_cmd << "\n";
        out << "run_cmd = " << a.run_cmd << "\n";
        if (!a.forbidden_patterns.empty()) {
            out << "forbidden_patterns = ";
            for (size_t i = 0; i < a.forbidden_patterns.size(); ++i)
                out << (i ? ", " : "") << a.forbidden_patterns[i];
            out << "\n";
        }
        out << "scan_extensions = ";
        for (size_t i = 0; i < a.scan_extensions.size(); ++i)
            out << (i ? ", " : "") << a.scan_extensions[i];
        out << "\n";
        for (const auto& an : a.analyzers) {
            out << "\n[analyzer]\n";
            out << "name = " << an.name << "\n";
            out << "title = " << an.title << "\n";
            out << "command = " << an.command << "\n";
            out << "timeout_s = " << an.timeout_s << "\n";
            out << "on_failure = " << to_string(an.on_failure) << "\n";
        }
    }
    return out.str();
}

std::string resolve_token(const CourseConfig& config,
                          const std::map<std::string, std::string>& environment) {
    auto it = environment.find(config.auth_token_env);
    if (it == environment.end() || it->second.empty())
        throw MissingToken("environment variable " + config.auth_token_env +
                           " is absent or empty");
    return it->second;
}

std::string resolve_token(const CourseConfig& config) {
    const char* v = std::getenv(config.auth_token_env.c_str());
    if (v == nullptr || *v == '\0')
        throw MissingToken("environment variable " + config.auth_token_env +
                           " is absent or empty");
    return v;
}

}  // namespace gitseed
