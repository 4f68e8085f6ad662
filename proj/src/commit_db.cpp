#include "gitseed/commit_db.hpp"

#include <sqlite3.h>

#include <sstream>

#include "gitseed/errors.hpp"
#include "gitseed/timeutil.hpp"

namespace gitseed {
namespace {

bool is_commit_sha(const std::string& s) {
    if (s.size() != 40) return false;
    for (char c : s) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
    return true;
}

// Wraps a prepared statement for one-shot use.
class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
            throw StoreError(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db));
    }
    ~Stmt() { sqlite3_finalize(stmt_); }
    Stmt(const Stmt&) = delete;

    void bind_text(int ix, const std::string& v) {
        sqlite3_bind_text(stmt_, ix, v.c_str(), -1, SQLITE_TRANSIENT);
    }
    void bind_int64(int ix, std::int64_t v) { sqlite3_bind_int64(stmt_, ix, v); }
    void bind_null(int ix) { sqlite3_bind_null(stmt_, ix); }

    bool step_row(sqlite3* db) {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw StoreError(std::string("sqlite step failed: ") + sqlite3_errmsg(db));
    }

    sqlite3_stmt* get() { return stmt_; }

private:
    sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

std::string to_string(SubmissionStatus s) {
    switch (s) {
        case SubmissionStatus::Evaluated: return "Evaluated";
        case SubmissionStatus::SkippedCooldown: return "SkippedCooldown";
        case SubmissionStatus::SkippedTamper: return "SkippedTamper";
        case SubmissionStatus::Failed: return "Failed";
    }
    return "?";
}

std::optional<SubmissionStatus> submission_status_from_string(const std::string& s) {
    if (s == "Evaluated") return SubmissionStatus::Evaluated;
    if (s == "SkippedCooldown") return SubmissionStatus::SkippedCooldown;
    if (s == "SkippedTamper") return SubmissionStatus::SkippedTamper;
    if (s == "Failed") return SubmissionStatus::Failed;
    return std::nullopt;
}

CommitDb::CommitDb(const std::filesystem::path& path) {
    if (sqlite3_open(path.string().c_str(), &db_) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw StoreError("cannot open store at " + path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    const char* schema =
        "CREATE TABLE IF NOT EXISTS submissions ("
        "  id INTEGER PRIMARY KEY AUTOINCREMENT,"
        "  assessment_id TEXT NOT NULL,"
        "  group_id TEXT NOT NULL,"
        "  commit_sha TEXT NOT NULL,"
        "  pushed_at INTEGER NOT NULL,"
        "  received_at INTEGER NOT NULL,"
        "  status TEXT NOT NULL,"
        "  evaluated_at INTEGER,"
        "  tests_passed INTEGER NOT NULL,"
        "  tests_failed INTEGER NOT NULL);"
        "CREATE INDEX IF NOT EXISTS idx_submissions_key"
        "  ON submissions(assessment_id, group_id);";
    char* err = nullptr;
    if (sqlite3_exec(db_, schema, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        sqlite3_close(db_);
        db_ = nullptr;
        throw StoreError("cannot initialize store: " + msg);
    }
}

CommitDb::~CommitDb() {
    if (db_) sqlite3_close(db_);
}

CooldownDecision CommitDb::check_cooldown(const std::string& group_id,
                                          const std::string& assessment_id, std::int64_t now,
                                          std::int64_t cooldown_s) {
    std::lock_guard<std::mutex> lock(mutex_);
    Stmt q(db_,
           "SELECT MAX(evaluated_at) FROM submissions"
           " WHERE assessment_id = ?1 AND group_id = ?2 AND status = 'Evaluated'");
    q.bind_text(1, assessment_id);
    q.bind_text(2, group_id);
    if (!q.step_row(db_) || sqlite3_column_type(q.get(), 0) == SQLITE_NULL) return {true, 0};
    std::int64_t last = sqlite3_column_int64(q.get(), 0);
    if (now - last >= cooldown_s) return {true, 0};
    return {false, last + cooldown_s};
}

void CommitDb::record(const SubmissionRecord& rec) {
    bool evaluated = rec.status == SubmissionStatus::Evaluated;
    if (evaluated != rec.evaluated_at.has_value())
        throw std::invalid_argument("record: evaluated_at present iff status is Evaluated");
    if (!evaluated && (rec.tests_passed != 0 || rec.tests_failed != 0))
        throw std::invalid_argument("record: non-Evaluated rows must carry 0/0 test counts");
    if (rec.tests_passed < 0 || rec.tests_failed < 0)
        throw std::invalid_argument("record: negative test count");
    if (!is_commit_sha(rec.commit))
        throw std::invalid_argument("record: commit must be 40 lowercase hex chars");
    if (rec.pushed_at <= 0) throw std::invalid_argument("record: pushed_at must be > 0");

    std::lock_guard<std::mutex> lock(mutex_);
    Stmt ins(db_,
             "INSERT INTO submissions (assessment_id, group_id, commit_sha, pushed_at,"
             " received_at, status, evaluated_at, tests_passed, tests_failed)"
             " VALUES (?1,?2,?3,?4,?5,?6,?7,?8,?9)");
    ins.bind_text(1, rec.assessment_id);
    ins.bind_text(2, rec.group_id);
    ins.bind_text(3, rec.commit);
    ins.bind_int64(4, rec.pushed_at);
    ins.bind_int64(5, rec.received_at);
    ins.bind_text(6, to_string(rec.status));
    if (rec.evaluated_at)
        ins.bind_int64(7, *rec.evaluated_at);
    else
        ins.bind_null(7);
    ins.bind_int64(8, rec.tests_passed);
    ins.bind_int64(9, rec.tests_failed);
    ins.step_row(db_);
}

GroupStats CommitDb::stats(const std::string& group_id, const std::string& assessment_id,
                           std::int64_t now, std::int64_t start_date) {
    std::lock_guard<std::mutex> lock(mutex_);
    GroupStats s;
    {
        Stmt q(db_,
               "SELECT tests_passed, tests_failed FROM submissions"
               " WHERE assessment_id = ?1 AND group_id = ?2 AND status = 'Evaluated'"
               " ORDER BY evaluated_at DESC, id DESC LIMIT 1");
        q.bind_text(1, assessment_id);
        q.bind_text(2, group_id);
        if (q.step_row(db_)) {
            s.passed = sqlite3_column_int(q.get(), 0);
            s.failed = sqlite3_column_int(q.get(), 1);
        }
    }
    {
        Stmt q(db_,
               "SELECT COUNT(*) FROM submissions WHERE assessment_id = ?1 AND group_id = ?2");
        q.bind_text(1, assessment_id);
        q.bind_text(2, group_id);
        q.step_row(db_);
        s.submissions = sqlite3_column_int(q.get(), 0);
    }
    s.days = days_since(now, start_date);
    return s;
}

std::vector<SubmissionRecord> CommitDb::all_records() {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<SubmissionRecord> out;
    Stmt q(db_,
           "SELECT assessment_id, group_id, commit_sha, pushed_at, received_at, status,"
           " evaluated_at, tests_passed, tests_failed FROM submissions ORDER BY id");
    while (q.step_row(db_)) {
        SubmissionRecord r;
        r.assessment_id = reinterpret_cast<const char*>(sqlite3_column_text(q.get(), 0));
        r.group_id = reinterpret_cast<const char*>(sqlite3_column_text(q.get(), 1));
        r.commit = reinterpret_cast<const char*>(sqlite3_column_text(q.get(), 2));
        r.pushed_at = sqlite3_column_int64(q.get(), 3);
        r.received_at = sqlite3_column_int64(q.get(), 4);
        auto st = submission_status_from_string(
            reinterpret_cast<const char*>(sqlite3_column_text(q.get(), 5)));
        if (!st) throw StoreError("corrupt status value in store");
        r.status = *st;
        if (sqlite3_column_type(q.get(), 6) != SQLITE_NULL)
            r.evaluated_at = sqlite3_column_int64(q.get(), 6);
        r.tests_passed = sqlite3_column_int(q.get(), 7);
        r.tests_failed = sqlite3_column_int(q.get(), 8);
        out.push_back(std::move(r));
    }
    return out;
}

std::string CommitDb::dump_csv() {
    std::ostringstream out;
    out << "assessment_id,group_id,commit,pushed_at,received_at,status,evaluated_at,"
           "tests_passed,tests_failed\n";
    for (const auto& r : all_records()) {
        out << r.assessment_id << ',' << r.group_id << ',' << r.commit << ',' << r.pushed_at << ','
            << r.received_at << ',' << to_string(r.status) << ',';
        if (r.evaluated_at) out << *r.evaluated_at;
        out << ',' << r.tests_passed << ',' << r.tests_failed << '\n';
    }
    return out.str();
}

}  // namespace gitseed
