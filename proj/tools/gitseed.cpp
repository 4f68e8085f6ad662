#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>

#include "gitseed/commit_db.hpp"
#include "gitseed/config.hpp"
#include "gitseed/engine.hpp"
#include "gitseed/errors.hpp"
#include "gitseed/evaluator.hpp"
#include "gitseed/log.hpp"
#include "gitseed/provisioner.hpp"

namespace {

using namespace gitseed;

// exit codes: 0 success, 1 validation/config error, 2 partial failure,
// 3 infrastructure error
constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartialFailure = 2;
constexpr int kInfraError = 3;

std::atomic<Engine*> g_engine{nullptr};

void handle_signal(int) {
    if (auto* engine = g_engine.load()) engine->request_stop();
}

struct Loaded {
    CourseConfig config;
    Roster roster;
    std::string token;
};

Loaded load_all(const std::string& config_path) {
    Loaded l;
    l.config = load_config(config_path);
    l.roster = load_roster(l.config.roster_path);
    l.token = resolve_token(l.config);
    return l;
}

int cmd_init(const std::string& config_path) {
    Loaded l = load_all(config_path);
    GitLabClient client(l.config.server_base_url, l.token);
    Provisioner provisioner(client, l.config, l.token);
    ProvisionReport report;
    provisioner.provision_course(l.roster, &report);
    if (!report.changed()) {
        std::cout << "no changes\n";
    } else {
        for (const auto& line : report.lines) std::cout << line << "\n";
        std::cout << report.created << " created, " << report.repaired << " repaired\n";
    }
    return kOk;
}

int cmd_publish(const std::string& config_path, const std::string& assessment_id,
                const std::string& materials_dir) {
    Loaded l = load_all(config_path);
    const AssessmentConfig* assessment = l.config.find_assessment(assessment_id);
    if (!assessment) {
        std::cerr << "unknown assessment: " << assessment_id << "\n";
        return kConfigError;
    }
    GitLabClient client(l.config.server_base_url, l.token);
    Provisioner provisioner(client, l.config, l.token);
    CourseTopology topology = provisioner.resolve_topology(l.roster);
    auto failures = provisioner.publish_assessment(topology, *assessment, materials_dir);
    if (failures.empty()) {
        std::cout << "published " << assessment_id << " to all repos\n";
        return kOk;
    }
    std::cerr << "failed repos:\n";
    for (const auto& repo : failures) std::cerr << "  " << repo << "\n";
    return kPartialFailure;
}

int cmd_lock(const std::string& config_path, const std::string& assessment_id) {
    Loaded l = load_all(config_path);
    GitLabClient client(l.config.server_base_url, l.token);
    Provisioner provisioner(client, l.config, l.token);
    CourseTopology topology = provisioner.resolve_topology(l.roster);
    auto result = provisioner.lock_assessment(topology, assessment_id);
    std::cout << result.demotions << " demotions\n";
    if (!result.errors.empty()) {
        for (const auto& e : result.errors) std::cerr << e << "\n";
        return kPartialFailure;
    }
    return kOk;
}

int cmd_serve(const std::string& config_path, int workers) {
    Loaded l = load_all(config_path);
    Engine::Options options;
    options.workers = workers;
    Engine engine(l.config, l.roster, l.token, options);
    g_engine.store(&engine);
    struct sigaction sa{};
    sa.sa_handler = handle_signal;
    sigaction(SIGTERM, &sa, nullptr);
    sigaction(SIGINT, &sa, nullptr);
    engine.run();
    g_engine.store(nullptr);
    return kOk;
}

int cmd_reevaluate(const std::string& config_path, const std::string& assessment_id) {
    Loaded l = load_all(config_path);
    const AssessmentConfig* assessment = l.config.find_assessment(assessment_id);
    if (!assessment) {
        std::cerr << "unknown assessment: " << assessment_id << "\n";
        return kConfigError;
    }
    GitLabClient client(l.config.server_base_url, l.token);
    CommitDb db(l.config.state_db_path);
    Evaluator evaluator(l.config, l.roster, client, db, l.token);
    PathScheme scheme{l.config.course_id};

    int evaluated = 0, failed = 0;
    for (const auto& group : l.roster.entries) {
        std::int64_t now = system_clock()();
        SubmissionEvent event;
        event.assessment_id = assessment_id;
        event.group_id = group.group_id;
        event.repo_path = scheme.submission_project(assessment_id, group.group_id);
        event.pusher = "(reevaluate)";
        event.pushed_at = now;
        event.commit = std::string(40, '0');

        try {
            auto ref = client.find_project(event.repo_path);
            if (!ref) throw Error("project " + event.repo_path + " not found");
            WorkTree tree = clone_or_update(
                authenticated_url(ref->clone_url, l.token),
                l.config.work_dir / "sub" / (assessment_id + "__" + group.group_id));
            if (!tree.current_commit) throw Error("repository is empty");
            event.commit = *tree.current_commit;
        } catch (const std::exception& e) {
            // record the failure and keep going with the other groups
            log_event(LogLevel::Error, "reevaluate_failed",
                      {{"group", group.group_id}, {"error", e.what()}});
            SubmissionRecord rec;
            rec.assessment_id = assessment_id;
            rec.group_id = group.group_id;
            rec.commit = event.commit;
            rec.pushed_at = now;
            rec.received_at = now;
            rec.status = SubmissionStatus::Failed;
            try {
                db.record(rec);
            } catch (const std::exception&) {
            }
            ++failed;
            continue;
        }

        Evaluator::Flags flags;
        flags.bypass_cooldown = true;   // the final pass covers cooldown-skipped pushes
        flags.update_dashboard = false; // rebuilt once below
        EvalOutcome outcome = evaluator.evaluate(event, flags);
        if (outcome.status == SubmissionStatus::Evaluated)
            ++evaluated;
        else
            ++failed;
    }
    evaluator.rebuild_dashboard(assessment_id);
    std::cout << evaluated << " evaluated, " << failed << " failed\n";
    return failed == 0 ? kOk : kPartialFailure;
}

int cmd_dump(const std::string& config_path) {
    CourseConfig config = load_config(config_path);
    CommitDb db(config.state_db_path);
    std::cout << db.dump_csv();
    return kOk;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"gitseed: git-backed automated assessment engine"};
    app.require_subcommand(1);

    std::string config_path, assessment_id, materials_dir;
    int workers = 2;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "course config file")->required();
    };

    auto* init = app.add_subcommand("init", "provision the course topology");
    add_config(init);
    auto* publish = app.add_subcommand("publish", "push assessment materials to all groups");
    add_config(publish);
    publish->add_option("--assessment", assessment_id, "assessment id")->required();
    publish->add_option("--materials", materials_dir, "materials directory")->required();
    auto* lock = app.add_subcommand("lock", "demote all submission-repo members to Reporter");
    add_config(lock);
    lock->add_option("--assessment", assessment_id, "assessment id")->required();
    auto* serve = app.add_subcommand("serve", "watch the drop dir and evaluate submissions");
    add_config(serve);
    serve->add_option("--workers", workers, "evaluation workers")->default_val(2);
    auto* reevaluate = app.add_subcommand("reevaluate", "evaluate every group's head once");
    add_config(reevaluate);
    reevaluate->add_option("--assessment", assessment_id, "assessment id")->required();
    auto* dump = app.add_subcommand("dump", "emit the submission history as CSV");
    add_config(dump);

    CLI11_PARSE(app, argc, argv);

    if (init->parsed()) return cmd_init(config_path);
    if (publish->parsed()) return cmd_publish(config_path, assessment_id, materials_dir);
    if (lock->parsed()) return cmd_lock(config_path, assessment_id);
    if (serve->parsed()) return cmd_serve(config_path, workers);
    if (reevaluate->parsed()) return cmd_reevaluate(config_path, assessment_id);
    if (dump->parsed()) return cmd_dump(config_path);
    return kConfigError;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const MissingToken& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInfraError;
    }
}
