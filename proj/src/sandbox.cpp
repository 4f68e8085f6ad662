#include "gitseed/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace gitseed {
namespace {

struct StreamCapture {
    std::string data;
    std::uint64_t total = 0;
    bool truncated = false;
};

// Reads fd until EOF, keeping at most `cap` bytes. Sets *flood_kill and
// SIGKILLs the group when one stream exceeds the flood threshold. The
// reap_done flag bounds the loop even if an escaped descendant keeps the
// pipe open.
void drain_stream(int fd, std::uint64_t cap, std::uint64_t flood_threshold, pid_t pgid,
                  std::atomic<bool>* flood_kill, std::atomic<bool>* reap_done,
                  StreamCapture* out) {
    char buf[8192];
    bool saw_reap = false;
    for (;;) {
        struct pollfd pfd{fd, POLLIN, 0};
        int rc = ::poll(&pfd, 1, 100);
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) {
            // after the child is reaped, one empty poll round means the
            // remaining writers are escapees; stop waiting on them
            if (saw_reap) break;
            saw_reap = reap_done->load();
            continue;
        }
        ssize_t n = ::read(fd, buf, sizeof(buf));
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        out->total += static_cast<std::uint64_t>(n);
        if (out->data.size() < cap) {
            size_t keep = std::min<size_t>(static_cast<size_t>(n), cap - out->data.size());
            out->data.append(buf, keep);
            if (keep < static_cast<size_t>(n)) out->truncated = true;
        } else {
            out->truncated = true;
        }
        if (out->total > flood_threshold && !flood_kill->exchange(true)) {
            ::kill(-pgid, SIGKILL);
        }
    }
}

void set_rlimit(int resource, rlim_t soft, rlim_t hard) {
    struct rlimit rl{soft, hard};
    ::setrlimit(resource, &rl);
}

RunOutcome engine_fault(std::string detail) {
    RunOutcome o;
    o.verdict = RunVerdict::SandboxError;
    o.engine_detail = std::move(detail);
    return o;
}

}  // namespace

std::string to_string(RunVerdict v) {
    switch (v) {
        case RunVerdict::OK: return "OK";
        case RunVerdict::TimeLimit: return "TimeLimit";
        case RunVerdict::MemoryLimit: return "MemoryLimit";
        case RunVerdict::RuntimeError: return "RuntimeError";
        case RunVerdict::OutputLimit: return "OutputLimit";
        case RunVerdict::SandboxError: return "SandboxError";
    }
    return "?";
}

RunOutcome sandbox_run(const std::vector<std::string>& command,
                       const std::optional<std::filesystem::path>& stdin_source,
                       const std::filesystem::path& workdir, const ResourceLimits& limits) {
    if (command.empty()) throw std::invalid_argument("sandbox_run: empty command");
    if (limits.cpu_s <= 0 || limits.mem_bytes == 0 || limits.wall_s < limits.cpu_s ||
        limits.max_output_bytes == 0 || limits.max_processes <= 0)
        throw std::invalid_argument("sandbox_run: invalid limits");

    std::error_code ec;
    if (!std::filesystem::is_directory(workdir, ec))
        return engine_fault("workdir missing: " + workdir.string());

    int stdin_fd = -1;
    if (stdin_source) {
        stdin_fd = ::open(stdin_source->c_str(), O_RDONLY | O_CLOEXEC);
        if (stdin_fd < 0)
            return engine_fault("cannot open stdin source: " + stdin_source->string());
    } else {
        stdin_fd = ::open("/dev/null", O_RDONLY | O_CLOEXEC);
        if (stdin_fd < 0) return engine_fault("cannot open /dev/null");
    }

    int out_pipe[2], err_pipe[2];
    if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0) {
        ::close(stdin_fd);
        return engine_fault("pipe failed");
    }

    ::signal(SIGPIPE, SIG_IGN);

    auto started = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0) {
        ::close(stdin_fd);
        for (int* p : {out_pipe, err_pipe}) {
            ::close(p[0]);
            ::close(p[1]);
        }
        return engine_fault("fork failed");
    }

    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(stdin_fd, STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);

        rlim_t cpu_soft = static_cast<rlim_t>(std::ceil(limits.cpu_s));
        set_rlimit(RLIMIT_CPU, cpu_soft, cpu_soft + 1);
        set_rlimit(RLIMIT_AS, limits.mem_bytes, limits.mem_bytes);
        set_rlimit(RLIMIT_NPROC, static_cast<rlim_t>(limits.max_processes),
                   static_cast<rlim_t>(limits.max_processes));
        set_rlimit(RLIMIT_CORE, 0, 0);

        if (::chdir(workdir.c_str()) != 0) _exit(127);

        std::vector<char*> argv;
        argv.reserve(command.size() + 1);
        for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        ::execvp(argv[0], argv.data());
        _exit(127);
    }

    // both sides race to set the pgid so the kill target exists immediately
    ::setpgid(pid, pid);
    ::close(stdin_fd);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);

    std::atomic<bool> flood_kill{false};
    std::atomic<bool> reap_done{false};
    std::atomic<bool> wall_expired{false};
    StreamCapture cap_out, cap_err;
    std::uint64_t flood_threshold = limits.max_output_bytes * kFloodKillFactor;

    std::thread out_reader(drain_stream, out_pipe[0], limits.max_output_bytes, flood_threshold,
                           pid, &flood_kill, &reap_done, &cap_out);
    std::thread err_reader(drain_stream, err_pipe[0], limits.max_output_bytes, flood_threshold,
                           pid, &flood_kill, &reap_done, &cap_err);

    std::mutex wd_mutex;
    std::condition_variable wd_cv;
    bool run_finished = false;
    std::thread watchdog([&] {
        std::unique_lock<std::mutex> lk(wd_mutex);
        auto deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(limits.wall_s));
        if (!wd_cv.wait_until(lk, deadline, [&] { return run_finished; })) {
            wall_expired.store(true);
            ::kill(-pid, SIGKILL);
        }
    });

    int status = 0;
    struct rusage ru{};
    while (::wait4(pid, &status, 0, &ru) < 0 && errno == EINTR) {
    }
    double wall_used =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    {
        std::lock_guard<std::mutex> lk(wd_mutex);
        run_finished = true;
    }
    wd_cv.notify_all();
    watchdog.join();

    // sweep stragglers left in the group, then wait for the group to vanish
    ::kill(-pid, SIGKILL);
    for (int i = 0; i < 50; ++i) {
        if (::kill(-pid, 0) < 0 && errno == ESRCH) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }

    reap_done.store(true);
    out_reader.join();
    err_reader.join();
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);

    RunOutcome o;
    o.child_pgid = pid;
    o.cpu_used_s = static_cast<double>(ru.ru_utime.tv_sec + ru.ru_stime.tv_sec) +
                   static_cast<double>(ru.ru_utime.tv_usec + ru.ru_stime.tv_usec) / 1e6;
    o.wall_used_s = wall_used;
    o.stdout_data = std::move(cap_out.data);
    o.stderr_data = std::move(cap_err.data);
    o.stdout_truncated = cap_out.truncated;
    o.stderr_truncated = cap_err.truncated;

    bool mem_hit = static_cast<std::uint64_t>(ru.ru_maxrss) * 1024 >= limits.mem_bytes;

    if (flood_kill.load()) {
        o.verdict = RunVerdict::OutputLimit;
    } else if (wall_expired.load()) {
        o.verdict = RunVerdict::TimeLimit;
    } else if (WIFSIGNALED(status)) {
        int sig = WTERMSIG(status);
        o.term_signal = sig;
        if (sig == SIGXCPU) {
            o.verdict = RunVerdict::TimeLimit;
            // the kernel's accounting crossed the limit even if rusage rounds short
            if (o.cpu_used_s < limits.cpu_s) o.cpu_used_s = limits.cpu_s;
        } else if (sig == SIGKILL && o.cpu_used_s >= limits.cpu_s) {
            // hard RLIMIT_CPU kill
            o.verdict = RunVerdict::TimeLimit;
        } else if (mem_hit) {
            o.verdict = RunVerdict::MemoryLimit;
        } else {
            o.verdict = RunVerdict::RuntimeError;
        }
    } else if (WIFEXITED(status)) {
        int code = WEXITSTATUS(status);
        o.exit_code = code;
        if (code == 0) {
            o.verdict = RunVerdict::OK;
        } else if (mem_hit) {
            o.verdict = RunVerdict::MemoryLimit;
        } else {
            o.verdict = RunVerdict::RuntimeError;
        }
    } else {
        o.verdict = RunVerdict::SandboxError;
        o.engine_detail = "unexpected wait status";
    }
    return o;
}

}  // namespace gitseed
