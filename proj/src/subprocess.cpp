#include "gitseed/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

extern char** environ;

namespace gitseed {
namespace {

void set_nonblock(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

}  // namespace

CmdResult run_command(const std::vector<std::string>& argv,
                      const std::optional<std::filesystem::path>& cwd,
                      const std::vector<std::pair<std::string, std::string>>& extra_env,
                      const std::string& stdin_data) {
    if (argv.empty()) throw std::invalid_argument("run_command: empty argv");

    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
        throw std::runtime_error("run_command: pipe failed");

    pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("run_command: fork failed");

    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        for (int* p : {in_pipe, out_pipe, err_pipe}) {
            ::close(p[0]);
            ::close(p[1]);
        }
        if (cwd && ::chdir(cwd->c_str()) != 0) _exit(127);
        for (const auto& [k, v] : extra_env) ::setenv(k.c_str(), v.c_str(), 1);

        std::vector<char*> cargv;
        cargv.reserve(argv.size() + 1);
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        ::execvp(cargv[0], cargv.data());
        _exit(127);
    }

    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);

    int in_fd = in_pipe[1], out_fd = out_pipe[0], err_fd = err_pipe[0];
    set_nonblock(in_fd);
    set_nonblock(out_fd);
    set_nonblock(err_fd);
    ::signal(SIGPIPE, SIG_IGN);

    CmdResult res;
    size_t in_off = 0;
    if (stdin_data.empty()) {
        ::close(in_fd);
        in_fd = -1;
    }

    while (out_fd >= 0 || err_fd >= 0 || in_fd >= 0) {
        struct pollfd fds[3];
        int nfds = 0;
        int out_ix = -1, err_ix = -1, in_ix = -1;
        if (out_fd >= 0) {
            out_ix = nfds;
            fds[nfds++] = {out_fd, POLLIN, 0};
        }
        if (err_fd >= 0) {
            err_ix = nfds;
            fds[nfds++] = {err_fd, POLLIN, 0};
        }
        if (in_fd >= 0) {
            in_ix = nfds;
            fds[nfds++] = {in_fd, POLLOUT, 0};
        }
        int rc = ::poll(fds, static_cast<nfds_t>(nfds), -1);
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }

        char buf[8192];
        auto read_into = [&](int& fd, std::string& sink) {
            for (;;) {
                ssize_t n = ::read(fd, buf, sizeof(buf));
                if (n > 0) {
                    sink.append(buf, static_cast<size_t>(n));
                    continue;
                }
                if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return;
                if (n < 0 && errno == EINTR) continue;
                ::close(fd);
                fd = -1;
                return;
            }
        };

        if (out_ix >= 0 && (fds[out_ix].revents & (POLLIN | POLLHUP | POLLERR)))
            read_into(out_fd, res.out);
        if (err_ix >= 0 && (fds[err_ix].revents & (POLLIN | POLLHUP | POLLERR)))
            read_into(err_fd, res.err);
        if (in_ix >= 0 && (fds[in_ix].revents & (POLLOUT | POLLHUP | POLLERR))) {
            ssize_t n = ::write(in_fd, stdin_data.data() + in_off, stdin_data.size() - in_off);
            if (n > 0) in_off += static_cast<size_t>(n);
            if ((n < 0 && errno != EAGAIN && errno != EINTR) || in_off == stdin_data.size()) {
                ::close(in_fd);
                in_fd = -1;
            }
        }
    }

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFEXITED(status)) {
        res.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        res.exit_code = -1;
        res.term_signal = WTERMSIG(status);
    }
    return res;
}

}  // namespace gitseed
