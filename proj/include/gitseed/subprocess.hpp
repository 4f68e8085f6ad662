#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gitseed {

struct CmdResult {
    int exit_code = -1;  // -1 when terminated by a signal
    int term_signal = 0;
    std::string out;
    std::string err;

    bool ok() const { return exit_code == 0; }
};

// Runs argv to completion, capturing both streams. No shell, no limits;
// untrusted code goes through the sandbox instead.
CmdResult run_command(const std::vector<std::string>& argv,
                      const std::optional<std::filesystem::path>& cwd = std::nullopt,
                      const std::vector<std::pair<std::string, std::string>>& extra_env = {},
                      const std::string& stdin_data = {});

}  // namespace gitseed
