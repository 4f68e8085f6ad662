#pragma once

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gitseed {

struct ResourceLimits {
    double cpu_s = 5.0;
    std::uint64_t mem_bytes = 8ULL << 30;
    double wall_s = 15.0;
    std::uint64_t max_output_bytes = 1ULL << 20;
    int max_processes = 16;
};

enum class RunVerdict { OK, TimeLimit, MemoryLimit, RuntimeError, OutputLimit, SandboxError };

std::string to_string(RunVerdict v);

struct RunOutcome {
    RunVerdict verdict = RunVerdict::SandboxError;
    std::optional<int> exit_code;
    std::optional<int> term_signal;
    double cpu_used_s = 0.0;
    double wall_used_s = 0.0;
    std::string stdout_data;  // capped at max_output_bytes
    std::string stderr_data;
    bool stdout_truncated = false;
    bool stderr_truncated = false;
    pid_t child_pgid = -1;  // process group used for the run (already dead on return)
    std::string engine_detail;  // populated for SandboxError
};

// Runs an untrusted command to completion under CPU, address-space, wall,
// output and process limits. The child runs in its own process group which
// is SIGKILLed before return; exec failure inside the child surfaces as
// RuntimeError with exit code 127. SandboxError is reserved for engine
// faults (missing workdir, fork failure), never for child misbehavior.
//
// A program that overflows max_output_bytes but exits normally is OK with
// the truncated flag set; OutputLimit means the run was killed because the
// flood passed kFloodKillFactor * max_output_bytes on one stream.
RunOutcome sandbox_run(const std::vector<std::string>& command,
                       const std::optional<std::filesystem::path>& stdin_source,
                       const std::filesystem::path& workdir, const ResourceLimits& limits);

inline constexpr std::uint64_t kFloodKillFactor = 16;
inline constexpr double kWallGraceS = 2.0;

}  // namespace gitseed
