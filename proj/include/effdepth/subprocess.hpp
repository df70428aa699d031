#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>

#include "effdepth/errors.hpp"
#include "effdepth/fsutil.hpp"

namespace effdepth {

struct CommandResult {
    int exit_code = -1;
    bool timed_out = false;
    /// Combined stdout+stderr, truncated for diagnostics.
    std::string output;
};

namespace detail {

inline constexpr std::size_t kCaptureCap = 8192;

} // namespace detail

/// Run `command` under /bin/sh -c with a wall-clock timeout. The child gets
/// its own process group so a timeout kills the whole tree, not just the
/// shell. Combined output is captured through `capture_file` (caller-owned
/// scratch path) and returned truncated.
inline CommandResult run_command(const std::string& command,
                                 double timeout_secs,
                                 const std::filesystem::path& capture_file) {
    const pid_t pid = fork();
    if (pid < 0) {
        throw BackendError("failed to spawn '" + command + "': fork failed");
    }
    if (pid == 0) {
        setpgid(0, 0);
        const int fd = open(capture_file.c_str(),
                            O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            dup2(fd, 1);
            dup2(fd, 2);
            if (fd > 2) close(fd);
        }
        execl("/bin/sh", "sh", "-c", command.c_str(),
              static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid); // may lose the race with the child; both sides set it
    CommandResult result;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_secs);
    int status = 0;
    for (;;) {
        const pid_t done = waitpid(pid, &status, WNOHANG);
        if (done == pid) break;
        if (done < 0) {
            throw BackendError("waitpid failed for '" + command + "'");
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            result.timed_out = true;
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    std::error_code ec;
    if (std::filesystem::exists(capture_file, ec)) {
        try {
            result.output = read_file(capture_file);
        } catch (const Error&) {
            // diagnostics only; a lost capture never fails the run
        }
        if (result.output.size() > detail::kCaptureCap) {
            result.output.resize(detail::kCaptureCap);
            result.output += "\n...[truncated]";
        }
    }
    return result;
}

/// Backend timeout: EFFDEPTH_BACKEND_TIMEOUT_SECS env override, default 120.
inline double backend_timeout_secs() {
    const char* env = std::getenv("EFFDEPTH_BACKEND_TIMEOUT_SECS");
    if (!env || !*env) return 120.0;
    char* end = nullptr;
    const double v = std::strtod(env, &end);
    if (end == env || *end != '\0' || !(v > 0.0)) {
        throw InvalidParameterError(
            "EFFDEPTH_BACKEND_TIMEOUT_SECS must be a positive number, got '" +
            std::string(env) + "'");
    }
    return v;
}

} // namespace effdepth
