#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "surftune/error.hpp"
#include "surftune/evaluation.hpp"
#include "surftune/parameter_space.hpp"

namespace surftune {

/// The single stdin line sent to an external evaluator:
/// {"params": {<name>: <raw value>, ...}, "instance": "<payload>", "seed": <integer>}
inline std::string evaluator_request_line(const ParameterSpace& space, const Configuration& config,
                                          const InstanceDescriptor& instance, std::uint64_t seed) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (std::size_t l = 0; l < space.dimension(); ++l) params[space[l].name] = config.raw[l];
    nlohmann::ordered_json req;
    req["params"] = std::move(params);
    req["instance"] = instance.payload.empty() ? instance.id : instance.payload;
    req["seed"] = seed;
    return req.dump() + "\n";
}

/// Parses evaluator stdout: exactly one decimal number, optional surrounding
/// whitespace. Anything else is rejected.
inline double parse_evaluator_output(const std::string& out) {
    static const std::regex number(R"(^\s*[+-]?((\d+\.?\d*)|(\.\d+))([eE][+-]?\d+)?\s*$)");
    if (!std::regex_match(out, number)) {
        std::string shown = out.substr(0, 80);
        throw tuning_error("evaluator output is not a single number: '" + shown + "'");
    }
    return std::strtod(out.c_str(), nullptr);
}

struct ProcessResult {
    int exit_status = -1;  // -1 when killed by a signal
    bool timed_out = false;
    std::string stdout_text;
};

/// Runs argv[0] with the given stdin text, capturing stdout. The child is
/// killed once the wall-clock timeout elapses.
inline ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                                 double timeout_seconds) {
    if (argv.empty()) throw tuning_error("empty evaluator command");
    int in_pipe[2], out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0) throw tuning_error("pipe failed");
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
        close(in_pipe[0]);
        close(in_pipe[1]);
        throw tuning_error("pipe failed");
    }

    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const pid_t pid = fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
        throw tuning_error("fork failed");
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        execvp(cargv[0], cargv.data());
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);

    // ignore EPIPE if the child exits without reading
    std::size_t written = 0;
    while (written < input.size()) {
        const ssize_t w = write(in_pipe[1], input.data() + written, input.size() - written);
        if (w < 0) {
            if (errno == EINTR) continue;
            break;
        }
        written += static_cast<std::size_t>(w);
    }
    close(in_pipe[1]);

    ProcessResult res;
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
    char buf[4096];
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                              deadline - std::chrono::steady_clock::now())
                              .count();
        if (left <= 0) {
            res.timed_out = true;
            break;
        }
        pollfd pfd{out_pipe[0], POLLIN, 0};
        const int pr = poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 1000)));
        if (pr < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (pr == 0) continue;
        const ssize_t r = read(out_pipe[0], buf, sizeof buf);
        if (r < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (r == 0) break;
        res.stdout_text.append(buf, static_cast<std::size_t>(r));
    }
    close(out_pipe[0]);

    if (res.timed_out) {
        kill(-pid, SIGKILL);
        kill(pid, SIGKILL);
    }
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFEXITED(status)) res.exit_status = WEXITSTATUS(status);
    return res;
}

/// Evaluator backed by an external command speaking the one-line JSON
/// protocol. A single-element command is run through /bin/sh -c.
class CommandEvaluator final : public Evaluator {
public:
    CommandEvaluator(ParameterSpace space, std::vector<std::string> command, double timeout_seconds = 3600.0)
        : space_(std::move(space)), timeout_(timeout_seconds) {
        if (command.empty()) throw config_error("evaluator command must not be empty");
        if (command.size() == 1)
            argv_ = {"/bin/sh", "-c", command.front()};
        else
            argv_ = std::move(command);
        signal(SIGPIPE, SIG_IGN);
    }

    double run(const Configuration& config, const InstanceDescriptor& instance,
               std::uint64_t seed) const override {
        const auto res = run_process(argv_, evaluator_request_line(space_, config, instance, seed), timeout_);
        if (res.timed_out)
            throw evaluation_failure(config.id, instance.id, "evaluator timed out");
        if (res.exit_status != 0)
            throw evaluation_failure(config.id, instance.id,
                                     "evaluator exited with status " + std::to_string(res.exit_status));
        try {
            return parse_evaluator_output(res.stdout_text);
        } catch (const tuning_error& e) {
            throw evaluation_failure(config.id, instance.id, e.what());
        }
    }

private:
    ParameterSpace space_;
    std::vector<std::string> argv_;
    double timeout_;
};

}  // namespace surftune
