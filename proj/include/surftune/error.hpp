#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace surftune {

struct tuning_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A raw coordinate outside its parameter's [lower, upper] range, or a unit
/// coordinate outside [0, 1].
struct out_of_bounds_error : tuning_error {
    out_of_bounds_error(std::string parameter, const std::string& what)
        : tuning_error(what), parameter(std::move(parameter)) {}
    std::string parameter;
};

/// Raised when an evaluator invocation fails (crash, bad output, timeout).
struct evaluation_failure : tuning_error {
    evaluation_failure(long config_id, std::string instance_id, const std::string& what)
        : tuning_error(what), config_id(config_id), instance_id(std::move(instance_id)) {}
    long config_id;
    std::string instance_id;
};

/// Invalid run configuration or tuner settings, detected before any evaluation.
struct config_error : tuning_error {
    using tuning_error::tuning_error;
};

using warning_handler = std::function<void(const std::string&)>;

inline warning_handler& warning_sink() {
    static warning_handler sink = [](const std::string& msg) {
        std::cerr << "warning: " << msg << '\n';
    };
    return sink;
}

inline void warn(const std::string& msg) {
    if (warning_sink()) warning_sink()(msg);
}

}  // namespace surftune
