#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "surftune/error.hpp"
#include "surftune/evaluation.hpp"
#include "surftune/parameter_space.hpp"
#include "surftune/sampling.hpp"
#include "surftune/subprocess.hpp"
#include "surftune/testbeds.hpp"
#include "surftune/tuner.hpp"

namespace surftune {

enum class EvaluatorKind { builtin, command };

struct EvaluatorConfig {
    EvaluatorKind kind = EvaluatorKind::builtin;
    Testbed testbed = Testbed::sphere;
    double noise_sd = 0.0;
    std::vector<std::string> command;
    Sense sense = Sense::maximize;
    double timeout_s = 3600.0;
    int runs_per_pair = 1;
};

enum class RunMode { smbo, random_search };

struct RunConfig {
    std::vector<ParameterSpec> parameters;
    std::vector<InstanceDescriptor> instances;
    EvaluatorConfig evaluator;
    TunerSettings tuner;
    RunMode mode = RunMode::smbo;
    std::string output_dir = "tuner-out";

    ParameterSpace space() const { return ParameterSpace(parameters); }
};

inline std::unique_ptr<Evaluator> make_evaluator(const RunConfig& cfg) {
    if (cfg.evaluator.kind == EvaluatorKind::builtin)
        return std::make_unique<SyntheticEvaluator>(cfg.evaluator.testbed, cfg.evaluator.noise_sd);
    return std::make_unique<CommandEvaluator>(cfg.space(), cfg.evaluator.command, cfg.evaluator.timeout_s);
}

inline EvaluationPolicy make_policy(const RunConfig& cfg, int jobs = 1) {
    return {cfg.evaluator.sense, cfg.evaluator.runs_per_pair, jobs};
}

namespace detail {

/// Collects "path: message" entries while walking the document.
class ConfigReader {
public:
    std::vector<std::string> errors;

    void error(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    void check_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, _] : obj.items())
            if (!ok.count(key)) error(path.empty() ? key : path + "." + key, "unknown field");
    }

    template <class T>
    std::optional<T> get(const nlohmann::json& obj, const char* key, const std::string& path, bool required) {
        const std::string where = path.empty() ? key : path + "." + key;
        if (!obj.contains(key) || obj.at(key).is_null()) {
            if (required) error(where, "missing required field");
            return std::nullopt;
        }
        const auto& v = obj.at(key);
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) return fail<T>(where, "expected a string");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) return fail<T>(where, "expected a number");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) return fail<T>(where, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && v.get<long long>() < 0) return fail<T>(where, "must be >= 0");
            }
        }
        return v.get<T>();
    }

private:
    template <class T>
    std::optional<T> fail(const std::string& where, const std::string& msg) {
        error(where, msg);
        return std::nullopt;
    }
};

inline bool valid_instance_id(const std::string& id) {
    if (id.empty()) return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':' ||
              c == '/'))
            return false;
    return true;
}

}  // namespace detail

/// Parses and fully validates a run configuration document. Every problem is
/// reported with its field path in a single config_error.
inline RunConfig parse_run_config(const nlohmann::json& doc) {
    detail::ConfigReader rd;
    RunConfig cfg;
    if (!doc.is_object()) throw config_error("run configuration must be a JSON object");
    rd.check_keys(doc, "", {"parameters", "instances", "evaluator", "tuner", "output_dir", "mode"});

    // parameters
    if (!doc.contains("parameters") || !doc["parameters"].is_array() || doc["parameters"].empty()) {
        rd.error("parameters", "expected a non-empty array of {name, lower, upper}");
    } else {
        std::set<std::string> names;
        for (std::size_t i = 0; i < doc["parameters"].size(); ++i) {
            const auto& p = doc["parameters"][i];
            const std::string path = "parameters[" + std::to_string(i) + "]";
            if (!p.is_object()) {
                rd.error(path, "expected an object");
                continue;
            }
            rd.check_keys(p, path, {"name", "lower", "upper"});
            auto name = rd.get<std::string>(p, "name", path, true);
            auto lo = rd.get<double>(p, "lower", path, true);
            auto hi = rd.get<double>(p, "upper", path, true);
            if (name && name->empty()) rd.error(path + ".name", "must not be empty");
            if (name && !names.insert(*name).second) rd.error(path + ".name", "duplicate parameter '" + *name + "'");
            if (lo && hi && !(*lo < *hi)) {
                std::ostringstream os;
                os << "parameter '" << name.value_or("?") << "' needs lower < upper (got lower=" << *lo
                   << ", upper=" << *hi << ")";
                rd.error(path, os.str());
            }
            if (name && lo && hi) cfg.parameters.push_back({*name, *lo, *hi});
        }
    }

    // evaluator
    const auto& ev = doc.contains("evaluator") ? doc["evaluator"] : nlohmann::json();
    if (!ev.is_object()) {
        rd.error("evaluator", "missing required object");
    } else {
        rd.check_keys(ev, "evaluator",
                      {"type", "testbed", "noise_sd", "command", "sense", "timeout_s", "runs_per_pair"});
        const auto type = rd.get<std::string>(ev, "type", "evaluator", true);
        if (type == "builtin") {
            cfg.evaluator.kind = EvaluatorKind::builtin;
            if (auto tb = rd.get<std::string>(ev, "testbed", "evaluator", true)) {
                try {
                    cfg.evaluator.testbed = testbed_from_name(*tb);
                } catch (const config_error&) {
                    rd.error("evaluator.testbed", "unknown testbed '" + *tb + "' (expected sphere or interaction)");
                }
            }
            cfg.evaluator.noise_sd = rd.get<double>(ev, "noise_sd", "evaluator", false).value_or(0.0);
            if (cfg.evaluator.noise_sd < 0.0) rd.error("evaluator.noise_sd", "must be >= 0");
        } else if (type == "command") {
            cfg.evaluator.kind = EvaluatorKind::command;
            if (!ev.contains("command")) {
                rd.error("evaluator.command", "missing required field");
            } else if (ev["command"].is_string()) {
                cfg.evaluator.command = {ev["command"].get<std::string>()};
            } else if (ev["command"].is_array() && !ev["command"].empty() &&
                       std::all_of(ev["command"].begin(), ev["command"].end(),
                                   [](const auto& a) { return a.is_string(); })) {
                cfg.evaluator.command = ev["command"].get<std::vector<std::string>>();
            } else {
                rd.error("evaluator.command", "expected a string or a non-empty array of strings");
            }
            if (!cfg.evaluator.command.empty() && cfg.evaluator.command.front().empty())
                rd.error("evaluator.command", "must not be empty");
        } else if (type) {
            rd.error("evaluator.type", "expected 'builtin' or 'command', got '" + *type + "'");
        }
        if (auto sense = rd.get<std::string>(ev, "sense", "evaluator", false)) {
            if (*sense == "maximize")
                cfg.evaluator.sense = Sense::maximize;
            else if (*sense == "minimize")
                cfg.evaluator.sense = Sense::minimize;
            else
                rd.error("evaluator.sense", "expected 'maximize' or 'minimize'");
        }
        cfg.evaluator.timeout_s = rd.get<double>(ev, "timeout_s", "evaluator", false).value_or(3600.0);
        if (!(cfg.evaluator.timeout_s > 0.0)) rd.error("evaluator.timeout_s", "must be > 0");
        cfg.evaluator.runs_per_pair = rd.get<int>(ev, "runs_per_pair", "evaluator", false).value_or(1);
        if (cfg.evaluator.runs_per_pair < 1) rd.error("evaluator.runs_per_pair", "must be >= 1");
    }

    // instances
    if (!doc.contains("instances") || !doc["instances"].is_array() || doc["instances"].empty()) {
        rd.error("instances", "expected a non-empty array of {id, payload}");
    } else {
        std::set<std::string> ids;
        for (std::size_t i = 0; i < doc["instances"].size(); ++i) {
            const auto& inst = doc["instances"][i];
            const std::string path = "instances[" + std::to_string(i) + "]";
            if (!inst.is_object()) {
                rd.error(path, "expected an object");
                continue;
            }
            rd.check_keys(inst, path, {"id", "payload"});
            auto id = rd.get<std::string>(inst, "id", path, true);
            auto payload = rd.get<std::string>(inst, "payload", path, false).value_or("");
            if (!id) continue;
            if (!detail::valid_instance_id(*id))
                rd.error(path + ".id", "'" + *id + "' must be non-empty and use only [A-Za-z0-9_.:/-]");
            if (!ids.insert(*id).second) rd.error(path + ".id", "duplicate instance id '" + *id + "'");
            if (cfg.evaluator.kind == EvaluatorKind::builtin && cfg.evaluator.testbed == Testbed::sphere &&
                !cfg.parameters.empty()) {
                try {
                    const auto c = parse_center(payload);
                    if (c.size() != cfg.parameters.size())
                        rd.error(path + ".payload", "sphere center needs " + std::to_string(cfg.parameters.size()) +
                                                        " coordinates");
                } catch (const tuning_error& e) {
                    rd.error(path + ".payload", e.what());
                }
            }
            cfg.instances.push_back({*id, payload});
        }
    }
    if (cfg.evaluator.kind == EvaluatorKind::builtin && cfg.evaluator.testbed == Testbed::interaction &&
        !cfg.parameters.empty() && cfg.parameters.size() < 3)
        rd.error("parameters", "the interaction testbed needs at least 3 parameters");

    // tuner
    auto& t = cfg.tuner;
    if (doc.contains("tuner")) {
        const auto& tj = doc["tuner"];
        if (!tj.is_object()) {
            rd.error("tuner", "expected an object");
        } else {
            rd.check_keys(tj, "tuner",
                          {"m0", "m_star", "n0", "n_star", "elite_size", "budget", "basis_order", "penalty",
                           "cv_folds", "seed", "max_iterations"});
            t.m0 = rd.get<std::size_t>(tj, "m0", "tuner", false).value_or(t.m0);
            t.m_star = rd.get<std::size_t>(tj, "m_star", "tuner", false).value_or(t.m_star);
            t.n0 = rd.get<std::size_t>(tj, "n0", "tuner", false).value_or(t.n0);
            t.n_star = rd.get<std::size_t>(tj, "n_star", "tuner", false).value_or(t.n_star);
            t.elite_size = rd.get<std::size_t>(tj, "elite_size", "tuner", false).value_or(t.elite_size);
            t.budget = rd.get<long>(tj, "budget", "tuner", false).value_or(t.budget);
            t.basis_order = rd.get<int>(tj, "basis_order", "tuner", false).value_or(t.basis_order);
            t.cv_folds = rd.get<int>(tj, "cv_folds", "tuner", false).value_or(t.cv_folds);
            t.seed = rd.get<std::uint64_t>(tj, "seed", "tuner", false).value_or(t.seed);
            if (auto mi = rd.get<int>(tj, "max_iterations", "tuner", false)) t.max_iterations = *mi;
            if (auto pen = rd.get<std::string>(tj, "penalty", "tuner", false)) {
                if (*pen == "lasso")
                    t.penalty = Penalty::lasso;
                else if (*pen == "ridge")
                    t.penalty = Penalty::ridge;
                else
                    rd.error("tuner.penalty", "expected 'lasso' or 'ridge'");
            }
        }
    }

    if (auto out = rd.get<std::string>(doc, "output_dir", "", false)) cfg.output_dir = *out;
    if (auto mode = rd.get<std::string>(doc, "mode", "", false)) {
        if (*mode == "smbo")
            cfg.mode = RunMode::smbo;
        else if (*mode == "random-search")
            cfg.mode = RunMode::random_search;
        else
            rd.error("mode", "expected 'smbo' or 'random-search'");
    }

    // cross-field checks, only meaningful once the pieces parsed
    if (rd.errors.empty()) {
        const std::size_t k = cfg.parameters.size();
        try {
            validate_settings(t, k, cfg.evaluator.runs_per_pair);
        } catch (const config_error& e) {
            std::string msg = e.what();
            std::stringstream ss(msg);
            std::string line;
            std::getline(ss, line);  // header
            while (std::getline(ss, line)) rd.error("tuner", line.substr(line.find_first_not_of(' ')));
        }
        if (cfg.instances.size() < initial_instance_count(t))
            rd.error("instances", "need at least " + std::to_string(initial_instance_count(t)) +
                                      " instances for initialization, got " + std::to_string(cfg.instances.size()));
    }

    if (!rd.errors.empty()) {
        std::string msg = "invalid run configuration:";
        for (const auto& e : rd.errors) msg += "\n  " + e;
        throw config_error(msg);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open run configuration '" + path.string() + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error("malformed JSON in '" + path.string() + "': " + e.what());
    }
    return parse_run_config(doc);
}

}  // namespace surftune
