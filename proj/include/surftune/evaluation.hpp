#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "surftune/error.hpp"
#include "surftune/parameter_space.hpp"
#include "surftune/random.hpp"
#include "surftune/sampling.hpp"

namespace surftune {

enum class Sense { maximize, minimize };

/// A target-algorithm run. Returns the raw indicator value in its native
/// sense; throws on failure.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual double run(const Configuration& config, const InstanceDescriptor& instance,
                       std::uint64_t seed) const = 0;
};

template <class F>
class FunctionEvaluator final : public Evaluator {
public:
    explicit FunctionEvaluator(F f) : f_(std::move(f)) {}
    double run(const Configuration& c, const InstanceDescriptor& i, std::uint64_t seed) const override {
        return f_(c, i, seed);
    }

private:
    F f_;
};

struct EvaluationPolicy {
    Sense sense = Sense::maximize;
    int runs_per_pair = 1;
    int jobs = 1;
};

struct Observation {
    long config_id = 0;
    std::string instance_id;
    std::uint64_t seed = 0;
    double raw_value = 0.0;  // larger is better
};

/// Raw observations keyed by (configuration, instance), in insertion order.
/// Every derived quantity is recomputed from here.
class PerformanceArchive {
public:
    explicit PerformanceArchive(int runs_per_pair = 1, std::optional<long> budget = std::nullopt)
        : runs_per_pair_(runs_per_pair), budget_(budget) {
        if (runs_per_pair < 1) throw config_error("runs_per_pair must be >= 1");
    }

    void record(Observation obs) {
        if (!std::isfinite(obs.raw_value))
            throw evaluation_failure(obs.config_id, obs.instance_id, "non-finite performance value");
        const auto key = std::make_pair(obs.config_id, obs.instance_id);
        if (static_cast<int>(run_count(obs.config_id, obs.instance_id)) >= runs_per_pair_) {
            std::ostringstream os;
            os << "pair (" << obs.config_id << ", " << obs.instance_id << ") already has " << runs_per_pair_
               << " observations";
            throw tuning_error(os.str());
        }
        if (budget_ && evaluation_count() + 1 > *budget_) throw tuning_error("evaluation budget exceeded");
        auto& runs = pairs_[key];
        if (runs.empty()) {
            by_instance_[obs.instance_id].push_back(obs.config_id);
            by_config_[obs.config_id].push_back(obs.instance_id);
        }
        runs.push_back(observations_.size());
        observations_.push_back(std::move(obs));
    }

    long evaluation_count() const { return static_cast<long>(observations_.size()); }
    int runs_per_pair() const { return runs_per_pair_; }
    std::optional<long> budget() const { return budget_; }
    const std::vector<Observation>& observations() const { return observations_; }

    bool has_pair(long config_id, const std::string& instance_id) const {
        return pairs_.count({config_id, instance_id}) != 0;
    }
    std::size_t run_count(long config_id, const std::string& instance_id) const {
        auto it = pairs_.find({config_id, instance_id});
        return it == pairs_.end() ? 0 : it->second.size();
    }

    /// Mean of the runs of one pair: the per-pair performance estimate.
    double pair_mean(long config_id, const std::string& instance_id) const {
        const auto& runs = pairs_.at({config_id, instance_id});
        double sum = 0.0;
        for (auto idx : runs) sum += observations_[idx].raw_value;
        return sum / static_cast<double>(runs.size());
    }

    bool has_instance(const std::string& instance_id) const { return by_instance_.count(instance_id) != 0; }
    const std::vector<long>& configs_on(const std::string& instance_id) const {
        return by_instance_.at(instance_id);
    }
    std::vector<std::string> instances_of(long config_id) const {
        auto it = by_config_.find(config_id);
        return it == by_config_.end() ? std::vector<std::string>{} : it->second;
    }
    std::size_t instance_count(long config_id) const {
        auto it = by_config_.find(config_id);
        return it == by_config_.end() ? 0 : it->second.size();
    }
    std::vector<std::string> instances() const {
        std::vector<std::string> out;
        for (const auto& [id, _] : by_instance_) out.push_back(id);
        return out;
    }
    std::size_t pair_count() const { return pairs_.size(); }

private:
    int runs_per_pair_;
    std::optional<long> budget_;
    std::vector<Observation> observations_;
    std::map<std::pair<long, std::string>, std::vector<std::size_t>> pairs_;
    std::map<std::string, std::vector<long>> by_instance_;
    std::map<long, std::vector<std::string>> by_config_;
};

/// Linearly rescales each configuration's per-pair mean on one instance to
/// [0, 1] using the smallest and largest means seen on that instance. A
/// degenerate range maps every value to 0.5.
inline std::map<long, double> normalize_instance_column(const PerformanceArchive& archive,
                                                        const std::string& instance_id) {
    if (!archive.has_instance(instance_id)) throw tuning_error("unknown instance '" + instance_id + "'");
    std::map<long, double> values;
    for (long cid : archive.configs_on(instance_id)) values[cid] = archive.pair_mean(cid, instance_id);
    double lo = values.begin()->second, hi = lo;
    for (const auto& [_, v] : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (auto& [_, v] : values) {
        if (hi > lo)
            v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        else
            v = 0.5;
    }
    return values;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw tuning_error("median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Summary performance of one configuration: median of its normalized
/// per-instance values. Always recomputed from the archive.
inline double summarize(const PerformanceArchive& archive, long config_id) {
    const auto insts = archive.instances_of(config_id);
    if (insts.empty()) {
        std::ostringstream os;
        os << "configuration " << config_id << " has no observations";
        throw tuning_error(os.str());
    }
    std::vector<double> xs;
    xs.reserve(insts.size());
    for (const auto& inst : insts) xs.push_back(normalize_instance_column(archive, inst).at(config_id));
    return median(std::move(xs));
}

/// summarize() for every configuration in the archive, normalizing each
/// instance column once.
inline std::map<long, double> summarize_all(const PerformanceArchive& archive) {
    std::map<long, std::vector<double>> per_config;
    for (const auto& inst : archive.instances())
        for (const auto& [cid, v] : normalize_instance_column(archive, inst)) per_config[cid].push_back(v);
    std::map<long, double> out;
    for (auto& [cid, xs] : per_config) out[cid] = median(std::move(xs));
    return out;
}

inline std::uint64_t retry_seed(std::uint64_t seed) { return splitmix64(seed ^ 0xd1b54a32d192ed03ULL); }

/// Runs one evaluation and records it. Minimization indicators are stored
/// negated. On failure nothing is recorded and evaluation_failure is thrown.
inline double evaluate(const Configuration& config, const InstanceDescriptor& instance, std::uint64_t seed,
                       const Evaluator& evaluator, Sense sense, PerformanceArchive& archive) {
    double v;
    try {
        v = evaluator.run(config, instance, seed);
    } catch (const evaluation_failure&) {
        throw;
    } catch (const std::exception& e) {
        throw evaluation_failure(config.id, instance.id, e.what());
    }
    if (!std::isfinite(v)) throw evaluation_failure(config.id, instance.id, "non-finite performance value");
    if (sense == Sense::minimize) v = -v;
    archive.record({config.id, instance.id, seed, v});
    return v;
}

struct EvalTask {
    const Configuration* config;
    const InstanceDescriptor* instance;
    std::uint64_t seed;
};

/// Executes a batch, possibly concurrently, retrying each failed task once
/// with a derived seed. Successful results are recorded in task order, so the
/// archive never depends on completion order. A second failure is rethrown
/// (first failing task wins) after all successes are recorded.
inline void run_batch(const std::vector<EvalTask>& tasks, const Evaluator& evaluator,
                      const EvaluationPolicy& policy, PerformanceArchive& archive) {
    struct Outcome {
        std::optional<double> value;
        std::uint64_t seed = 0;
        std::string error;
    };
    std::vector<Outcome> outcomes(tasks.size());

    auto attempt = [&](std::size_t i) {
        const auto& t = tasks[i];
        std::uint64_t seed = t.seed;
        for (int tries = 0; tries < 2; ++tries) {
            try {
                double v = evaluator.run(*t.config, *t.instance, seed);
                if (!std::isfinite(v)) throw tuning_error("non-finite performance value");
                outcomes[i].value = v;
                outcomes[i].seed = seed;
                return;
            } catch (const std::exception& e) {
                outcomes[i].error = e.what();
                seed = retry_seed(seed);
            }
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min<std::size_t>(policy.jobs, tasks.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) attempt(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < tasks.size(); i = next++) attempt(i);
            });
        for (auto& w : workers) w.join();
    }

    std::optional<std::size_t> first_failure;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!outcomes[i].value) {
            if (!first_failure) first_failure = i;
            continue;
        }
        double v = *outcomes[i].value;
        if (policy.sense == Sense::minimize) v = -v;
        archive.record({tasks[i].config->id, tasks[i].instance->id, outcomes[i].seed, v});
    }
    if (first_failure) {
        const auto& t = tasks[*first_failure];
        std::ostringstream os;
        os << "evaluation of configuration " << t.config->id << " on instance '" << t.instance->id
           << "' failed twice: " << outcomes[*first_failure].error;
        throw evaluation_failure(t.config->id, t.instance->id, os.str());
    }
}

}  // namespace surftune
