#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "surftune/error.hpp"
#include "surftune/evaluation.hpp"
#include "surftune/parameter_space.hpp"
#include "surftune/random.hpp"
#include "surftune/regression.hpp"
#include "surftune/sampling.hpp"
#include "surftune/search.hpp"

namespace surftune {

struct TunerSettings {
    std::size_t m0 = 100;         // initial configurations
    std::size_t m_star = 10;      // new configurations per iteration
    std::size_t n0 = 5;           // initial instance count (n0 - n_star drawn up front)
    std::size_t n_star = 1;       // instances added per iteration
    std::size_t elite_size = 10;
    long budget = 1000;           // evaluator invocations
    int basis_order = 4;
    Penalty penalty = Penalty::lasso;
    int cv_folds = 5;
    std::uint64_t seed = 1;
    std::optional<int> max_iterations;
    SimplexSettings simplex;
    double duplicate_distance = 1e-6;
    double duplicate_jitter = 0.01;
};

/// Instances drawn before the loop: n0 - n_star, but at least one so that
/// every initial configuration has a performance estimate.
inline std::size_t initial_instance_count(const TunerSettings& s) {
    return std::max<std::size_t>(1, s.n0 - std::min(s.n0, s.n_star));
}

inline long minimum_initial_budget(const TunerSettings& s, int runs_per_pair = 1) {
    return static_cast<long>(s.m0 * initial_instance_count(s)) * runs_per_pair;
}

/// Throws config_error listing every violated constraint.
inline void validate_settings(const TunerSettings& s, std::size_t k, int runs_per_pair = 1) {
    std::vector<std::string> errs;
    if (s.m0 < k + 2)
        errs.push_back("m0 (" + std::to_string(s.m0) + ") must be >= k + 2 = " + std::to_string(k + 2));
    if (s.n_star > s.n0) errs.push_back("N_star must be <= N0");
    if (s.elite_size < 1) errs.push_back("elite_size must be >= 1");
    if (s.m_star < 1) errs.push_back("m_star must be >= 1");
    if (s.basis_order < 1) errs.push_back("basis_order must be >= 1");
    if (s.cv_folds < 2) errs.push_back("cv_folds must be >= 2");
    if (s.max_iterations && *s.max_iterations < 0) errs.push_back("max_iterations must be >= 0");
    if (runs_per_pair < 1) errs.push_back("runs_per_pair must be >= 1");
    const long need = minimum_initial_budget(s, std::max(1, runs_per_pair));
    if (s.budget < need)
        errs.push_back("budget (" + std::to_string(s.budget) + ") is below the " + std::to_string(need) +
                       " evaluations needed for initialization");
    try {
        s.simplex.validate();
    } catch (const config_error& e) {
        errs.push_back(e.what());
    }
    if (!errs.empty()) {
        std::string msg = "invalid tuner settings:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw config_error(msg);
    }
}

struct EliteCandidate {
    long id;
    double p;
    std::size_t instances;
};

/// The min(K, n) best candidates by p, ties broken by more instances
/// evaluated and then by lower id.
inline std::vector<long> select_k_best(std::vector<EliteCandidate> cands, std::size_t K) {
    if (K < 1) throw tuning_error("select_k_best needs K >= 1");
    std::sort(cands.begin(), cands.end(), [](const EliteCandidate& a, const EliteCandidate& b) {
        if (a.p != b.p) return a.p > b.p;
        if (a.instances != b.instances) return a.instances > b.instances;
        return a.id < b.id;
    });
    std::vector<long> out;
    for (std::size_t i = 0; i < std::min(K, cands.size()); ++i) out.push_back(cands[i].id);
    return out;
}

struct TunerState {
    int t = 0;
    std::vector<Configuration> configs;
    std::vector<InstanceDescriptor> visited;
    std::vector<long> elites;
    PerformanceArchive archive;
    InstancePool pool;
    long budget = 0;

    long remaining_budget() const { return budget - archive.evaluation_count(); }

    const Configuration& config(long id) const {
        auto it = std::lower_bound(configs.begin(), configs.end(), id,
                                   [](const Configuration& c, long v) { return c.id < v; });
        if (it == configs.end() || it->id != id) throw tuning_error("unknown configuration id");
        return *it;
    }
};

/// Evaluations the next loop iteration will spend: elite top-ups on every
/// visited instance (including the ones about to be drawn) plus m_star new
/// configurations on all of them.
inline long next_iteration_cost(const TunerState& state, const TunerSettings& s) {
    const std::size_t new_instances = std::min(s.n_star, state.pool.unvisited_count());
    const std::size_t visited_after = state.visited.size() + new_instances;
    std::size_t topups = 0;
    for (long e : state.elites) {
        std::size_t covered = 0;
        for (const auto& inst : state.visited) covered += state.archive.has_pair(e, inst.id) ? 1 : 0;
        topups += visited_after - covered;
    }
    return static_cast<long>(topups + s.m_star * visited_after) * state.archive.runs_per_pair();
}

struct StopDecision {
    bool stop = false;
    std::string reason;
};

/// Stops when the next iteration cannot be paid for in full, or when the
/// iteration cap is reached. An exhausted instance pool does not stop the run.
inline StopDecision check_stop(const TunerState& state, const TunerSettings& s) {
    if (s.max_iterations && state.t >= *s.max_iterations) return {true, "max-iterations"};
    const long cost = next_iteration_cost(state, s);
    if (state.remaining_budget() < cost) {
        std::ostringstream os;
        os << "budget (" << state.remaining_budget() << " left, next iteration needs " << cost << ")";
        return {true, os.str()};
    }
    return {false, ""};
}

struct TraceRow {
    int iteration = 0;
    long evaluations_used = 0;
    double best_p = 0.0;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    std::size_t support_size = 0;
    std::vector<long> elite_ids;
    std::size_t design_rows = 0;
    std::size_t instances_visited = 0;
    bool pool_exhausted = false;
};

struct EliteEntry {
    Configuration config;
    double p = 0.0;
    std::size_t instances = 0;
};

struct TunerResult {
    std::vector<EliteEntry> elites;  // descending p
    std::optional<RegressionModel> model;
    std::optional<CvResult> cv;
    std::vector<Configuration> configs;
    std::map<long, double> performance;
    PerformanceArchive archive;
    std::vector<InstanceDescriptor> visited;
    std::vector<TraceRow> trace;
    int iterations = 0;
    std::string stop_reason;
    bool aborted = false;
    std::string abort_message;
    std::uint64_t seed = 0;
    std::string mode = "smbo";
};

/// Called after every completed loop iteration with the state and the
/// current summary performances.
using IterationObserver = std::function<void(const TunerState&, const std::map<long, double>&)>;

namespace detail {

enum stream_id : std::uint64_t { lhs_stream = 1, instance_stream, seed_stream, perturb_stream, jitter_stream };

inline std::vector<EliteCandidate> candidates(const TunerState& st, const std::vector<long>& ids,
                                              const std::map<long, double>& p) {
    std::vector<EliteCandidate> out;
    for (long id : ids) out.push_back({id, p.at(id), st.archive.instance_count(id)});
    return out;
}

inline std::vector<long> all_ids(const TunerState& st) {
    std::vector<long> ids;
    for (const auto& c : st.configs) ids.push_back(c.id);
    return ids;
}

struct FittedSurface {
    RegressionModel model;
    CvResult cv;
    std::size_t rows = 0;
};

/// Regression of p over every archived configuration, one row each.
inline FittedSurface fit_surface(const TunerState& st, const std::map<long, double>& p, const TunerSettings& s) {
    const PolynomialBasis basis(st.configs.front().unit.size(), s.basis_order);
    std::vector<point> pts;
    Eigen::VectorXd y(static_cast<Eigen::Index>(st.configs.size()));
    for (std::size_t i = 0; i < st.configs.size(); ++i) {
        pts.push_back(st.configs[i].unit);
        y(static_cast<Eigen::Index>(i)) = p.at(st.configs[i].id);
    }
    const Eigen::MatrixXd X = design_matrix(basis, pts);
    FittedSurface fs;
    fs.rows = static_cast<std::size_t>(X.rows());
    fs.cv = select_lambda_cv(basis, X, y, s.cv_folds, s.penalty);
    fs.model = fit_model(basis, X, y, fs.cv.lambda, s.penalty);
    loo_standard_errors(X, y, fs.model);
    return fs;
}

inline std::vector<EvalTask> grid_tasks(const TunerState& st, const std::vector<const Configuration*>& configs,
                                        const std::vector<InstanceDescriptor>& instances, rng_type& seeds) {
    std::vector<EvalTask> tasks;
    for (const auto* c : configs)
        for (const auto& inst : instances)
            for (int r = static_cast<int>(st.archive.run_count(c->id, inst.id)); r < st.archive.runs_per_pair(); ++r)
                tasks.push_back({c, &inst, seeds()});
    return tasks;
}

inline void finalize(TunerState& st, TunerResult& res, const TunerSettings& s, bool fit_model_at_end) {
    res.performance = st.archive.evaluation_count() > 0 ? summarize_all(st.archive) : std::map<long, double>{};
    std::vector<long> elites = st.elites;
    if (!res.performance.empty()) {
        std::vector<long> scored;
        for (long e : elites)
            if (res.performance.count(e)) scored.push_back(e);
        if (!scored.empty()) elites = select_k_best(candidates(st, scored, res.performance), scored.size());
        for (long e : elites)
            if (res.performance.count(e))
                res.elites.push_back({st.config(e), res.performance.at(e), st.archive.instance_count(e)});
    }
    if (fit_model_at_end && res.performance.size() == st.configs.size() && st.configs.size() >= 3) {
        auto fs = fit_surface(st, res.performance, s);
        res.model = std::move(fs.model);
        res.cv = std::move(fs.cv);
    }
    res.configs = st.configs;
    res.visited = st.visited;
    res.iterations = st.t;
    res.archive = std::move(st.archive);
}

inline bool is_duplicate(const point& x, const std::vector<Configuration>& configs, const std::vector<point>& fresh,
                         double dist) {
    auto close = [&](const point& y) {
        for (std::size_t l = 0; l < x.size(); ++l)
            if (std::abs(x[l] - y[l]) > dist) return false;
        return true;
    };
    for (const auto& c : configs)
        if (close(c.unit)) return true;
    for (const auto& f : fresh)
        if (close(f)) return true;
    return false;
}

}  // namespace detail

/// Sequential tuning loop: fit a sparse polynomial surface of summary
/// performance over all archived configurations, optimize it and m_star - 1
/// perturbed copies, evaluate the optima on every visited instance, and keep
/// the n_E best configurations current on each new instance.
inline TunerResult run_tuner(const ParameterSpace& space, InstancePool pool, const Evaluator& evaluator,
                             const EvaluationPolicy& policy, const TunerSettings& s,
                             const IterationObserver& observer = {}) {
    const std::size_t k = space.dimension();
    validate_settings(s, k, policy.runs_per_pair);
    if (pool.unvisited_count() < initial_instance_count(s))
        throw config_error("instance pool has " + std::to_string(pool.unvisited_count()) +
                           " instances, initialization needs " + std::to_string(initial_instance_count(s)));

    TunerState st{0, {}, {}, {}, PerformanceArchive(policy.runs_per_pair, s.budget), std::move(pool), s.budget};
    auto lhs_rng = derive_stream(s.seed, detail::lhs_stream);
    auto inst_rng = derive_stream(s.seed, detail::instance_stream);
    auto seed_rng = derive_stream(s.seed, detail::seed_stream);
    auto perturb_rng = derive_stream(s.seed, detail::perturb_stream);
    auto jitter_rng = derive_stream(s.seed, detail::jitter_stream);

    TunerResult res;
    res.seed = s.seed;
    long next_id = 0;
    std::map<long, double> p;

    try {
        for (const auto& u : lhs_sample(k, s.m0, lhs_rng))
            st.configs.push_back(make_configuration(next_id++, u, space, Origin::initial_sample, 0));
        st.visited = sample_instances(st.pool, initial_instance_count(s), inst_rng).instances;
        {
            std::vector<const Configuration*> all;
            for (const auto& c : st.configs) all.push_back(&c);
            run_batch(detail::grid_tasks(st, all, st.visited, seed_rng), evaluator, policy, st.archive);
        }
        st.elites = detail::all_ids(st);
        p = summarize_all(st.archive);
        {
            TraceRow row;
            row.iteration = 0;
            row.evaluations_used = st.archive.evaluation_count();
            row.elite_ids = select_k_best(detail::candidates(st, st.elites, p), st.elites.size());
            row.best_p = p.at(row.elite_ids.front());
            row.instances_visited = st.visited.size();
            res.trace.push_back(row);
        }

        for (;;) {
            const auto decision = check_stop(st, s);
            if (decision.stop) {
                res.stop_reason = decision.reason;
                break;
            }
            ++st.t;
            TraceRow row;
            row.iteration = st.t;

            // new instances; elites are brought up to date on every visited instance
            const auto draw = sample_instances(st.pool, s.n_star, inst_rng);
            row.pool_exhausted = draw.exhausted;
            for (const auto& inst : draw.instances) st.visited.push_back(inst);
            {
                std::vector<const Configuration*> elites;
                for (long e : st.elites) elites.push_back(&st.config(e));
                run_batch(detail::grid_tasks(st, elites, st.visited, seed_rng), evaluator, policy, st.archive);
            }

            p = summarize_all(st.archive);
            auto fitted = detail::fit_surface(st, p, s);
            row.lambda = fitted.cv.lambda;
            row.support_size = fitted.model.support_size();
            row.design_rows = fitted.rows;

            const long incumbent = select_k_best(detail::candidates(st, st.elites, p), 1).front();
            const point start = st.config(incumbent).unit;

            std::vector<point> fresh;
            for (std::size_t j = 0; j < s.m_star; ++j) {
                const RegressionModel surface = j == 0 ? fitted.model : perturb_model(fitted.model, perturb_rng);
                point x = maximize_surface(surface, start, s.simplex).best;
                for (int tries = 0; tries < 100 && detail::is_duplicate(x, st.configs, fresh, s.duplicate_distance);
                     ++tries) {
                    for (auto& v : x)
                        v = std::clamp(v + uniform(jitter_rng, -s.duplicate_jitter, s.duplicate_jitter), 0.0, 1.0);
                }
                fresh.push_back(std::move(x));
            }

            const std::size_t first_new = st.configs.size();
            for (const auto& x : fresh)
                st.configs.push_back(make_configuration(next_id++, x, space, Origin::surface_optimum, st.t));
            {
                std::vector<const Configuration*> created;
                for (std::size_t i = first_new; i < st.configs.size(); ++i) created.push_back(&st.configs[i]);
                run_batch(detail::grid_tasks(st, created, st.visited, seed_rng), evaluator, policy, st.archive);
            }

            p = summarize_all(st.archive);
            st.elites = select_k_best(detail::candidates(st, detail::all_ids(st), p), s.elite_size);
            // configurations re-entering the elite archive are caught up on every visited instance
            for (;;) {
                std::vector<const Configuration*> behind;
                long missing = 0;
                for (long e : st.elites) {
                    long m = 0;
                    for (const auto& inst : st.visited)
                        m += st.archive.runs_per_pair() - static_cast<long>(st.archive.run_count(e, inst.id));
                    if (m > 0) behind.push_back(&st.config(e));
                    missing += m;
                }
                if (behind.empty() || missing > st.remaining_budget()) break;
                run_batch(detail::grid_tasks(st, behind, st.visited, seed_rng), evaluator, policy, st.archive);
                p = summarize_all(st.archive);
                st.elites = select_k_best(detail::candidates(st, detail::all_ids(st), p), s.elite_size);
            }
            row.evaluations_used = st.archive.evaluation_count();
            row.best_p = p.at(st.elites.front());
            row.elite_ids = st.elites;
            row.instances_visited = st.visited.size();
            res.trace.push_back(row);
            if (observer) observer(st, p);
        }
    } catch (const evaluation_failure& e) {
        res.aborted = true;
        res.abort_message = e.what();
        res.stop_reason = "aborted";
        // drop configurations created in the failed step that never got evaluated
        std::erase_if(st.configs, [&](const Configuration& c) { return st.archive.instance_count(c.id) == 0; });
        std::erase_if(st.elites, [&](long id) { return st.archive.instance_count(id) == 0; });
    }

    detail::finalize(st, res, s, !res.aborted);
    return res;
}

/// Baseline: the whole budget spent on one Latin hypercube sample evaluated
/// on a fixed set of max(1, n0) instances; the elites are the best by p.
inline TunerResult run_random_search(const ParameterSpace& space, InstancePool pool, const Evaluator& evaluator,
                                     const EvaluationPolicy& policy, const TunerSettings& s) {
    const std::size_t k = space.dimension();
    const std::size_t n_inst = std::min(std::max<std::size_t>(1, s.n0), pool.unvisited_count());
    if (n_inst == 0) throw config_error("instance pool is empty");
    const auto m = static_cast<std::size_t>(s.budget / static_cast<long>(n_inst * policy.runs_per_pair));
    if (m < 1) throw config_error("budget too small for a single configuration");

    TunerState st{0, {}, {}, {}, PerformanceArchive(policy.runs_per_pair, s.budget), std::move(pool), s.budget};
    auto lhs_rng = derive_stream(s.seed, detail::lhs_stream);
    auto inst_rng = derive_stream(s.seed, detail::instance_stream);
    auto seed_rng = derive_stream(s.seed, detail::seed_stream);

    TunerResult res;
    res.seed = s.seed;
    res.mode = "random-search";
    long next_id = 0;
    try {
        for (const auto& u : lhs_sample(k, m, lhs_rng))
            st.configs.push_back(make_configuration(next_id++, u, space, Origin::initial_sample, 0));
        st.visited = sample_instances(st.pool, n_inst, inst_rng).instances;
        std::vector<const Configuration*> all;
        for (const auto& c : st.configs) all.push_back(&c);
        run_batch(detail::grid_tasks(st, all, st.visited, seed_rng), evaluator, policy, st.archive);
        const auto p = summarize_all(st.archive);
        st.elites = select_k_best(detail::candidates(st, detail::all_ids(st), p), s.elite_size);
        TraceRow row;
        row.evaluations_used = st.archive.evaluation_count();
        row.best_p = p.at(st.elites.front());
        row.elite_ids = st.elites;
        row.instances_visited = st.visited.size();
        res.trace.push_back(row);
        res.stop_reason = "budget";
    } catch (const evaluation_failure& e) {
        res.aborted = true;
        res.abort_message = e.what();
        res.stop_reason = "aborted";
        std::erase_if(st.configs, [&](const Configuration& c) { return st.archive.instance_count(c.id) == 0; });
        std::erase_if(st.elites, [&](long id) { return st.archive.instance_count(id) == 0; });
    }
    detail::finalize(st, res, s, !res.aborted && st.configs.size() >= k + 2);
    return res;
}

}  // namespace surftune
