#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "surftune/evaluation.hpp"
#include "surftune/regression.hpp"
#include "surftune/run_config.hpp"
#include "surftune/tuner.hpp"

namespace surftune {

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::vector<std::string> parameter_names(const ParameterSpace& space) {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < space.dimension(); ++l) names.push_back(space[l].name);
    return names;
}

inline nlohmann::ordered_json terms_json(const PolynomialBasis& basis, double intercept, double intercept_se,
                                         const std::vector<double>& coefs, const std::vector<double>& ses,
                                         const std::vector<std::string>& names) {
    nlohmann::ordered_json out;
    out["intercept"] = intercept;
    out["intercept_standard_error"] = intercept_se;
    auto terms = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < coefs.size(); ++t) {
        if (coefs[t] == 0.0) continue;
        nlohmann::ordered_json term;
        term["term"] = term_name(basis, t + 1, names);
        term["exponents"] = basis.term(t + 1);
        term["coefficient"] = coefs[t];
        term["standard_error"] = ses[t];
        terms.push_back(std::move(term));
    }
    out["terms"] = std::move(terms);
    out["rendered"] = render_polynomial(basis, intercept, coefs, names);
    return out;
}

}  // namespace detail

inline nlohmann::ordered_json result_json(const RunConfig& cfg, const TunerResult& res,
                                          const std::string& created_at) {
    const auto space = cfg.space();
    const auto names = detail::parameter_names(space);
    nlohmann::ordered_json j;

    auto& meta = j["metadata"];
    meta["created_at"] = created_at;
    meta["mode"] = res.mode;
    meta["seed"] = res.seed;
    meta["stop_reason"] = res.stop_reason;
    meta["aborted"] = res.aborted;
    if (res.aborted) meta["abort_message"] = res.abort_message;
    meta["iterations"] = res.iterations;
    meta["evaluations_used"] = res.archive.evaluation_count();
    meta["budget"] = cfg.tuner.budget;
    meta["sense"] = cfg.evaluator.sense == Sense::maximize ? "maximize" : "minimize";
    meta["runs_per_pair"] = cfg.evaluator.runs_per_pair;
    meta["configurations"] = res.configs.size();
    meta["instances_visited"] = res.visited.size();
    auto& ts = meta["settings"];
    ts["m0"] = cfg.tuner.m0;
    ts["m_star"] = cfg.tuner.m_star;
    ts["n0"] = cfg.tuner.n0;
    ts["n_star"] = cfg.tuner.n_star;
    ts["elite_size"] = cfg.tuner.elite_size;
    ts["basis_order"] = cfg.tuner.basis_order;
    ts["penalty"] = cfg.tuner.penalty == Penalty::lasso ? "lasso" : "ridge";
    ts["cv_folds"] = cfg.tuner.cv_folds;
    if (cfg.tuner.max_iterations) ts["max_iterations"] = *cfg.tuner.max_iterations;

    auto& params = j["parameters"];
    params = nlohmann::ordered_json::array();
    for (const auto& p : cfg.parameters) params.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}});

    auto& elites = j["elites"];
    elites = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < res.elites.size(); ++r) {
        const auto& e = res.elites[r];
        nlohmann::ordered_json ej;
        ej["rank"] = r + 1;
        ej["id"] = e.config.id;
        ej["p"] = e.p;
        ej["instances"] = e.instances;
        ej["origin"] = to_string(e.config.origin);
        ej["birth_iteration"] = e.config.birth_iteration;
        for (std::size_t l = 0; l < names.size(); ++l) {
            ej["raw"][names[l]] = e.config.raw[l];
            ej["unit"][names[l]] = e.config.unit[l];
        }
        elites.push_back(std::move(ej));
    }

    if (res.model) {
        const auto& m = *res.model;
        auto& mj = j["model"];
        mj["penalty"] = m.penalty == Penalty::lasso ? "lasso" : "ridge";
        mj["lambda"] = m.lambda;
        mj["basis_order"] = m.basis.order();
        mj["design_rows"] = res.configs.size();
        mj["support_size"] = m.support_size();
        mj["unit"] = detail::terms_json(m.basis, m.intercept, m.intercept_standard_error, m.coefficients,
                                        m.standard_errors, names);
        const auto raw = to_raw_units(m, space);
        mj["raw"] = detail::terms_json(raw.basis, raw.intercept, raw.intercept_standard_error, raw.coefficients,
                                       raw.standard_errors, names);
    } else {
        j["model"] = nullptr;
    }

    auto& perf = j["performance"];
    perf = nlohmann::ordered_json::array();
    for (const auto& [id, p] : res.performance)
        perf.push_back({{"id", id}, {"p", p}, {"instances", res.archive.instance_count(id)}});

    auto visited = nlohmann::ordered_json::array();
    for (const auto& inst : res.visited) visited.push_back(inst.id);
    j["instances_visited"] = std::move(visited);
    return j;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << "iteration,evaluations_used,best_p,lambda,support_size,design_rows,instances_visited,pool_exhausted,"
          "elite_ids\n";
    for (const auto& r : trace) {
        os << r.iteration << ',' << r.evaluations_used << ',' << format_double(r.best_p) << ','
           << format_double(r.lambda) << ',' << r.support_size << ',' << r.design_rows << ',' << r.instances_visited
           << ',' << (r.pool_exhausted ? 1 : 0) << ',';
        for (std::size_t i = 0; i < r.elite_ids.size(); ++i) os << (i ? ";" : "") << r.elite_ids[i];
        os << '\n';
    }
}

/// One row per observation with the value as the evaluator reported it.
inline void write_archive_csv(std::ostream& os, const PerformanceArchive& archive, Sense sense) {
    os << "config_id,instance_id,seed,raw_value\n";
    for (const auto& o : archive.observations()) {
        const double v = sense == Sense::minimize ? -o.raw_value : o.raw_value;
        os << o.config_id << ',' << o.instance_id << ',' << o.seed << ',' << format_double(v) << '\n';
    }
}

/// Rebuilds an archive from archive.csv text.
inline PerformanceArchive read_archive_csv(std::istream& is, int runs_per_pair, Sense sense) {
    PerformanceArchive archive(runs_per_pair);
    std::string line;
    if (!std::getline(is, line) || line != "config_id,instance_id,seed,raw_value")
        throw tuning_error("archive.csv: unexpected header");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, inst, seed, value;
        if (!std::getline(ss, id, ',') || !std::getline(ss, inst, ',') || !std::getline(ss, seed, ',') ||
            !std::getline(ss, value))
            throw tuning_error("archive.csv: malformed line " + std::to_string(lineno));
        double v = std::stod(value);
        if (sense == Sense::minimize) v = -v;
        archive.record({std::stol(id), inst, std::stoull(seed), v});
    }
    return archive;
}

inline void write_summary(std::ostream& os, const RunConfig& cfg, const TunerResult& res, double seconds) {
    const auto space = cfg.space();
    const auto names = detail::parameter_names(space);
    os << "mode:              " << res.mode << '\n'
       << "seed:              " << res.seed << '\n'
       << "stop reason:       " << res.stop_reason << '\n'
       << "iterations:        " << res.iterations << '\n'
       << "evaluations used:  " << res.archive.evaluation_count() << " of " << cfg.tuner.budget << '\n'
       << "configurations:    " << res.configs.size() << '\n'
       << "instances visited: " << res.visited.size() << '\n'
       << "wall time:         " << std::fixed << std::setprecision(2) << seconds << " s\n";
    os.unsetf(std::ios::floatfield);
    if (res.aborted) os << "ABORTED: " << res.abort_message << '\n';

    os << "\nelite configurations\n";
    os << std::left << std::setw(6) << "rank" << std::setw(8) << "id" << std::setw(12) << "p" << std::setw(6)
       << "inst";
    for (const auto& n : names) os << std::setw(14) << n;
    os << '\n';
    for (std::size_t r = 0; r < res.elites.size(); ++r) {
        const auto& e = res.elites[r];
        os << std::setw(6) << r + 1 << std::setw(8) << e.config.id << std::setw(12) << std::setprecision(6) << e.p
           << std::setw(6) << e.instances;
        for (double v : e.config.raw) os << std::setw(14) << std::setprecision(6) << v;
        os << '\n';
    }
    os << std::right;

    if (res.model) {
        const auto& m = *res.model;
        const auto raw = to_raw_units(m, space);
        os << "\nfitted model (" << (m.penalty == Penalty::lasso ? "lasso" : "ridge") << ", lambda = "
           << std::setprecision(4) << m.lambda << ", " << m.support_size() << " non-zero terms)\n";
        os << "raw units:  " << render_polynomial(raw.basis, raw.intercept, raw.coefficients, names) << '\n';
        os << "unit cube:  " << render_polynomial(m.basis, m.intercept, m.coefficients, names) << '\n';
    } else {
        os << "\nno fitted model\n";
    }
}

/// Runs the configured tuner and writes result.json, trace.csv, archive.csv
/// and summary.txt into the output directory. Returns 0 on success and 2
/// when the run aborted (reports are still written).
inline int run_and_report(const RunConfig& cfg, int jobs = 1, std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    const fs::path out(cfg.output_dir);
    fs::create_directories(out);

    const auto space = cfg.space();
    const auto evaluator = make_evaluator(cfg);
    const auto policy = make_policy(cfg, jobs);
    const auto started = std::chrono::steady_clock::now();

    IterationObserver observer;
    if (log)
        observer = [log](const TunerState& st, const std::map<long, double>& p) {
            *log << "iteration " << st.t << ": " << st.archive.evaluation_count() << " evaluations, best p "
                 << p.at(st.elites.front()) << '\n';
        };
    TunerResult res = cfg.mode == RunMode::smbo
                          ? run_tuner(space, InstancePool(cfg.instances), *evaluator, policy, cfg.tuner, observer)
                          : run_random_search(space, InstancePool(cfg.instances), *evaluator, policy, cfg.tuner);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    {
        std::ofstream f(out / "trace.csv");
        write_trace_csv(f, res.trace);
    }
    {
        std::ofstream f(out / "archive.csv");
        write_archive_csv(f, res.archive, cfg.evaluator.sense);
    }
    {
        std::ofstream f(out / "result.json");
        f << result_json(cfg, res, detail::utc_timestamp()).dump(2) << '\n';
    }
    {
        std::ofstream f(out / "summary.txt");
        write_summary(f, cfg, res, seconds);
    }
    if (log) {
        if (res.aborted)
            *log << "run aborted: " << res.abort_message << '\n';
        else
            *log << "done (" << res.stop_reason << "), reports in " << out.string() << '\n';
    }
    return res.aborted ? 2 : 0;
}

}  // namespace surftune
