#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "surftune/error.hpp"
#include "surftune/parameter_space.hpp"
#include "surftune/regression.hpp"

namespace surftune {

struct SimplexSettings {
    double reflection = 1.0;
    double expansion = 2.0;
    double contraction = 0.5;
    double shrink = 0.5;
    std::optional<long> max_evals;  // 200 * k when unset
    double x_tolerance = 1e-6;      // simplex diameter (L-infinity, around the best vertex)
    double f_tolerance = 1e-9;      // spread of surface values over the vertices
    double initial_step = 0.05;

    void validate() const {
        if (!(reflection > 0.0)) throw config_error("simplex reflection must be > 0");
        if (!(expansion > 1.0)) throw config_error("simplex expansion must be > 1");
        if (!(contraction > 0.0 && contraction < 1.0)) throw config_error("simplex contraction must be in (0, 1)");
        if (!(shrink > 0.0 && shrink < 1.0)) throw config_error("simplex shrink must be in (0, 1)");
        if (max_evals && *max_evals < 1) throw config_error("simplex max_evals must be >= 1");
    }
};

enum class StopReason { x_tolerance, f_tolerance, max_evals };

struct SearchResult {
    point best;
    double value = 0.0;
    long evaluations = 0;
    bool restarted = false;
    StopReason reason = StopReason::max_evals;
};

/// Nelder-Mead maximization of `surface` over [0,1]^k. Every proposal is
/// clamped into the cube before evaluation. The initial simplex is the start
/// plus one vertex per axis offset by +step (or -step if that leaves the
/// cube). The first tolerance-based convergence triggers one restart around
/// the incumbent, which also recovers simplices collapsed against a face.
template <class Surface>
SearchResult maximize_surface(const Surface& surface, std::span<const double> start,
                              const SimplexSettings& settings = {}) {
    settings.validate();
    const std::size_t k = start.size();
    if (k == 0) throw tuning_error("maximize_surface needs at least one dimension");
    for (double v : start)
        if (!(v >= 0.0 && v <= 1.0)) throw out_of_bounds_error("", "start point outside the unit cube");
    const long max_evals = settings.max_evals.value_or(200 * static_cast<long>(k));

    SearchResult res;
    // minimize the negated surface
    auto cost = [&](const point& x) {
        ++res.evaluations;
        return -surface(std::span<const double>(x));
    };
    auto clamp = [](point x) {
        for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
        return x;
    };

    std::vector<point> simplex(k + 1);
    std::vector<double> values(k + 1);
    auto build_simplex = [&](const point& base, double base_value) {
        simplex[0] = base;
        values[0] = base_value;
        for (std::size_t i = 0; i < k; ++i) {
            point v = base;
            v[i] = base[i] + settings.initial_step <= 1.0 ? base[i] + settings.initial_step
                                                           : base[i] - settings.initial_step;
            simplex[i + 1] = clamp(std::move(v));
            values[i + 1] = cost(simplex[i + 1]);
        }
    };

    point start_pt(start.begin(), start.end());
    build_simplex(start_pt, cost(start_pt));

    std::vector<std::size_t> order(k + 1);
    point centroid(k);
    auto affine = [&](const point& from, const point& to, double t) {
        point x(k);
        for (std::size_t l = 0; l < k; ++l) x[l] = from[l] + t * (to[l] - from[l]);
        return clamp(std::move(x));
    };

    for (;;) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
        {
            std::vector<point> s(k + 1);
            std::vector<double> v(k + 1);
            for (std::size_t i = 0; i <= k; ++i) {
                s[i] = std::move(simplex[order[i]]);
                v[i] = values[order[i]];
            }
            simplex.swap(s);
            values.swap(v);
        }

        double diameter = 0.0;
        for (std::size_t i = 1; i <= k; ++i)
            for (std::size_t l = 0; l < k; ++l) diameter = std::max(diameter, std::abs(simplex[i][l] - simplex[0][l]));
        const double spread = values[k] - values[0];
        std::optional<StopReason> stop;
        if (spread <= settings.f_tolerance)
            stop = StopReason::f_tolerance;
        else if (diameter <= settings.x_tolerance)
            stop = StopReason::x_tolerance;
        else if (res.evaluations >= max_evals)
            stop = StopReason::max_evals;
        if (stop) {
            if (*stop != StopReason::max_evals && !res.restarted && res.evaluations + static_cast<long>(k) <= max_evals) {
                res.restarted = true;
                build_simplex(simplex[0], values[0]);
                continue;
            }
            res.reason = *stop;
            break;
        }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t l = 0; l < k; ++l) centroid[l] += simplex[i][l] / static_cast<double>(k);

        const point& worst = simplex[k];
        const point xr = affine(centroid, worst, -settings.reflection);
        const double fr = cost(xr);
        if (fr < values[0]) {
            const point xe = affine(centroid, xr, settings.expansion);
            const double fe = cost(xe);
            if (fe < fr) {
                simplex[k] = xe;
                values[k] = fe;
            } else {
                simplex[k] = xr;
                values[k] = fr;
            }
            continue;
        }
        if (fr < values[k - 1]) {
            simplex[k] = xr;
            values[k] = fr;
            continue;
        }
        bool accepted = false;
        if (fr < values[k]) {
            const point xc = affine(centroid, xr, settings.contraction);
            const double fc = cost(xc);
            if (fc <= fr) {
                simplex[k] = xc;
                values[k] = fc;
                accepted = true;
            }
        } else {
            const point xc = affine(centroid, worst, settings.contraction);
            const double fc = cost(xc);
            if (fc < values[k]) {
                simplex[k] = xc;
                values[k] = fc;
                accepted = true;
            }
        }
        if (!accepted) {
            for (std::size_t i = 1; i <= k; ++i) {
                simplex[i] = affine(simplex[0], simplex[i], settings.shrink);
                values[i] = cost(simplex[i]);
            }
        }
    }

    res.best = simplex[0];
    res.value = -values[0];
    return res;
}

inline SearchResult maximize_surface(const RegressionModel& model, std::span<const double> start,
                                     const SimplexSettings& settings = {}) {
    return maximize_surface([&model](std::span<const double> x) { return predict(model, x); }, start, settings);
}

}  // namespace surftune
