#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "surftune/error.hpp"
#include "surftune/parameter_space.hpp"
#include "surftune/random.hpp"

namespace surftune {

/// Latin hypercube sample of m0 points in [0,1)^k. Along every coordinate
/// each stratum [j/m0, (j+1)/m0) holds exactly one point, jittered uniformly
/// inside the stratum; strata order is permuted independently per coordinate.
inline std::vector<point> lhs_sample(std::size_t k, std::size_t m0, rng_type& rng) {
    if (k < 1 || m0 < 1) throw tuning_error("lhs_sample requires k >= 1 and m0 >= 1");
    std::vector<point> pts(m0, point(k));
    std::vector<std::size_t> perm(m0);
    const double width = 1.0 / static_cast<double>(m0);
    for (std::size_t l = 0; l < k; ++l) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(perm, rng);
        for (std::size_t i = 0; i < m0; ++i) {
            double v = (static_cast<double>(perm[i]) + unit_uniform(rng)) * width;
            // guard the upper stratum edge against rounding
            const double edge = static_cast<double>(perm[i] + 1) * width;
            if (v >= edge) v = std::nextafter(edge, 0.0);
            pts[i][l] = v;
        }
    }
    return pts;
}

struct InstanceDescriptor {
    std::string id;
    std::string payload;
};

/// The tuning set plus the subset already handed out. Each instance is
/// sampled at most once per run.
class InstancePool {
public:
    InstancePool() = default;
    explicit InstancePool(std::vector<InstanceDescriptor> instances) : instances_(std::move(instances)) {
        std::unordered_set<std::string> ids;
        for (const auto& inst : instances_) {
            if (inst.id.empty()) throw config_error("instance id must not be empty");
            if (!ids.insert(inst.id).second) throw config_error("duplicate instance id '" + inst.id + "'");
        }
        visited_.assign(instances_.size(), false);
    }

    std::size_t size() const { return instances_.size(); }
    std::size_t unvisited_count() const {
        return static_cast<std::size_t>(std::count(visited_.begin(), visited_.end(), false));
    }
    const std::vector<InstanceDescriptor>& instances() const { return instances_; }
    bool is_visited(std::size_t idx) const { return visited_[idx]; }
    void mark_visited(std::size_t idx) { visited_[idx] = true; }

private:
    std::vector<InstanceDescriptor> instances_;
    std::vector<bool> visited_;
};

struct InstanceDraw {
    std::vector<InstanceDescriptor> instances;
    bool exhausted = false;
};

/// Uniformly draws min(n, unvisited) unvisited instances without replacement
/// and marks them visited. `exhausted` is set when fewer than n remained.
inline InstanceDraw sample_instances(InstancePool& pool, std::size_t n, rng_type& rng) {
    InstanceDraw out;
    if (n == 0) return out;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (!pool.is_visited(i)) candidates.push_back(i);
    out.exhausted = candidates.size() < n;
    const std::size_t take = std::min(n, candidates.size());
    // partial Fisher-Yates
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
        pool.mark_visited(candidates[i]);
        out.instances.push_back(pool.instances()[candidates[i]]);
    }
    return out;
}

}  // namespace surftune
