#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "surftune/error.hpp"

namespace surftune {

using point = std::vector<double>;

struct ParameterSpec {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
};

/// Ordered list of continuous parameters. The order fixes the coordinate
/// order of every point used downstream.
class ParameterSpace {
public:
    explicit ParameterSpace(std::vector<ParameterSpec> specs) : specs_(std::move(specs)) {
        if (specs_.empty()) throw config_error("parameter space must have at least one parameter");
        std::set<std::string> seen;
        for (const auto& s : specs_) {
            if (s.name.empty()) throw config_error("parameter name must not be empty");
            if (!seen.insert(s.name).second)
                throw config_error("duplicate parameter name '" + s.name + "'");
            if (!(s.lower < s.upper)) {
                std::ostringstream os;
                os << "parameter '" << s.name << "': lower (" << s.lower << ") must be < upper (" << s.upper
                   << ")";
                throw config_error(os.str());
            }
        }
    }

    std::size_t dimension() const { return specs_.size(); }
    const std::vector<ParameterSpec>& specs() const { return specs_; }
    const ParameterSpec& operator[](std::size_t l) const { return specs_[l]; }

private:
    std::vector<ParameterSpec> specs_;
};

inline void check_dimension(std::span<const double> v, const ParameterSpace& space) {
    if (v.size() != space.dimension()) {
        std::ostringstream os;
        os << "expected " << space.dimension() << " coordinates, got " << v.size();
        throw tuning_error(os.str());
    }
}

/// Raw units -> unit cube: (raw - lower) / (upper - lower). Out-of-range
/// inputs are rejected, never clamped.
inline point normalize_config(std::span<const double> raw, const ParameterSpace& space) {
    check_dimension(raw, space);
    point unit(raw.size());
    for (std::size_t l = 0; l < raw.size(); ++l) {
        const auto& s = space[l];
        if (!(raw[l] >= s.lower && raw[l] <= s.upper)) {
            std::ostringstream os;
            os << "parameter '" << s.name << "' value " << raw[l] << " outside [" << s.lower << ", "
               << s.upper << "]";
            throw out_of_bounds_error(s.name, os.str());
        }
        unit[l] = (raw[l] - s.lower) / (s.upper - s.lower);
    }
    return unit;
}

inline point denormalize_config(std::span<const double> unit, const ParameterSpace& space) {
    check_dimension(unit, space);
    point raw(unit.size());
    for (std::size_t l = 0; l < unit.size(); ++l) {
        const auto& s = space[l];
        if (!(unit[l] >= 0.0 && unit[l] <= 1.0)) {
            std::ostringstream os;
            os << "unit coordinate for parameter '" << s.name << "' is " << unit[l] << ", outside [0, 1]";
            throw out_of_bounds_error(s.name, os.str());
        }
        // endpoints map exactly onto the bounds
        if (unit[l] == 0.0)
            raw[l] = s.lower;
        else if (unit[l] == 1.0)
            raw[l] = s.upper;
        else
            raw[l] = s.lower + unit[l] * (s.upper - s.lower);
    }
    return raw;
}

enum class Origin { initial_sample, surface_optimum };

inline const char* to_string(Origin o) {
    return o == Origin::initial_sample ? "initial-sample" : "surface-optimum";
}

struct Configuration {
    long id = 0;
    point raw;
    point unit;
    Origin origin = Origin::initial_sample;
    int birth_iteration = 0;
};

inline Configuration make_configuration(long id, std::span<const double> unit, const ParameterSpace& space,
                                        Origin origin, int birth_iteration) {
    Configuration c;
    c.id = id;
    c.raw = denormalize_config(unit, space);
    c.unit.assign(unit.begin(), unit.end());
    c.origin = origin;
    c.birth_iteration = birth_iteration;
    return c;
}

}  // namespace surftune
