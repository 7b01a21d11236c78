#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "surftune/error.hpp"
#include "surftune/evaluation.hpp"
#include "surftune/random.hpp"

namespace surftune {

/// Comma-separated reals, e.g. "0.7,0.3".
inline std::vector<double> parse_center(const std::string& payload) {
    std::vector<double> out;
    std::stringstream ss(payload);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        double v;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            throw tuning_error("bad center coordinate '" + tok + "' in payload '" + payload + "'");
        }
        if (tok.find_first_not_of(" \t", used) != std::string::npos)
            throw tuning_error("bad center coordinate '" + tok + "' in payload '" + payload + "'");
        out.push_back(v);
    }
    return out;
}

enum class Testbed { sphere, interaction };

inline Testbed testbed_from_name(const std::string& name) {
    if (name == "sphere") return Testbed::sphere;
    if (name == "interaction") return Testbed::interaction;
    throw config_error("unknown builtin testbed '" + name + "'");
}

/// Builtin synthetic targets over unit coordinates (maximize):
///   sphere:       1 - ||u - c_j||^2, c_j parsed from the instance payload
///   interaction:  1 - (u1 - 0.5)^2 - u2 * u3, payload ignored
/// plus Gaussian noise of standard deviation noise_sd seeded by the run seed.
class SyntheticEvaluator final : public Evaluator {
public:
    SyntheticEvaluator(Testbed testbed, double noise_sd = 0.0) : testbed_(testbed), noise_sd_(noise_sd) {
        if (noise_sd < 0.0) throw config_error("noise_sd must be >= 0");
    }

    double run(const Configuration& config, const InstanceDescriptor& instance,
               std::uint64_t seed) const override {
        const auto& u = config.unit;
        double value = 0.0;
        switch (testbed_) {
            case Testbed::sphere: {
                const auto c = parse_center(instance.payload);
                if (c.size() != u.size())
                    throw tuning_error("sphere center in instance '" + instance.id + "' has " +
                                       std::to_string(c.size()) + " coordinates, expected " +
                                       std::to_string(u.size()));
                double d2 = 0.0;
                for (std::size_t l = 0; l < u.size(); ++l) d2 += (u[l] - c[l]) * (u[l] - c[l]);
                value = 1.0 - d2;
                break;
            }
            case Testbed::interaction:
                if (u.size() < 3) throw tuning_error("interaction testbed needs at least 3 parameters");
                value = 1.0 - (u[0] - 0.5) * (u[0] - 0.5) - u[1] * u[2];
                break;
        }
        if (noise_sd_ > 0.0) {
            rng_type rng(splitmix64(seed));
            value += noise_sd_ * standard_normal(rng);
        }
        return value;
    }

private:
    Testbed testbed_;
    double noise_sd_;
};

/// n sphere instances whose centers are `center` plus uniform jitter in
/// [-jitter, +jitter] per coordinate, clamped to [0, 1].
inline std::vector<InstanceDescriptor> make_sphere_instances(std::size_t n, const std::vector<double>& center,
                                                             double jitter, std::uint64_t seed) {
    rng_type rng(splitmix64(seed));
    std::vector<InstanceDescriptor> out;
    for (std::size_t j = 0; j < n; ++j) {
        std::ostringstream payload;
        payload.precision(17);
        for (std::size_t l = 0; l < center.size(); ++l) {
            const double c = std::clamp(center[l] + uniform(rng, -jitter, jitter), 0.0, 1.0);
            payload << (l ? "," : "") << c;
        }
        out.push_back({"inst" + std::to_string(j), payload.str()});
    }
    return out;
}

}  // namespace surftune
