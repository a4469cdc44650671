#pragma once

#include <optional>
#include <string>

#include "ned/dichotomy.hpp"
#include "ned/reducibility.hpp"
#include "ned/spectrum.hpp"
#include "ned/system.hpp"

namespace ned {

// Run configuration of one CLI invocation, parsed from JSON.
struct RunConfig {
    SystemSpec system;
    double window_lo = -50.0, window_hi = 50.0;
    double horizon = 50.0;
    int anchor_count = 41;
    double dead_band = 0.015;
    double endpoint_tol = 0.01;
    double rtol = 1e-9, atol = 1e-12;
    std::optional<std::pair<double, double>> gamma_range;
    std::string out_dir = "out";
    std::string format = "json";  // json | csv table flavor

    DichotomyParams dichotomy_params() const;
    SpectrumParams spectrum_params() const;
    ReductionParams reduction_params() const;
    PropagatorOptions propagator_options() const;

    void validate() const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace ned
