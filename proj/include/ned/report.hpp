#pragma once

#include <string>
#include <vector>

#include "ned/config.hpp"

namespace ned {

inline constexpr const char* kToolVersion = "0.1.0";

// floats serialized with 17 significant digits so payloads round-trip
std::string format_float(double v);

void write_file(const std::string& path, const std::string& content);
void ensure_directory(const std::string& path);

struct ReportMeta {
    std::string command;
    double wall_time_s = 0.0;
    std::vector<std::string> warnings;
};

std::string spectrum_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                 const SpectralDecomposition& spec);
std::string dichotomy_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                  const DichotomyFit& fit);
std::string reduction_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                  const ReductionResult& red, double spectrum_mismatch);

std::string spectrum_samples_csv(const SpectralDecomposition& spec);
std::string spectrum_dims_csv(const SpectralDecomposition& spec);
std::string envelope_samples_csv(const DichotomyFit& fit);
std::string reduction_grid_csv(const ReductionResult& red);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string details;
};

// Invariant suite over the configured system; one entry per property.
std::vector<CheckResult> run_verification_suite(const RunConfig& cfg);

std::string verification_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                     const std::vector<CheckResult>& checks);

}  // namespace ned
