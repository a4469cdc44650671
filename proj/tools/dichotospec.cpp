#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include "ned/report.hpp"

using namespace ned;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<double> gamma;
    std::optional<int> rank;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<double> horizon;
    std::optional<double> endpoint_tol;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    cmd->add_option("--gamma", args.gamma, "shift value override");
    cmd->add_option("--rank", args.rank, "force the projector rank");
    cmd->add_option("--out", args.out, "output directory override");
    cmd->add_option("--format", args.format, "output format override (json|csv)");
    cmd->add_option("--horizon", args.horizon, "splitting horizon override");
    cmd->add_option("--endpoint-tol", args.endpoint_tol, "bisection tolerance override");
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg = load_config(args.config_path);
    if (args.out) cfg.out_dir = *args.out;
    if (args.format) cfg.format = *args.format;
    if (args.horizon) cfg.horizon = *args.horizon;
    if (args.endpoint_tol) cfg.endpoint_tol = *args.endpoint_tol;
    cfg.validate();
    return cfg;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

int run_spectrum(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    Timer timer;
    Propagator prop(cfg.system, cfg.propagator_options());
    DichotomyParams dp = cfg.dichotomy_params();
    if (args.rank) dp.forced_rank = *args.rank;
    std::pair<double, double> range;
    ReportMeta meta;
    meta.command = "spectrum";
    if (cfg.gamma_range) {
        range = *cfg.gamma_range;
    } else {
        GrowthBound g = check_exponential_boundedness(prop, dp);
        if (!g.feasible) {
            std::cerr << "error: growth bound infeasible; set gamma_range in the config\n";
            return 1;
        }
        range = search_interval_from_growth(g, cfg.spectrum_params().pad);
    }
    SpectralDecomposition spec = compute_spectrum(prop, range, cfg.spectrum_params(), dp);
    meta.warnings = spec.warnings;
    meta.wall_time_s = timer.seconds();

    ensure_directory(cfg.out_dir);
    write_file(cfg.out_dir + "/report.json", spectrum_report_json(cfg, meta, spec));
    write_file(cfg.out_dir + "/spectrum_samples.csv", spectrum_samples_csv(spec));
    write_file(cfg.out_dir + "/spectrum_dims.csv", spectrum_dims_csv(spec));

    for (const auto& iv : spec.intervals)
        std::printf("interval [%s, %s] dim %d\n", format_float(iv.a).c_str(),
                    format_float(iv.b).c_str(), iv.dim);
    for (const auto& w : spec.warnings) std::printf("warning: %s\n", w.c_str());
    return spec.low_confidence ? 2 : 0;
}

int run_dichotomy(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    if (!args.gamma) {
        std::cerr << "error: dichotomy needs --gamma\n";
        return 1;
    }
    Timer timer;
    Propagator prop(cfg.system, cfg.propagator_options());
    DichotomyParams dp = cfg.dichotomy_params();
    if (args.rank) dp.forced_rank = *args.rank;
    DichotomyAnalyzer an(prop, dp);
    DichotomyFit fit = an.test(*args.gamma, false);
    ReportMeta meta;
    meta.command = "dichotomy";
    meta.wall_time_s = timer.seconds();
    if (!fit.note.empty()) meta.warnings.push_back(fit.note);

    ensure_directory(cfg.out_dir);
    write_file(cfg.out_dir + "/report.json", dichotomy_report_json(cfg, meta, fit));
    write_file(cfg.out_dir + "/envelope_samples.csv", envelope_samples_csv(fit));

    std::printf("gamma %s: %s", format_float(fit.gamma).c_str(),
                verdict_name(fit.verdict).c_str());
    if (fit.verdict == Verdict::NED)
        std::printf(" rank=%d K=%s alpha=%s eps=%s", fit.rank, format_float(fit.K).c_str(),
                    format_float(fit.alpha).c_str(), format_float(fit.eps).c_str());
    std::printf("\n");
    return fit.verdict == Verdict::Inconclusive ? 2 : 0;
}

int run_reduce(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    if (!args.gamma) {
        std::cerr << "error: reduce needs --gamma\n";
        return 1;
    }
    Timer timer;
    Propagator prop(cfg.system, cfg.propagator_options());
    DichotomyParams dp = cfg.dichotomy_params();
    if (args.rank) dp.forced_rank = *args.rank;
    DichotomyAnalyzer an(prop, dp);
    DichotomyFit fit = an.test(*args.gamma, false);
    if (fit.verdict != Verdict::NED) {
        std::cerr << "error: gamma " << *args.gamma << " is not a certified resolvent shift ("
                  << verdict_name(fit.verdict) << ")\n";
        return fit.verdict == Verdict::Inconclusive ? 2 : 1;
    }
    ReductionParams rp = cfg.reduction_params();
    rp.dichotomy = dp;
    ReductionResult red = reduce_two_blocks(prop, fit, rp);
    SpectralDecomposition base;
    double mismatch = -1.0;
    if (cfg.gamma_range) {
        base = compute_spectrum(prop, *cfg.gamma_range, cfg.spectrum_params(), dp);
        mismatch = reduction_spectrum_mismatch(base, red, rp);
    }
    ReportMeta meta;
    meta.command = "reduce";
    meta.wall_time_s = timer.seconds();

    ensure_directory(cfg.out_dir);
    write_file(cfg.out_dir + "/report.json", reduction_report_json(cfg, meta, red, mismatch));
    write_file(cfg.out_dir + "/reduction_grid.csv", reduction_grid_csv(red));

    std::printf("blocks (%d", red.block_sizes.empty() ? 0 : red.block_sizes[0]);
    for (size_t i = 1; i < red.block_sizes.size(); ++i) std::printf(", %d", red.block_sizes[i]);
    std::printf("), off-block max %s, similarity residual %s\n",
                format_float(red.max_offblock).c_str(),
                format_float(red.max_similarity_residual).c_str());
    return 0;
}

int run_verify(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    Timer timer;
    std::vector<CheckResult> checks = run_verification_suite(cfg);
    ReportMeta meta;
    meta.command = "verify";
    meta.wall_time_s = timer.seconds();

    bool all = true;
    for (const auto& c : checks) {
        std::printf("%s %s (%s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.details.c_str());
        all = all && c.pass;
    }
    ensure_directory(cfg.out_dir);
    write_file(cfg.out_dir + "/report.json", verification_report_json(cfg, meta, checks));
    return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nonuniform dichotomy spectrum toolkit"};
    app.require_subcommand(1);

    CommonArgs spectrum_args, dichotomy_args, reduce_args, verify_args;
    add_common(app.add_subcommand("spectrum", "compute the dichotomy spectrum"), spectrum_args);
    add_common(app.add_subcommand("dichotomy", "test one shift for a dichotomy"), dichotomy_args);
    add_common(app.add_subcommand("reduce", "block-diagonalize at a resolvent shift"),
               reduce_args);
    add_common(app.add_subcommand("verify", "run the invariant suite"), verify_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("spectrum")) return run_spectrum(spectrum_args);
        if (app.got_subcommand("dichotomy")) return run_dichotomy(dichotomy_args);
        if (app.got_subcommand("reduce")) return run_reduce(reduce_args);
        if (app.got_subcommand("verify")) return run_verify(verify_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
