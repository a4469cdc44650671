#include "ned/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace ned {

using json = nlohmann::ordered_json;

std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw Error("cannot create output directory '" + path + "': " + ec.message());
}

namespace {

json envelope_json(const RunConfig& cfg, const ReportMeta& meta) {
    json j;
    j["tool_version"] = kToolVersion;
    j["command"] = meta.command;
    j["config"] = json::parse(serialize_config(cfg));
    j["wall_time_s"] = meta.wall_time_s;
    j["warnings"] = meta.warnings;
    return j;
}

json interval_json(const SpectralInterval& iv) {
    json j;
    j["a"] = std::isfinite(iv.a) ? json(iv.a) : json("-inf");
    j["b"] = std::isfinite(iv.b) ? json(iv.b) : json("+inf");
    j["dim"] = iv.dim;
    return j;
}

json fit_json(const DichotomyFit& fit) {
    json j;
    j["gamma"] = fit.gamma;
    j["verdict"] = verdict_name(fit.verdict);
    j["rank"] = fit.rank;
    j["K"] = fit.K;
    j["alpha"] = fit.alpha;
    j["eps"] = fit.eps;
    j["margin"] = fit.margin;
    j["eps_over_alpha"] = fit.alpha > 0.0 ? fit.eps / fit.alpha : 0.0;
    j["eps_free"] = fit.eps_free;
    j["uniform"] = fit.uniform;
    j["max_envelope_residual"] = fit.max_envelope_residual;
    j["invariance_residual"] = fit.invariance_residual;
    j["min_principal_angle"] = fit.min_principal_angle;
    j["horizon_used"] = fit.horizon_used;
    if (fit.exponents.size() > 0) {
        json mu = json::array();
        for (int i = 0; i < fit.exponents.size(); ++i) mu.push_back(fit.exponents(i));
        j["exponents"] = mu;
    }
    if (!fit.note.empty()) j["note"] = fit.note;
    return j;
}

}  // namespace

std::string spectrum_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                 const SpectralDecomposition& spec) {
    json j = envelope_json(cfg, meta);
    json p;
    json ivs = json::array();
    for (const auto& iv : spec.intervals) ivs.push_back(interval_json(iv));
    p["intervals"] = ivs;
    p["witnesses"] = spec.witnesses;
    p["witness_dims"] = spec.witness_dims;
    p["manifold_dims"] = spec.manifold_dims;
    p["stacked_condition"] = spec.stacked_condition;
    p["low_confidence"] = spec.low_confidence;
    p["total_dimension"] = spec.total_dimension;
    for (const auto& w : spec.warnings) j["warnings"].push_back(w);
    j["payload"] = p;
    return j.dump(2) + "\n";
}

std::string dichotomy_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                  const DichotomyFit& fit) {
    json j = envelope_json(cfg, meta);
    j["payload"] = fit_json(fit);
    return j.dump(2) + "\n";
}

std::string reduction_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                  const ReductionResult& red, double spectrum_mismatch) {
    json j = envelope_json(cfg, meta);
    json p;
    p["block_sizes"] = red.block_sizes;
    p["M"] = red.M;
    p["eps"] = red.eps;
    p["max_similarity_residual"] = red.max_similarity_residual;
    p["mean_similarity_residual"] = red.mean_similarity_residual;
    p["max_offblock"] = red.max_offblock;
    p["lyap_violation"] = red.lyap_violation;
    p["complete"] = red.complete;
    if (!red.note.empty()) p["note"] = red.note;
    json stages = json::array();
    for (const auto& st : red.stages) {
        json s;
        s["offset"] = st.offset;
        s["split"] = st.split;
        s["M"] = st.M;
        s["eps"] = st.eps;
        s["gamma"] = st.gamma;
        stages.push_back(s);
    }
    p["stages"] = stages;
    if (spectrum_mismatch >= 0.0) p["spectrum_mismatch"] = spectrum_mismatch;
    j["payload"] = p;
    return j.dump(2) + "\n";
}

std::string spectrum_samples_csv(const SpectralDecomposition& spec) {
    std::ostringstream out;
    out << "gamma,kind,dimS,K,alpha,eps\n";
    for (const auto& c : spec.samples) {
        out << format_float(c.gamma) << ',' << gamma_kind_name(c.kind) << ',' << c.dim_S << ','
            << format_float(c.fit.K) << ',' << format_float(c.fit.alpha) << ','
            << format_float(c.fit.eps) << '\n';
    }
    return out.str();
}

std::string spectrum_dims_csv(const SpectralDecomposition& spec) {
    std::ostringstream out;
    out << "gamma,dimS\n";
    for (const auto& c : spec.samples)
        if (c.kind == GammaKind::Resolvent)
            out << format_float(c.gamma) << ',' << c.dim_S << '\n';
    return out.str();
}

std::string envelope_samples_csv(const DichotomyFit& fit) {
    std::ostringstream out;
    out << "branch,d,u,lognorm,bound\n";
    double logK = std::log(fit.K);
    for (const auto& s : fit.samples_P)
        out << "P," << format_float(s.d) << ',' << format_float(s.u) << ','
            << format_float(s.L) << ','
            << format_float(logK - fit.alpha * s.d + fit.eps * s.u) << '\n';
    for (const auto& s : fit.samples_Q)
        out << "Q," << format_float(s.d) << ',' << format_float(s.u) << ','
            << format_float(s.L) << ','
            << format_float(logK - fit.alpha * s.d + fit.eps * s.u) << '\n';
    return out.str();
}

std::string reduction_grid_csv(const ReductionResult& red) {
    std::ostringstream out;
    const int n = red.S.empty() ? 0 : (int)red.S[0].rows();
    out << "t";
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < n; ++c) out << ",S" << i << c;
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < n; ++c) out << ",B" << i << c;
    out << '\n';
    for (size_t j = 0; j < red.times.size(); ++j) {
        out << format_float(red.times[j]);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < n; ++c) out << ',' << format_float(red.S[j](i, c));
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < n; ++c) out << ',' << format_float(red.B[j](i, c));
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

namespace {

CheckResult check(const std::string& name, bool pass, const std::string& details) {
    return {name, pass, details};
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace

std::vector<CheckResult> run_verification_suite(const RunConfig& cfg) {
    std::vector<CheckResult> out;
    Propagator prop(cfg.system, cfg.propagator_options());
    DichotomyParams dp = cfg.dichotomy_params();
    const int n = prop.dim();

    {  // cocycle residual over random triples
        std::mt19937 rng(2024);
        std::uniform_real_distribution<double> U(cfg.window_lo / 2.0, cfg.window_hi / 2.0);
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            double a = U(rng), b = U(rng), c = U(rng);
            double s = std::min({a, b, c}), t = std::max({a, b, c});
            double mid = a + b + c - s - t;
            MatrixXd full = prop.flow(s, t).unit();
            ScaledMatrix left = prop.flow(mid, t);
            ScaledMatrix right = prop.flow(s, mid);
            ScaledMatrix split = left * right;
            MatrixXd diff = full - (split.mat * std::exp(split.log_scale -
                                                          prop.flow(s, t).log_scale))
                                       .cast<double>();
            double res = diff.norm() / std::max(1.0, spectral_norm(full));
            worst = std::max(worst, res);
        }
        out.push_back(check("cocycle_residual", worst <= 1e-6, "max " + num(worst)));
    }

    if (has_closed_form(cfg.system)) {  // closed-form agreement
        double worst = 0.0;
        for (double s : {cfg.window_lo, cfg.window_lo / 3.0, 0.0, cfg.window_hi / 2.0}) {
            for (double t : {cfg.window_lo / 2.0, 0.0, cfg.window_hi / 3.0, cfg.window_hi}) {
                MatrixXd want = analytic_propagator(cfg.system, s, t);
                ScaledMatrix got = prop.flow(s, t);
                double logw = std::log(std::max(1e-300, spectral_norm(want)));
                worst = std::max(worst, std::abs(got.log_norm() - logw) /
                                            std::max(1.0, std::abs(logw)));
            }
        }
        out.push_back(check("closed_form_agreement", worst <= 1e-6, "max rel " + num(worst)));
    }

    // find a resolvent shift for the fit-based properties
    GrowthBound g = check_exponential_boundedness(prop, dp);
    auto range = cfg.gamma_range ? *cfg.gamma_range
                                 : search_interval_from_growth(g, cfg.spectrum_params().pad);
    DichotomyAnalyzer an(prop, dp);
    std::optional<double> resolvent;
    for (double gamma : {0.0, range.second, range.first, range.second + 1.0}) {
        auto f = an.test(gamma, false);
        if (f.verdict == Verdict::NED) {
            resolvent = gamma;
            break;
        }
    }

    if (resolvent) {
        DichotomyFit fit = an.test(*resolvent, false);
        out.push_back(check("projector_idempotency",
                            fit.projectors.max_idempotency_residual <= 1e-8,
                            "max " + num(fit.projectors.max_idempotency_residual)));
        out.push_back(check("projector_invariance", fit.invariance_residual <= 1e-5,
                            "max " + num(fit.invariance_residual)));
        out.push_back(check("envelope_feasibility", fit.max_envelope_residual <= 1e-9,
                            "max residual " + num(fit.max_envelope_residual)));

        DichotomyFit uf = an.test(*resolvent, true);
        bool implication = uf.verdict != Verdict::NED ||
                           (fit.verdict == Verdict::NED && fit.eps <= 0.0);
        out.push_back(check("uniform_implies_nonuniform", implication,
                            "uniform " + verdict_name(uf.verdict) + ", eps " + num(fit.eps)));

        if (fit.eps < fit.alpha / 2.0) {
            bool open_ok = true;
            for (double z : {*resolvent - fit.alpha / 2.0, *resolvent + fit.alpha / 2.0})
                open_ok = open_ok && an.test(z, false).verdict == Verdict::NED;
            out.push_back(check("resolvent_openness", open_ok,
                                "beta " + num(fit.alpha / 2.0)));
        }
    } else {
        out.push_back(check("resolvent_found", false, "no resolvent shift in the search range"));
    }

    SpectralDecomposition spec = compute_spectrum(prop, range, cfg.spectrum_params(), dp);
    {  // dimension monotonicity
        bool mono = true;
        int prev = -1;
        for (const auto& c : spec.samples) {
            if (c.kind != GammaKind::Resolvent) continue;
            if (c.dim_S < prev) mono = false;
            prev = c.dim_S;
        }
        out.push_back(check("dim_monotonicity", mono,
                            std::to_string(spec.samples.size()) + " scan samples"));
        out.push_back(check("interval_count", (int)spec.intervals.size() <= n,
                            std::to_string(spec.intervals.size()) + " intervals"));
    }
    if (!spec.manifold_dims.empty()) {
        int total = 0;
        for (int d : spec.manifold_dims) total += d;
        out.push_back(check("whitney_sum", total == n && spec.stacked_condition < 1e6,
                            "dims sum " + std::to_string(total) + ", cond " +
                                num(spec.stacked_condition)));
    }
    {  // anchor independence
        SpectrumParams sp3 = cfg.spectrum_params();
        sp3.anchor_offset = 3.0;
        SpectralDecomposition spec3 = compute_spectrum(prop, range, sp3, dp);
        bool ok = spec.intervals.size() == spec3.intervals.size();
        double worst = 0.0;
        if (ok)
            for (size_t i = 0; i < spec.intervals.size(); ++i) {
                if (std::isfinite(spec.intervals[i].a))
                    worst = std::max(worst, std::abs(spec.intervals[i].a - spec3.intervals[i].a));
                if (std::isfinite(spec.intervals[i].b))
                    worst = std::max(worst, std::abs(spec.intervals[i].b - spec3.intervals[i].b));
            }
        ok = ok && worst <= 2.0 * cfg.endpoint_tol + 1e-12;
        out.push_back(check("anchor_independence", ok, "max endpoint shift " + num(worst)));
    }

    {  // factorization suite on this system's fundamental samples
        MatrixXd P0;
        if (resolvent) {
            DichotomyFit fit = an.test(*resolvent, false);
            if (fit.rank > 0 && fit.rank < n) {
                size_t i0 = 0;
                for (size_t i = 0; i < fit.projectors.anchors.size(); ++i)
                    if (std::abs(fit.projectors.anchors[i]) <
                        std::abs(fit.projectors.anchors[i0]))
                        i0 = i;
                P0 = fit.projectors.P[i0];
            }
        }
        if (P0.size() == 0) {
            P0 = MatrixXd::Zero(n, n);
            for (int i = 0; i < (n + 1) / 2; ++i) P0(i, i) = 1.0;  // arbitrary normal-form split
        }
        try {
            auto nf = normalize_fundamental(prop, 0.0, P0, 1e-6);
            std::vector<ScaledMatrix> X;
            std::vector<double> times;
            double lo = std::max(-25.0, cfg.window_lo / 2.0);
            double hi = std::min(25.0, cfg.window_hi / 2.0);
            for (double t = lo; t <= hi + 1e-9; t += (hi - lo) / 20.0) {
                X.push_back(nf.X(t));
                times.push_back(t);
            }
            auto polar = polar_factor(X, times, nf.N1);
            bool ok = polar.max_commutation_residual <= 1e-10 &&
                      polar.max_reconstruction_residual <= 1e-8 &&
                      polar.max_S_norm <= std::sqrt(2.0) + 1e-8 &&
                      polar.max_Sinv_excess <= 1e-6 && polar.max_projector_mismatch <= 1e-8;
            out.push_back(check("factorization_suite", ok,
                                "|S| max " + num(polar.max_S_norm) + ", recon " +
                                    num(polar.max_reconstruction_residual)));
        } catch (const Error& e) {
            out.push_back(check("factorization_suite", false, e.what()));
        }
    }

    {  // finite-difference refinement of the reduced coefficient
        auto R_at = [](double t) {
            BlockDiagonalSpd R;
            R.B1 = MatrixXd::Identity(1, 1);
            R.log1 = std::sin(2.0 * t);
            R.B2 = MatrixXd::Identity(1, 1);
            R.log2 = -t;
            return R;
        };
        double exact = 2.0 * std::cos(0.8);
        double e1 = std::abs(reduced_coefficient(R_at, {0.4}, 0.1)[0](0, 0) - exact);
        double e2 = std::abs(reduced_coefficient(R_at, {0.4}, 0.05)[0](0, 0) - exact);
        out.push_back(check("fd_refinement", e1 / e2 >= 3.5, "ratio " + num(e1 / e2)));
    }

    if (resolvent) {  // horizon stability
        DichotomyParams dp2 = dp;
        dp2.horizon = 2.0 * dp.horizon;
        DichotomyFit f1 = an.test(*resolvent, false);
        DichotomyFit f2 = test_nonuniform_dichotomy(prop, *resolvent, dp2);
        bool ok = f1.verdict == f2.verdict && std::abs(f1.alpha - f2.alpha) <= 0.02 &&
                  std::abs(f1.eps - f2.eps) <= 0.02;
        out.push_back(check("horizon_stability", ok,
                            "d_alpha " + num(std::abs(f1.alpha - f2.alpha)) + ", d_eps " +
                                num(std::abs(f1.eps - f2.eps))));
    }

    return out;
}

std::string verification_report_json(const RunConfig& cfg, const ReportMeta& meta,
                                     const std::vector<CheckResult>& checks) {
    json j = envelope_json(cfg, meta);
    json arr = json::array();
    for (const auto& c : checks) {
        json e;
        e["name"] = c.name;
        e["pass"] = c.pass;
        e["details"] = c.details;
        arr.push_back(e);
    }
    j["payload"] = {{"checks", arr}};
    return j.dump(2) + "\n";
}

}  // namespace ned
