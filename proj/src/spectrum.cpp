#include "ned/spectrum.hpp"

#include <algorithm>
#include <cmath>

#include "ned/parallel.hpp"

namespace ned {

std::string gamma_kind_name(GammaKind k) {
    switch (k) {
        case GammaKind::Resolvent: return "Resolvent";
        case GammaKind::Spectrum: return "Spectrum";
        case GammaKind::Inconclusive: return "Inconclusive";
    }
    return "?";
}

GammaClassification classify_gamma(const DichotomyAnalyzer& an, double gamma) {
    GammaClassification c;
    c.gamma = gamma;
    c.fit = an.test(gamma, false);
    switch (c.fit.verdict) {
        case Verdict::NED:
            c.kind = GammaKind::Resolvent;
            c.dim_S = c.fit.rank;
            break;
        case Verdict::NoNED:
            c.kind = GammaKind::Spectrum;
            break;
        case Verdict::Inconclusive:
            c.kind = GammaKind::Inconclusive;
            break;
    }
    return c;
}

GammaClassification classify_gamma(const Flow& flow, double gamma, const DichotomyParams& params) {
    DichotomyAnalyzer an(flow, params);
    return classify_gamma(an, gamma);
}

std::pair<double, double> search_interval_from_growth(const GrowthBound& bound, double pad) {
    if (!bound.feasible)
        throw Error("growth bound infeasible: pass an explicit gamma range for the search");
    return {-bound.a - pad, bound.a + pad};
}

namespace {

bool spectrumish(const GammaClassification& c) { return c.kind != GammaKind::Resolvent; }

std::vector<GammaClassification> classify_grid(const DichotomyAnalyzer& an,
                                               const std::vector<double>& gammas) {
    std::vector<GammaClassification> out(gammas.size());
    if (!gammas.empty()) out[0] = classify_gamma(an, gammas[0]);  // warm the caches once
    parallel_for(gammas.size(), [&](size_t i) {
        if (i > 0) out[i] = classify_gamma(an, gammas[i]);
    });
    return out;
}

// bisect between a point where pred holds and one where it fails
template <class Pred>
double bisect_boundary(const DichotomyAnalyzer& an, double g_true, double g_false, double tol,
                       Pred pred) {
    while (std::abs(g_false - g_true) > tol) {
        double mid = 0.5 * (g_true + g_false);
        GammaClassification c = classify_gamma(an, mid);
        if (pred(c))
            g_true = mid;
        else
            g_false = mid;
    }
    return 0.5 * (g_true + g_false);
}

MatrixXd orthonormal_image(const MatrixXd& P, bool complement) {
    const int n = (int)P.rows();
    MatrixXd M = complement ? MatrixXd(MatrixXd::Identity(n, n) - P) : P;
    Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullU);
    int r = 0;
    for (int i = 0; i < n; ++i)
        if (svd.singularValues()(i) > 0.5) ++r;
    return svd.matrixU().leftCols(r);
}

}  // namespace

MatrixXd subspace_intersection(const MatrixXd& U, const MatrixXd& S, double cos_tol) {
    if (U.cols() == 0 || S.cols() == 0) return MatrixXd(U.rows(), 0);
    Eigen::JacobiSVD<MatrixXd> svd(U.transpose() * S, Eigen::ComputeFullU);
    int r = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) >= cos_tol) ++r;
    return U * svd.matrixU().leftCols(r);
}

void spectral_manifold_bases(const DichotomyAnalyzer& an, SpectralDecomposition& decomp) {
    const int n = an.flow().dim();
    decomp.manifolds.clear();
    decomp.manifold_dims.clear();
    if (decomp.witnesses.empty()) return;

    // stable/unstable bases at the anchor nearest 0, from the witness projectors
    std::vector<MatrixXd> stable, unstable;
    for (double g : decomp.witnesses) {
        DichotomyFit fit = an.test(g, false);
        if (fit.verdict != Verdict::NED)
            throw DecompositionError("witness gamma = " + std::to_string(g) +
                                     " no longer classifies as resolvent");
        size_t i0 = 0;
        for (size_t i = 0; i < fit.projectors.anchors.size(); ++i)
            if (std::abs(fit.projectors.anchors[i]) < std::abs(fit.projectors.anchors[i0])) i0 = i;
        stable.push_back(orthonormal_image(fit.projectors.P[i0], false));
        unstable.push_back(orthonormal_image(fit.projectors.P[i0], true));
    }

    const size_t nw = decomp.witnesses.size();
    // W_0 = S_{gamma_0}
    decomp.manifolds.push_back(stable.front());
    // W_i = U_{gamma_{i-1}} cap S_{gamma_i}
    for (size_t i = 1; i < nw; ++i)
        decomp.manifolds.push_back(subspace_intersection(unstable[i - 1], stable[i]));
    // W_{n+1} = U_{gamma_n}
    decomp.manifolds.push_back(unstable.back());

    int total = 0;
    for (const auto& w : decomp.manifolds) {
        decomp.manifold_dims.push_back((int)w.cols());
        total += (int)w.cols();
    }
    if (total != n)
        throw DecompositionError("spectral manifold dimensions sum to " + std::to_string(total) +
                                 ", expected " + std::to_string(n));
    // interior intersections must match the interval data when both outer
    // witnesses exist (manifold i+1 belongs to interval i)
    if (decomp.manifolds.size() == decomp.intervals.size() + 2) {
        for (size_t i = 0; i < decomp.intervals.size(); ++i)
            if (decomp.manifold_dims[i + 1] != decomp.intervals[i].dim)
                throw DecompositionError("intersection dimension " +
                                         std::to_string(decomp.manifold_dims[i + 1]) +
                                         " mismatches interval dimension " +
                                         std::to_string(decomp.intervals[i].dim));
    }

    MatrixXd stacked(n, n);
    int col = 0;
    for (const auto& w : decomp.manifolds)
        for (int j = 0; j < w.cols(); ++j) stacked.col(col++) = w.col(j);
    decomp.stacked_condition = cond_number(stacked);
}

SpectralDecomposition compute_spectrum(const Flow& flow, std::pair<double, double> range,
                                       const SpectrumParams& sp, const DichotomyParams& dp_in) {
    DichotomyParams dp = dp_in;
    dp.anchor_offset += sp.anchor_offset;
    DichotomyAnalyzer an(flow, dp);
    const int n = flow.dim();

    SpectralDecomposition out;
    out.total_dimension = n;

    auto lattice = [&](double lo, double hi) {
        std::vector<double> g;
        long k0 = (long)std::ceil(lo / sp.coarse_step - 1e-9);
        long k1 = (long)std::floor(hi / sp.coarse_step + 1e-9);
        for (long k = k0; k <= k1; ++k) g.push_back(k * sp.coarse_step);
        if (g.empty() || g.front() > lo + 1e-12) g.insert(g.begin(), lo);
        if (g.back() < hi - 1e-12) g.push_back(hi);
        return g;
    };

    double lo = range.first, hi = range.second;
    std::vector<double> gammas = lattice(lo, hi);
    std::vector<GammaClassification> samples = classify_grid(an, gammas);

    // a spectrum-classified range endpoint may be truncation: extend once by 50%
    double width = hi - lo;
    bool left_infinite = false, right_infinite = false;
    if (spectrumish(samples.front())) {
        std::vector<double> ext = lattice(lo - 0.5 * width, lo - sp.coarse_step / 2);
        auto cls = classify_grid(an, ext);
        samples.insert(samples.begin(), cls.begin(), cls.end());
        if (spectrumish(samples.front())) {
            left_infinite = true;
            out.warnings.push_back("spectrum reaches the extended search boundary on the left; "
                                   "reporting a half-infinite interval");
        }
    }
    if (spectrumish(samples.back())) {
        std::vector<double> ext = lattice(hi + sp.coarse_step / 2, hi + 0.5 * width);
        auto cls = classify_grid(an, ext);
        samples.insert(samples.end(), cls.begin(), cls.end());
        if (spectrumish(samples.back())) {
            right_infinite = true;
            out.warnings.push_back("spectrum reaches the extended search boundary on the right; "
                                   "reporting a half-infinite interval");
        }
    }
    out.samples = samples;

    size_t inconclusive = 0;
    for (const auto& c : samples)
        if (c.kind == GammaKind::Inconclusive) ++inconclusive;
    if (inconclusive > sp.max_inconclusive_fraction * samples.size()) {
        out.low_confidence = true;
        out.warnings.push_back("more than " +
                               std::to_string((int)(100 * sp.max_inconclusive_fraction)) +
                               "% of scan samples are inconclusive");
    }

    // Interval discovery walks the resolvent samples: a spectrum component
    // lies between adjacent resolvent samples whenever one classifies as
    // spectrum in between or the stable dimension jumps (point components
    // narrower than the coarse step are invisible to the scan but force a
    // dimension jump across them).
    std::vector<size_t> res;
    for (size_t i = 0; i < samples.size(); ++i)
        if (samples[i].kind == GammaKind::Resolvent) res.push_back(i);

    auto spec_between = [&](size_t a, size_t b, bool from_left) -> std::optional<double> {
        if (from_left) {
            for (size_t i = a + 1; i < b; ++i)
                if (spectrumish(samples[i])) return samples[i].gamma;
        } else {
            for (size_t i = b; i-- > a + 1;)
                if (spectrumish(samples[i])) return samples[i].gamma;
        }
        return std::nullopt;
    };

    if (res.empty()) {
        out.low_confidence = true;
        out.warnings.push_back("no resolvent shift found in the search range");
        SpectralInterval iv;
        iv.a = left_infinite ? -std::numeric_limits<double>::infinity() : samples.front().gamma;
        iv.b = right_infinite ? std::numeric_limits<double>::infinity() : samples.back().gamma;
        iv.dim = n;
        out.intervals.push_back(iv);
        return out;
    }

    // leading spectrum block before the first resolvent sample
    if (auto g = spec_between((size_t)-1, res.front(), false)) {
        SpectralInterval iv;
        iv.a = left_infinite ? -std::numeric_limits<double>::infinity() : samples.front().gamma;
        iv.b = bisect_boundary(an, *g, samples[res.front()].gamma, sp.endpoint_tol,
                               [](const GammaClassification& c) { return spectrumish(c); });
        out.intervals.push_back(iv);
    }
    for (size_t t = 0; t + 1 < res.size(); ++t) {
        size_t p = res[t], q = res[t + 1];
        int dim_p = samples[p].dim_S, dim_q = samples[q].dim_S;
        auto first_spec = spec_between(p, q, true);
        if (!first_spec && dim_p == dim_q) continue;
        if (dim_q < dim_p) {
            out.low_confidence = true;
            out.warnings.push_back("stable dimension decreases across gamma = " +
                                   std::to_string(samples[p].gamma));
        }
        auto pred_left = [&](const GammaClassification& c) {
            return spectrumish(c) || (c.kind == GammaKind::Resolvent && c.dim_S >= dim_q &&
                                      dim_q > dim_p);
        };
        auto pred_right = [&](const GammaClassification& c) {
            return spectrumish(c) || (c.kind == GammaKind::Resolvent && c.dim_S <= dim_p &&
                                      dim_q > dim_p);
        };
        SpectralInterval iv;
        iv.a = bisect_boundary(an, first_spec ? *first_spec : samples[q].gamma,
                               samples[p].gamma, sp.endpoint_tol, pred_left);
        auto last_spec = spec_between(p, q, false);
        iv.b = bisect_boundary(an, last_spec ? *last_spec : samples[p].gamma,
                               samples[q].gamma, sp.endpoint_tol, pred_right);
        out.intervals.push_back(iv);
    }
    // trailing spectrum block after the last resolvent sample
    if (auto g = spec_between(res.back(), samples.size(), true)) {
        SpectralInterval iv;
        iv.a = bisect_boundary(an, *g, samples[res.back()].gamma, sp.endpoint_tol,
                               [](const GammaClassification& c) { return spectrumish(c); });
        iv.b = right_infinite ? std::numeric_limits<double>::infinity() : samples.back().gamma;
        out.intervals.push_back(iv);
    }

    if (out.intervals.empty()) {
        out.low_confidence = true;
        out.warnings.push_back("no spectrum detected in the search range; "
                               "finite scans cannot certify an empty spectrum");
        double mid = 0.5 * (lo + hi);
        GammaClassification c = classify_gamma(an, mid);
        if (c.kind == GammaKind::Resolvent) {
            out.witnesses.push_back(mid);
            out.witness_dims.push_back(c.dim_S);
            spectral_manifold_bases(an, out);
        }
        return out;
    }

    if ((int)out.intervals.size() > n) {
        out.low_confidence = true;
        out.warnings.push_back("more spectral intervals than the dimension allows; "
                               "treat the result as under-resolved");
    }

    // witnesses: midpoints of resolvent gaps, plus outer ones when finite
    auto witness_at = [&](double g) {
        GammaClassification c = classify_gamma(an, g);
        if (c.kind != GammaKind::Resolvent)
            throw DecompositionError("witness candidate gamma = " + std::to_string(g) +
                                     " is not resolvent");
        out.witnesses.push_back(g);
        out.witness_dims.push_back(c.dim_S);
    };
    if (!left_infinite) witness_at(out.intervals.front().a - 1.0);
    for (size_t i = 0; i + 1 < out.intervals.size(); ++i)
        witness_at(0.5 * (out.intervals[i].b + out.intervals[i + 1].a));
    if (!right_infinite) witness_at(out.intervals.back().b + 1.0);

    // manifold dimensions from the monotone stable-fiber dimensions: interval
    // i is bracketed by the witness dims w[i] (below) and w[i+1] (above), with
    // virtual values 0 left of a (-inf, b] component and N right of [a, +inf)
    for (size_t i = 0; i + 1 < out.witness_dims.size(); ++i)
        if (out.witness_dims[i] > out.witness_dims[i + 1]) {
            out.low_confidence = true;
            out.warnings.push_back("stable dimensions are not monotone across witnesses");
        }
    {
        std::vector<int> w;
        w.push_back(left_infinite ? 0
                                  : (out.witness_dims.empty() ? 0 : out.witness_dims.front()));
        size_t first_gap = left_infinite ? 0 : 1;
        for (size_t i = first_gap; i < out.witness_dims.size(); ++i)
            w.push_back(out.witness_dims[i]);
        if (right_infinite) w.push_back(n);
        if (w.size() == out.intervals.size() + 1) {
            for (size_t i = 0; i < out.intervals.size(); ++i)
                out.intervals[i].dim = w[i + 1] - w[i];
        } else {
            out.low_confidence = true;
            out.warnings.push_back("could not align witnesses with intervals");
        }
    }
    {
        int dim_sum = 0;
        if (!left_infinite && !out.witness_dims.empty()) dim_sum += out.witness_dims.front();
        for (const auto& iv : out.intervals) dim_sum += iv.dim;
        if (!right_infinite && !out.witness_dims.empty())
            dim_sum += n - out.witness_dims.back();
        if (dim_sum != n) {
            out.low_confidence = true;
            out.warnings.push_back("spectral-manifold dimensions do not sum to N");
        }
    }

    if (!out.witnesses.empty()) spectral_manifold_bases(an, out);
    return out;
}

SpectralDecomposition compute_spectrum_auto(const Flow& flow, const SpectrumParams& sp,
                                            const DichotomyParams& dp) {
    DichotomyAnalyzer an(flow, dp);
    GrowthBound g = an.growth_bound();
    return compute_spectrum(flow, search_interval_from_growth(g, sp.pad), sp, dp);
}

}  // namespace ned
