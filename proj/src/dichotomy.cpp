#include "ned/dichotomy.hpp"

#include <algorithm>
#include <cmath>

namespace ned {

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::NED: return "NED";
        case Verdict::NoNED: return "NoNED";
        case Verdict::Inconclusive: return "Inconclusive";
    }
    return "?";
}

std::vector<double> DichotomyParams::anchors() const {
    double half = std::min(anchor_halfwidth_max, horizon / 2.0);
    std::vector<double> out;
    out.reserve(anchor_count);
    if (anchor_count == 1) {
        out.push_back(anchor_offset);
        return out;
    }
    for (int i = 0; i < anchor_count; ++i)
        out.push_back(anchor_offset - half + 2.0 * half * i / (anchor_count - 1));
    return out;
}

std::vector<double> DichotomyParams::horizons() const {
    std::vector<double> out;
    double T = horizon;
    for (int i = 0; i < horizon_levels; ++i, T *= 2.0) out.push_back(T);
    return out;
}

namespace {

double min_principal_angle(const MatrixXd& S, const MatrixXd& U) {
    if (S.cols() == 0 || U.cols() == 0) return M_PI / 2;
    double c = spectral_norm(S.transpose() * U);
    return std::acos(std::min(1.0, std::max(-1.0, c)));
}

struct Claims {
    int k_stable = 0, k_unstable = 0;
    bool inband = false;
};

Claims count_claims(const VectorXd& mu_fwd, const VectorXd& mu_bwd, double gamma,
                    double dead_band, int forced_rank) {
    Claims c;
    const int n = (int)mu_fwd.size();
    for (int j = 0; j < n; ++j) {
        double mf = mu_fwd(j) - gamma;
        double mb = mu_bwd(j) + gamma;
        if (mf < -dead_band) ++c.k_stable;
        if (mb < -dead_band) ++c.k_unstable;
        if (std::abs(mf) <= dead_band || std::abs(mb) <= dead_band) c.inband = true;
    }
    if (forced_rank >= 0) {
        c.k_stable = forced_rank;
        c.k_unstable = n - forced_rank;
        c.inband = false;
    }
    return c;
}

}  // namespace

SplittingEstimate estimate_splitting(const Flow& flow, double gamma, double horizon,
                                     const std::vector<double>& anchors, double dead_band,
                                     int forced_rank) {
    const int n = flow.dim();
    SplittingEstimate est;
    est.gamma = gamma;
    est.horizon = horizon;
    est.dead_band = dead_band;
    est.anchors = anchors;
    est.min_principal_angle = M_PI / 2;

    int rank = -2;
    bool ok = true;
    size_t anchor0 = 0;
    for (size_t i = 0; i < anchors.size(); ++i)
        if (std::abs(anchors[i]) < std::abs(anchors[anchor0])) anchor0 = i;

    for (size_t i = 0; i < anchors.size(); ++i) {
        double s = anchors[i];
        DirectionData fwd = flow.direction_data(s, horizon);
        DirectionData bwd = flow.direction_data(s, -horizon);

        Claims c = count_claims(fwd.mu, bwd.mu, gamma, dead_band, forced_rank);
        if (c.inband || c.k_stable + c.k_unstable != n) {
            est.ambiguous = true;
            ok = false;
        }
        if (rank == -2)
            rank = c.k_stable;
        else if (rank != c.k_stable)
            ok = false;

        // stable fiber: orthocomplement of the dominant forward frame;
        // unstable fiber: orthocomplement of the dominant backward frame
        est.stable_basis.push_back(fwd.V.rightCols(std::min(c.k_stable, n)));
        est.unstable_basis.push_back(bwd.V.rightCols(std::min(c.k_unstable, n)));
        est.min_principal_angle =
            std::min(est.min_principal_angle,
                     min_principal_angle(est.stable_basis.back(), est.unstable_basis.back()));
        if (i == anchor0) {
            est.exponents = fwd.mu;
            for (int j = 0; j < n; ++j) est.exponents(j) -= gamma;
        }
    }
    est.consistent = ok;
    est.rank = ok ? rank : -1;
    return est;
}

ProjectorFamily build_projector_family(const SplittingEstimate& split, double angle_tol) {
    if (!split.consistent)
        throw SplittingError("cannot build projectors from an inconsistent splitting");
    ProjectorFamily fam;
    fam.anchors = split.anchors;
    fam.min_principal_angle = split.min_principal_angle;
    if (split.min_principal_angle < angle_tol)
        throw SplittingError("ill-conditioned splitting: principal angle " +
                             std::to_string(split.min_principal_angle));
    const int n = (int)(split.stable_basis[0].rows());
    for (size_t i = 0; i < split.anchors.size(); ++i) {
        const MatrixXd& S = split.stable_basis[i];
        const MatrixXd& U = split.unstable_basis[i];
        int k = (int)S.cols();
        MatrixXd B(n, n);
        if (k > 0) B.leftCols(k) = S;
        if (k < n) B.rightCols(n - k) = U;
        MatrixXd Pk = MatrixXd::Zero(n, n);
        for (int j = 0; j < k; ++j) Pk(j, j) = 1.0;
        MatrixXd P = B * Pk * B.inverse();
        fam.max_idempotency_residual =
            std::max(fam.max_idempotency_residual, spectral_norm(P * P - P));
        fam.P.push_back(std::move(P));
    }
    return fam;
}

double projector_invariance_residual(const Flow& flow, const ProjectorFamily& family) {
    double worst = 0.0;
    const size_t n = family.anchors.size();
    for (size_t i = 0; i < n; ++i) {
        for (size_t step : {(size_t)1, (size_t)5, (size_t)16}) {
            if (i + step >= n) continue;
            size_t j = i + step;
            ScaledMatrix phi = flow.flow(family.anchors[i], family.anchors[j]);
            MatrixXd m = phi.unit();
            double denom = std::max(1e-300, spectral_norm(m));
            double r = spectral_norm(family.P[j] * m - m * family.P[i]) / denom;
            worst = std::max(worst, r);
        }
    }
    return worst;
}

VectorXd correct_exponents(const std::vector<double>& lengths,
                           const std::vector<VectorXd>& exponents_per_length,
                           double* max_residual) {
    const size_t m = lengths.size();
    const int n = (int)exponents_per_length[0].size();
    VectorXd out(n);
    if (max_residual) *max_residual = 0.0;
    if (m < 3) {
        out = exponents_per_length.back();
        if (max_residual) *max_residual = std::numeric_limits<double>::infinity();
        return out;
    }
    MatrixXd A(m, 3);
    for (size_t i = 0; i < m; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = std::log(lengths[i]) / lengths[i];
        A(i, 2) = 1.0 / lengths[i];
    }
    auto qr = A.colPivHouseholderQr();
    for (int j = 0; j < n; ++j) {
        VectorXd y(m);
        for (size_t i = 0; i < m; ++i) y(i) = exponents_per_length[i](j);
        VectorXd coef = qr.solve(y);
        out(j) = coef(0);
        if (max_residual)
            *max_residual = std::max(*max_residual, (y - A * coef).cwiseAbs().maxCoeff());
    }
    return out;
}

// ---------------------------------------------------------------------------

DichotomyAnalyzer::DichotomyAnalyzer(const Flow& flow, DichotomyParams params)
    : flow_(flow), params_(std::move(params)), anchors_(params_.anchors()) {
    levels_.resize(params_.horizon_levels);
}

const DichotomyAnalyzer::LevelData& DichotomyAnalyzer::level(int idx) const {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (levels_[idx]) return *levels_[idx];
    }
    auto lv = std::make_unique<LevelData>();
    lv->T = params_.horizons()[idx];
    lv->fwd.reserve(anchors_.size());
    lv->bwd.reserve(anchors_.size());
    for (double s : anchors_) {
        lv->fwd.push_back(flow_.direction_data(s, lv->T));
        lv->bwd.push_back(flow_.direction_data(s, -lv->T));
    }
    std::lock_guard<std::mutex> lock(mutex_);
    if (!levels_[idx]) levels_[idx] = std::move(lv);
    return *levels_[idx];
}

const DichotomyAnalyzer::CorrectedData& DichotomyAnalyzer::corrected() const {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (corrected_) return *corrected_;
    }
    auto cd = std::make_unique<CorrectedData>();
    cd->max_residual = 0.0;
    std::vector<const LevelData*> lvs;
    for (int l = 0; l < params_.horizon_levels; ++l) lvs.push_back(&level(l));
    for (size_t i = 0; i < anchors_.size(); ++i) {
        std::vector<double> len_f, len_b;
        std::vector<VectorXd> mu_f, mu_b;
        for (const auto* lv : lvs) {
            len_f.push_back(std::abs(lv->T - anchors_[i]));
            len_b.push_back(std::abs(-lv->T - anchors_[i]));
            mu_f.push_back(lv->fwd[i].mu);
            mu_b.push_back(lv->bwd[i].mu);
        }
        double rf = 0.0, rb = 0.0;
        cd->fwd.push_back(correct_exponents(len_f, mu_f, &rf));
        cd->bwd.push_back(correct_exponents(len_b, mu_b, &rb));
        cd->max_residual = std::max({cd->max_residual, rf, rb});
    }
    std::lock_guard<std::mutex> lock(mutex_);
    if (!corrected_) corrected_ = std::move(cd);
    return *corrected_;
}

// consistency of one raw level at the given shift: equal complete claims at
// every anchor, nothing inside the dead band, transversal bases
int DichotomyAnalyzer::consistent_rank(const LevelData& lv, double gamma) const {
    const int n = flow_.dim();
    int rank = -2;
    for (size_t i = 0; i < anchors_.size(); ++i) {
        Claims c = count_claims(lv.fwd[i].mu, lv.bwd[i].mu, gamma, params_.dead_band,
                                params_.forced_rank);
        if (c.inband || c.k_stable + c.k_unstable != n) return -1;
        if (rank == -2) rank = c.k_stable;
        if (rank != c.k_stable) return -1;
        double angle = min_principal_angle(lv.fwd[i].V.rightCols(c.k_stable),
                                           lv.bwd[i].V.rightCols(c.k_unstable));
        if (angle < params_.splitting_angle_min) return -1;
    }
    return rank;
}

SplittingEstimate DichotomyAnalyzer::assemble(const LevelData& lv, double gamma, int rank) const {
    const int n = flow_.dim();
    SplittingEstimate est;
    est.gamma = gamma;
    est.horizon = lv.T;
    est.dead_band = params_.dead_band;
    est.anchors = anchors_;
    est.rank = rank;
    est.consistent = true;
    est.min_principal_angle = M_PI / 2;
    size_t anchor0 = 0;
    for (size_t i = 0; i < anchors_.size(); ++i)
        if (std::abs(anchors_[i]) < std::abs(anchors_[anchor0])) anchor0 = i;
    for (size_t i = 0; i < anchors_.size(); ++i) {
        est.stable_basis.push_back(lv.fwd[i].V.rightCols(rank));
        est.unstable_basis.push_back(lv.bwd[i].V.rightCols(n - rank));
        est.min_principal_angle =
            std::min(est.min_principal_angle,
                     min_principal_angle(est.stable_basis.back(), est.unstable_basis.back()));
    }
    est.exponents = lv.fwd[anchor0].mu;
    for (int j = 0; j < n; ++j) est.exponents(j) -= gamma;
    return est;
}

const DichotomyAnalyzer::BranchNorms& DichotomyAnalyzer::branch_norms(int level_idx,
                                                                      int rank) const {
    std::pair<int, int> key{level_idx, rank};
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = norm_cache_.find(key);
        if (it != norm_cache_.end()) return it->second;
    }
    const LevelData& lv = level(level_idx);
    const int n = flow_.dim();
    ProjectorFamily fam;
    {
        SplittingEstimate est = assemble(lv, 0.0, rank);
        fam = build_projector_family(est, params_.angle_tol);
        std::lock_guard<std::mutex> lock(mutex_);
        family_cache_.emplace(key, fam);
    }
    BranchNorms bn;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    {
        // phase-matched core samples for the growth gate
        size_t i0 = 0;
        for (size_t i = 0; i < anchors_.size(); ++i)
            if (std::abs(anchors_[i]) < std::abs(anchors_[i0])) i0 = i;
        double s0 = anchors_[i0];
        MatrixXd S0 = lv.fwd[i0].V.rightCols(rank);
        MatrixXd U0 = lv.bwd[i0].V.rightCols(n - rank);
        MatrixXd B0(n, n);
        if (rank > 0) B0.leftCols(rank) = S0;
        if (rank < n) B0.rightCols(n - rank) = U0;
        MatrixXd B0inv = B0.inverse();
        const double two_pi = 2.0 * M_PI;
        for (double d0 : params_.gate_offsets) {
            std::vector<double> gp, gq;
            for (int j = 0; j < params_.gate_phases; ++j) {
                double val = nan;
                double tp = s0 + d0 + two_pi * j;
                if (rank > 0 && tp <= params_.window_hi + 1e-12) {
                    ScaledMatrix W = flow_.apply(s0, tp, S0);
                    double nrm = spectral_norm(W.unit() * B0inv.topRows(rank));
                    double L = nrm > 0 ? std::log(nrm) + (double)W.log_scale : -1e300;
                    if (L >= flow_.flow(s0, tp).log_norm() - params_.floor_drop) val = L;
                }
                gp.push_back(val);
                val = nan;
                double tq = s0 - d0 - two_pi * j;
                if (rank < n && tq >= params_.window_lo - 1e-12) {
                    ScaledMatrix W = flow_.apply(s0, tq, U0);
                    double nrm = spectral_norm(W.unit() * B0inv.bottomRows(n - rank));
                    double L = nrm > 0 ? std::log(nrm) + (double)W.log_scale : -1e300;
                    if (L >= flow_.flow(s0, tq).log_norm() - params_.floor_drop) val = L;
                }
                gq.push_back(val);
            }
            bn.gate_P.push_back(std::move(gp));
            bn.gate_Q.push_back(std::move(gq));
        }
    }
    for (size_t i = 0; i < anchors_.size(); ++i) {
        double s = anchors_[i];
        MatrixXd S = lv.fwd[i].V.rightCols(rank);
        MatrixXd U = lv.bwd[i].V.rightCols(n - rank);
        MatrixXd B(n, n);
        if (rank > 0) B.leftCols(rank) = S;
        if (rank < n) B.rightCols(n - rank) = U;
        MatrixXd Binv = B.inverse();
        for (double d : params_.offsets) {
            double tp = s + d;
            double val = nan;
            if (rank > 0 && tp <= params_.window_hi + 1e-12) {
                // |Phi P| = |(Phi S) C| with C the stable coordinate rows
                ScaledMatrix W = flow_.apply(s, tp, S);
                double nrm = spectral_norm(W.unit() * Binv.topRows(rank));
                double L = nrm > 0 ? std::log(nrm) + (double)W.log_scale : -1e300;
                double top = flow_.flow(s, tp).log_norm();
                if (L >= top - params_.floor_drop) val = L;
            }
            bn.P.push_back(val);
            val = nan;
            double tq = s - d;
            if (rank < n && tq >= params_.window_lo - 1e-12) {
                ScaledMatrix W = flow_.apply(s, tq, U);
                double nrm = spectral_norm(W.unit() * Binv.bottomRows(n - rank));
                double L = nrm > 0 ? std::log(nrm) + (double)W.log_scale : -1e300;
                double top = flow_.flow(s, tq).log_norm();
                if (L >= top - params_.floor_drop) val = L;
            }
            bn.Q.push_back(val);
        }
    }
    std::lock_guard<std::mutex> lock(mutex_);
    return norm_cache_.emplace(key, std::move(bn)).first->second;
}

bool DichotomyAnalyzer::core_growth(const BranchNorms& bn, double gamma) const {
    const double two_pi = 2.0 * M_PI;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& phases : bn.gate_P)
        for (size_t j = 0; j + 1 < phases.size(); ++j) {
            if (!std::isfinite(phases[j]) || !std::isfinite(phases[j + 1])) continue;
            worst = std::max(worst, (phases[j + 1] - phases[j]) / two_pi - gamma);
        }
    for (const auto& phases : bn.gate_Q)
        for (size_t j = 0; j + 1 < phases.size(); ++j) {
            if (!std::isfinite(phases[j]) || !std::isfinite(phases[j + 1])) continue;
            worst = std::max(worst, (phases[j + 1] - phases[j]) / two_pi + gamma);
        }
    return worst > params_.gate_tol;
}

DichotomyFit DichotomyAnalyzer::test(double gamma, bool force_uniform) const {
    const int n = flow_.dim();
    DichotomyFit fit;
    fit.gamma = gamma;
    fit.uniform = force_uniform;

    // Corrected-first: when the log-polynomial model explains every finite-
    // horizon exponent, its limits drive the rank (rescues poly-growth
    // blocks); residual failure falls back to the raw escalation ladder.
    int use_level = -1, rank = -1;
    bool corrected_path = false;
    const CorrectedData& cd = corrected();
    if (cd.max_residual <= params_.corrected_resid_tol && params_.forced_rank < 0) {
        int r = -2;
        bool ok = true;
        for (size_t i = 0; i < anchors_.size() && ok; ++i) {
            Claims c = count_claims(cd.fwd[i], cd.bwd[i], gamma, params_.dead_band, -1);
            if (c.inband || c.k_stable + c.k_unstable != n) ok = false;
            if (r == -2) r = c.k_stable;
            if (r != c.k_stable) ok = false;
        }
        if (ok) {
            rank = r;
            use_level = params_.horizon_levels - 1;
            corrected_path = true;
        }
    }
    if (!corrected_path) {
        for (int l = 0; l < params_.horizon_levels; ++l) {
            int r = consistent_rank(level(l), gamma);
            if (r >= 0) {
                if (use_level >= 0 && rank != r)
                    fit.note = "rank changed across consistent horizons; largest horizon used";
                use_level = l;
                rank = r;
            }
        }
    }
    if (use_level < 0) {
        fit.verdict = Verdict::NoNED;
        fit.note = "splitting ambiguity persists across horizon doublings";
        fit.horizon_used = params_.horizons().back();
        return fit;
    }

    const LevelData& lv = level(use_level);
    fit.horizon_used = lv.T;
    fit.rank = rank;
    {
        size_t anchor0 = 0;
        for (size_t i = 0; i < anchors_.size(); ++i)
            if (std::abs(anchors_[i]) < std::abs(anchors_[anchor0])) anchor0 = i;
        fit.exponents = cd.fwd[anchor0];
        for (int j = 0; j < n; ++j) fit.exponents(j) -= gamma;
        std::sort(fit.exponents.data(), fit.exponents.data() + n, std::greater<double>());
    }

    const BranchNorms& bn = branch_norms(use_level, rank);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        fit.projectors = family_cache_.at({use_level, rank});
    }
    fit.min_principal_angle = fit.projectors.min_principal_angle;

    size_t idx = 0;
    for (size_t i = 0; i < anchors_.size(); ++i) {
        double u = std::abs(anchors_[i]);
        for (double d : params_.offsets) {
            if (std::isfinite(bn.P[idx])) fit.samples_P.push_back({d, u, bn.P[idx] - gamma * d});
            if (std::isfinite(bn.Q[idx])) fit.samples_Q.push_back({d, u, bn.Q[idx] + gamma * d});
            ++idx;
        }
    }

    EnvelopeFitParams ep;
    ep.eps_weight = params_.eps_weight;
    ep.alpha_min = params_.alpha_min;
    ep.eps_max = params_.eps_max;
    ep.margin_tol = params_.margin_tol;
    ep.headroom_u = std::min(params_.anchor_halfwidth_max, params_.horizon / 2.0);

    std::vector<EnvelopeSample> all = fit.samples_P;
    all.insert(all.end(), fit.samples_Q.begin(), fit.samples_Q.end());

    ep.eps_uniform_tol = params_.eps_uniform_tol;
    EnvelopeFit free_fit = fit_envelope_constants(all, ep);
    fit.eps_free = free_fit.eps;

    EnvelopeFit used = free_fit;
    if (force_uniform) {
        ep.force_uniform = true;
        used = fit_envelope_constants(all, ep);
    }
    if (corrected_path) {
        // The certified exponent limits bound the decay rate directly; the
        // window-local prefactor (polynomial transients included) moves into
        // K. Without this, a sample that pins both LP stages leaves the rate
        // stuck at its floor even for genuinely hyperbolic shifts.
        double clearance = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < anchors_.size(); ++i)
            for (int j = 0; j < n; ++j) {
                double mf = cd.fwd[i](j) - gamma;
                if (mf < -params_.dead_band) clearance = std::min(clearance, -mf);
                double mb = cd.bwd[i](j) + gamma;
                if (mb < -params_.dead_band) clearance = std::min(clearance, -mb);
            }
        if (std::isfinite(clearance) && clearance > used.alpha) {
            used.alpha = clearance;
            double k = 0.0;
            for (const auto& s : all) k = std::max(k, s.L + used.alpha * s.d - used.eps * s.u);
            used.log_K = k;
            used.margin = used.alpha - used.eps;
            used.feasible = used.margin > params_.margin_tol * (1.0 + 1e-6) + 1e-12;
            used.max_residual = -std::numeric_limits<double>::infinity();
            for (const auto& s : all)
                used.max_residual = std::max(
                    used.max_residual, s.L - (used.log_K - used.alpha * s.d + used.eps * s.u));
        }
    }
    if (!corrected_path && used.feasible && core_growth(bn, gamma)) {
        used.feasible = false;
        fit.note = "phase-matched core samples grow at this shift";
    }
    if (force_uniform && free_fit.eps > params_.eps_uniform_tol) used.feasible = false;
    fit.K = std::exp(used.log_K);
    fit.alpha = used.alpha;
    fit.eps = used.eps;
    fit.margin = used.margin;
    fit.max_envelope_residual = used.max_residual;
    fit.verdict = used.feasible ? Verdict::NED : Verdict::NoNED;
    if (fit.verdict == Verdict::NED)
        fit.invariance_residual = projector_invariance_residual(flow_, fit.projectors);
    return fit;
}

GrowthBound DichotomyAnalyzer::growth_bound() const {
    std::vector<EnvelopeSample> samples;
    for (double s : anchors_) {
        for (double d : params_.offsets) {
            for (double t : {s + d, s - d}) {
                if (t < params_.window_lo - 1e-12 || t > params_.window_hi + 1e-12) continue;
                double L = flow_.flow(s, t).log_norm();
                if (!std::isfinite(L)) continue;
                samples.push_back({d, std::abs(s), L});
            }
        }
    }
    if (samples.size() < 4) throw InsufficientDataError("growth bound needs at least 4 samples");
    GrowthFitResult r = fit_growth_bound(samples, params_.eps_weight, params_.eps_max);
    GrowthBound g;
    g.K = std::exp(r.log_K);
    g.a = r.a;
    g.eps = r.eps;
    g.feasible = r.feasible;
    return g;
}

DichotomyFit test_nonuniform_dichotomy(const Flow& flow, double gamma,
                                       const DichotomyParams& params) {
    DichotomyAnalyzer an(flow, params);
    return an.test(gamma, false);
}

DichotomyFit test_uniform_dichotomy(const Flow& flow, double gamma,
                                    const DichotomyParams& params) {
    DichotomyAnalyzer an(flow, params);
    return an.test(gamma, true);
}

GrowthBound check_exponential_boundedness(const Flow& flow, const DichotomyParams& params) {
    DichotomyAnalyzer an(flow, params);
    return an.growth_bound();
}

}  // namespace ned
