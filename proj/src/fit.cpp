#include "ned/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ned {

namespace {

constexpr double kLpTol = 1e-9;

struct LpRow {
    std::vector<double> a;
    double b;
};

// Seidel's algorithm, dimension <= 3. Box bounds guarantee boundedness.
std::optional<std::vector<double>> seidel(std::vector<LpRow> rows, std::vector<double> c,
                                          std::vector<double> lo, std::vector<double> hi,
                                          std::mt19937& rng) {
    const size_t d = c.size();
    if (d == 1) {
        double L = lo[0], H = hi[0];
        for (const auto& r : rows) {
            if (std::abs(r.a[0]) < 1e-13) {
                if (r.b < -kLpTol) return std::nullopt;
                continue;
            }
            double x = r.b / r.a[0];
            if (r.a[0] > 0)
                H = std::min(H, x);
            else
                L = std::max(L, x);
        }
        if (L > H + kLpTol) return std::nullopt;
        H = std::max(H, L);
        double x = (c[0] > 0) ? L : (c[0] < 0 ? H : L);
        return std::vector<double>{x};
    }

    std::vector<double> x(d);
    for (size_t j = 0; j < d; ++j) x[j] = (c[j] > 0) ? lo[j] : (c[j] < 0 ? hi[j] : lo[j]);

    std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<LpRow> seen;
    seen.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const LpRow& r = rows[i];
        double lhs = std::inner_product(r.a.begin(), r.a.end(), x.begin(), 0.0);
        double scale = 1.0;
        for (double v : r.a) scale = std::max(scale, std::abs(v));
        if (lhs <= r.b + kLpTol * scale) {
            seen.push_back(r);
            continue;
        }
        // Optimum lies on this hyperplane: eliminate the variable with the
        // largest coefficient and recurse on the remaining ones.
        size_t piv = 0;
        for (size_t j = 1; j < d; ++j)
            if (std::abs(r.a[j]) > std::abs(r.a[piv])) piv = j;
        if (std::abs(r.a[piv]) < 1e-13) return std::nullopt;

        auto reduce = [&](const std::vector<double>& a, double b) {
            // substitute x[piv] = (r.b - sum_{j != piv} r.a[j] x_j) / r.a[piv]
            std::vector<double> an;
            double coef = a[piv] / r.a[piv];
            for (size_t j = 0; j < d; ++j)
                if (j != piv) an.push_back(a[j] - coef * r.a[j]);
            return LpRow{an, b - coef * r.b};
        };

        std::vector<LpRow> sub;
        sub.reserve(seen.size() + 2);
        for (const auto& s : seen) sub.push_back(reduce(s.a, s.b));
        {
            std::vector<double> e(d, 0.0);
            e[piv] = 1.0;
            sub.push_back(reduce(e, hi[piv]));  // x_piv <= hi
            for (auto& v : e) v = -v;
            sub.push_back(reduce(e, -lo[piv]));  // -x_piv <= -lo
        }
        std::vector<double> cs, los, his;
        double ccoef = c[piv] / r.a[piv];
        for (size_t j = 0; j < d; ++j)
            if (j != piv) {
                cs.push_back(c[j] - ccoef * r.a[j]);
                los.push_back(lo[j]);
                his.push_back(hi[j]);
            }
        auto sol = seidel(sub, cs, los, his, rng);
        if (!sol) return std::nullopt;
        std::vector<double> xn(d);
        size_t t = 0;
        for (size_t j = 0; j < d; ++j)
            if (j != piv) xn[j] = (*sol)[t++];
        double acc = r.b;
        for (size_t j = 0; j < d; ++j)
            if (j != piv) acc -= r.a[j] * xn[j];
        xn[piv] = acc / r.a[piv];
        x = xn;
        seen.push_back(r);
    }
    return x;
}

double envelope_log_K(const std::vector<EnvelopeSample>& samples, double alpha, double eps) {
    double k = 0.0;  // K >= 1
    for (const auto& s : samples) k = std::max(k, s.L + alpha * s.d - eps * s.u);
    return k;
}

// minimize logK + w*eps s.t. logK >= q_i - u_i * eps, logK >= 0, eps in [0, cap];
// ties broken toward the smallest eps. Returns (logK, eps).
std::pair<double, double> min_prefactor_vs_eps(const std::vector<std::pair<double, double>>& q_u,
                                               double w, double cap) {
    LinearProgram lp;
    lp.c = {1.0, w};
    lp.lo = {0.0, 0.0};
    lp.hi = {1e7, cap};
    for (const auto& [q, u] : q_u) {
        lp.A.push_back({-1.0, -u});
        lp.b.push_back(-q);
    }
    auto x = solve_lp(lp);
    if (!x) throw Error("envelope subproblem unexpectedly infeasible");
    double vstar = (*x)[0] + w * (*x)[1];
    // canonical representative: smallest eps on the optimal face
    LinearProgram lp2 = lp;
    lp2.c = {0.0, 1.0};
    lp2.A.push_back({1.0, w});
    lp2.b.push_back(vstar + 1e-10 * (1.0 + std::abs(vstar)));
    auto x2 = solve_lp(lp2);
    if (x2) {
        double eps = (*x2)[1];
        double k = 0.0;
        for (const auto& [q, u] : q_u) k = std::max(k, q - u * eps);
        return {k, eps};
    }
    return {(*x)[0], (*x)[1]};
}

}  // namespace

std::optional<std::vector<double>> solve_lp(const LinearProgram& lp) {
    std::vector<LpRow> rows;
    rows.reserve(lp.A.size());
    for (size_t i = 0; i < lp.A.size(); ++i) rows.push_back({lp.A[i], lp.b[i]});
    std::mt19937 rng(0x9e3779b9u);
    return seidel(std::move(rows), lp.c, lp.lo, lp.hi, rng);
}

EnvelopeFit fit_envelope_constants(const std::vector<EnvelopeSample>& samples,
                                   const EnvelopeFitParams& p) {
    if ((int)samples.size() < p.min_samples_per_branch)
        throw InsufficientDataError("envelope fit needs at least " +
                                    std::to_string(p.min_samples_per_branch) + " samples, got " +
                                    std::to_string(samples.size()));

    // Stage 1: minimize log K + w*eps at the rate floor; the objective is
    // monotone in alpha so the optimum of the full program sits there.
    double eps_free = 0.0;
    {
        std::vector<std::pair<double, double>> q_u;
        q_u.reserve(samples.size());
        for (const auto& s : samples) q_u.emplace_back(s.L + p.alpha_min * s.d, s.u);
        auto [k, e] = min_prefactor_vs_eps(q_u, p.eps_weight, p.eps_max);
        (void)k;
        eps_free = e;
    }
    double eps_hat = p.force_uniform ? 0.0 : eps_free;

    // Stage 2: largest decay rate certifiable while the prefactor stays
    // within the nonuniformity allowance at the anchor extent. The prefactor
    // budget is anchored at the smallest |s| so that far-anchor transients
    // cannot subsidize the rate: growth visible at the anchor core must
    // push the fit onto the infeasible side.
    double u_min = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) u_min = std::min(u_min, s.u);
    double log_K0 = 0.0;
    for (const auto& s : samples)
        if (s.u <= u_min + 1e-12) log_K0 = std::max(log_K0, s.L + p.alpha_min * s.d);
    double cap = log_K0 + eps_hat * p.headroom_u;
    double alpha = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) alpha = std::min(alpha, (cap - s.L + eps_hat * s.u) / s.d);
    alpha = std::max(alpha, p.alpha_min);

    EnvelopeFit fit;
    fit.alpha = alpha;
    fit.eps = eps_hat;
    fit.log_K = envelope_log_K(samples, alpha, eps_hat);
    fit.margin = fit.alpha - fit.eps;
    fit.uniform = p.force_uniform;
    fit.objective = envelope_log_K(samples, p.alpha_min, eps_hat) + p.eps_weight * eps_hat;
    // strict margin with a relative guard: the boundary case (the same sample
    // pinning both stages) must land on the infeasible side deterministically
    fit.feasible = fit.margin > p.margin_tol * (1.0 + 1e-6) + 1e-12;
    // a forced-uniform envelope is a misfit when the data demands genuine
    // nonuniformity: the absorbed prefactor masks it on any fixed window
    if (p.force_uniform && eps_free > p.eps_uniform_tol) fit.feasible = false;
    fit.max_residual = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples)
        fit.max_residual =
            std::max(fit.max_residual, s.L - (fit.log_K - fit.alpha * s.d + fit.eps * s.u));
    return fit;
}

AffineBoundFit fit_affine_bound(const std::vector<std::pair<double, double>>& u_L, double w,
                                double eps_cap) {
    std::vector<std::pair<double, double>> q_u;
    q_u.reserve(u_L.size());
    for (const auto& [u, L] : u_L) q_u.emplace_back(L, u);
    auto [m, eps] = min_prefactor_vs_eps(q_u, w, eps_cap);
    return {m, eps};
}

GrowthFitResult fit_growth_bound(const std::vector<EnvelopeSample>& samples, double w,
                                 double eps_cap, double a_cap) {
    LinearProgram lp;
    lp.c = {1.0, w, w};  // (log K, a, eps)
    lp.lo = {0.0, 0.0, 0.0};
    lp.hi = {1e7, a_cap, eps_cap};
    for (const auto& s : samples) {
        // L <= k + a d + eps u  <=>  -k - a d - eps u <= -L
        lp.A.push_back({-1.0, -s.d, -s.u});
        lp.b.push_back(-s.L);
    }
    auto x = solve_lp(lp);
    GrowthFitResult r;
    if (!x) return r;
    r.a = (*x)[1];
    r.eps = (*x)[2];
    r.feasible = r.a < a_cap - 1e-9;
    // tighten K onto the data for exact post-hoc feasibility
    double k = 0.0;
    for (const auto& s : samples) k = std::max(k, s.L - r.a * s.d - r.eps * s.u);
    r.log_K = k;
    return r;
}

}  // namespace ned
