#pragma once

#include <optional>
#include <vector>

#include "ned/types.hpp"

namespace ned {

// One log-norm sample of a dichotomy branch: separation d = |t-s| > 0,
// anchor weight u = |s| >= 0, and L = log of the sampled operator norm.
struct EnvelopeSample {
    double d = 0.0;
    double u = 0.0;
    double L = 0.0;
};

struct EnvelopeFitParams {
    double eps_weight = 10.0;  // objective weight on the nonuniformity rate
    double alpha_min = 1e-3;
    double eps_max = 5.0;
    double margin_tol = 1e-3;
    double headroom_u = 25.0;  // anchor extent used for the rate-certification budget
    bool force_uniform = false;
    // a uniform fit is infeasible when the unconstrained fit needs more
    // nonuniformity than this
    double eps_uniform_tol = 5e-3;
    int min_samples_per_branch = 4;
};

// Fitted envelope constants for |Phi(t,s) P| <= K e^{-alpha(t-s)} e^{eps|s|}
// (and the mirrored backward branch). margin = alpha - eps.
struct EnvelopeFit {
    double log_K = 0.0;
    double alpha = 0.0;
    double eps = 0.0;
    double margin = 0.0;
    // definition satisfiable with the fitted constants (eps < alpha - margin_tol)
    bool feasible = false;
    // largest constraint violation of the returned constants over the samples
    double max_residual = 0.0;
    bool uniform = false;
    // best objective value of the first-stage problem (log K + w eps)
    double objective = 0.0;
};

// Minimize log K + w*eps subject to L_i <= log K - alpha d_i + eps u_i for
// every sample, K >= 1, alpha >= alpha_min, 0 <= eps <= eps_max; among
// optimal points the smallest eps is taken, and alpha is then pushed to the
// largest rate certifiable within a prefactor budget of log K + eps*headroom_u.
EnvelopeFit fit_envelope_constants(const std::vector<EnvelopeSample>& samples,
                                   const EnvelopeFitParams& params);

// Affine bound fit: minimize log M + w*eps with L_j <= log M + eps u_j,
// M >= 1, eps in [0, eps_cap]. Used for Lyapunov-type bounds |S(t)| <= M e^{eps|t|}.
struct AffineBoundFit {
    double log_M = 0.0;
    double eps = 0.0;
};
AffineBoundFit fit_affine_bound(const std::vector<std::pair<double, double>>& u_L, double w,
                                double eps_cap);

// Growth-bound fit: minimize log K + w(a + eps) subject to
// L_i <= log K + a d_i + eps u_i, K >= 1, a >= 0, eps in [0, eps_cap].
struct GrowthFitResult {
    double log_K = 0.0;
    double a = 0.0;
    double eps = 0.0;
    bool feasible = false;
};
GrowthFitResult fit_growth_bound(const std::vector<EnvelopeSample>& samples, double w,
                                 double eps_cap, double a_cap = 100.0);

// Exact solver for tiny linear programs: minimize c.x over {A x <= b} with
// per-variable box bounds, dimension <= 3 (Seidel's incremental algorithm,
// deterministic shuffle).
struct LinearProgram {
    std::vector<std::vector<double>> A;
    std::vector<double> b;
    std::vector<double> c;
    std::vector<double> lo, hi;
};
std::optional<std::vector<double>> solve_lp(const LinearProgram& lp);

}  // namespace ned
