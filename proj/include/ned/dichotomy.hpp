#pragma once

#include <map>
#include <memory>
#include <vector>

#include "ned/fit.hpp"
#include "ned/propagator.hpp"

namespace ned {

struct DichotomyParams {
    double horizon = 50.0;  // first splitting horizon; doubled on escalation
    int horizon_levels = 4;
    int anchor_count = 41;
    double anchor_halfwidth_max = 25.0;
    double anchor_offset = 0.0;
    double dead_band = 0.015;
    std::vector<double> offsets = {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 25.0};
    double window_lo = -50.0, window_hi = 50.0;

    double eps_weight = 10.0;   // LP objective weight w on eps
    double alpha_min = 1e-3;
    double eps_max = 5.0;
    double margin_tol = 1e-3;
    // uniform verdict: the free fit must need at most this much nonuniformity
    double eps_uniform_tol = 5e-3;
    double angle_tol = 1e-5;
    // claimed stable/unstable bases closer than this are treated as an
    // unresolved splitting (degenerate directions collapse onto each other)
    double splitting_angle_min = 0.05;
    // accept log-polynomial exponent limits only when they reproduce every
    // finite-horizon exponent this closely
    double corrected_resid_tol = 7.5e-3;
    // envelope samples closer than this (in log) to the top singular value
    // of the full propagator are integration noise and are dropped
    double floor_drop = 17.7;
    // core growth gate: phase-matched rate differences at the zero anchor
    // (pairs 2*pi apart cancel prefactors and oscillation phase); a branch
    // whose worst matched rate exceeds this grows and cannot carry a
    // dichotomy at the tested shift
    double gate_tol = 0.01;
    std::vector<double> gate_offsets = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0,
                                        3.5, 4.0, 4.5, 5.0, 5.5, 6.0};
    int gate_phases = 4;
    int forced_rank = -1;

    std::vector<double> anchors() const;
    std::vector<double> horizons() const;
};

enum class Verdict { NED, NoNED, Inconclusive };
std::string verdict_name(Verdict v);

// Finite-horizon splitting into decaying (forward) and decaying-backward
// directions at each anchor, from singular subspaces of the shifted flow.
struct SplittingEstimate {
    double gamma = 0.0;
    double horizon = 0.0;
    double dead_band = 0.0;
    std::vector<double> anchors;
    std::vector<MatrixXd> stable_basis;    // orthonormal N x k
    std::vector<MatrixXd> unstable_basis;  // orthonormal N x (N-k)
    VectorXd exponents;  // shifted finite-time exponents at the anchor nearest 0, descending
    int rank = -1;
    bool consistent = false;
    bool ambiguous = false;  // an exponent fell inside the dead band / direction unclaimed
    double min_principal_angle = 0.0;
};

SplittingEstimate estimate_splitting(const Flow& flow, double gamma, double horizon,
                                     const std::vector<double>& anchors, double dead_band,
                                     int forced_rank = -1);

struct ProjectorFamily {
    std::vector<double> anchors;
    std::vector<MatrixXd> P;
    double max_idempotency_residual = 0.0;
    double min_principal_angle = 0.0;
};

// Oblique projectors onto the stable basis along the unstable one.
ProjectorFamily build_projector_family(const SplittingEstimate& split, double angle_tol = 1e-5);

// max over sampled anchor pairs of |P(t)Phi(t,s) - Phi(t,s)P(s)| / |Phi(t,s)|
double projector_invariance_residual(const Flow& flow, const ProjectorFamily& family);

struct DichotomyFit {
    double gamma = 0.0;
    Verdict verdict = Verdict::Inconclusive;
    int rank = -1;
    ProjectorFamily projectors;
    double K = 1.0, alpha = 0.0, eps = 0.0;
    double margin = 0.0;          // alpha - eps
    double max_envelope_residual = 0.0;
    bool uniform = false;
    double eps_free = 0.0;        // nonuniformity of the unconstrained fit
    double horizon_used = 0.0;
    VectorXd exponents;           // corrected exponents at anchor 0 when available
    double invariance_residual = 0.0;
    double min_principal_angle = 0.0;
    std::string note;
    std::vector<EnvelopeSample> samples_P, samples_Q;
};

DichotomyFit test_nonuniform_dichotomy(const Flow& flow, double gamma,
                                       const DichotomyParams& params = {});
DichotomyFit test_uniform_dichotomy(const Flow& flow, double gamma,
                                    const DichotomyParams& params = {});

struct GrowthBound {
    double K = 1.0;
    double a = 0.0;
    double eps = 0.0;
    bool feasible = false;
};

GrowthBound check_exponential_boundedness(const Flow& flow, const DichotomyParams& params = {});

// Fits exponent data over escalating horizons to mu + p log(T)/T + c/T and
// returns mu; removes the log-polynomial bias of non-semisimple blocks.
// max_residual (when requested) reports how well the model explains the data.
VectorXd correct_exponents(const std::vector<double>& lengths,
                           const std::vector<VectorXd>& exponents_per_length,
                           double* max_residual = nullptr);

// Shared-cache analyzer: the splitting SVD data and pair-grid log-norms are
// shift-independent, so scanning many gamma values reuses one set of
// integrations.
class DichotomyAnalyzer {
  public:
    DichotomyAnalyzer(const Flow& flow, DichotomyParams params);

    DichotomyFit test(double gamma, bool force_uniform = false) const;
    GrowthBound growth_bound() const;
    const DichotomyParams& params() const { return params_; }
    const Flow& flow() const { return flow_; }

  private:
    struct LevelData {
        double T;
        std::vector<DirectionData> fwd, bwd;
    };
    struct CorrectedData {
        std::vector<VectorXd> fwd, bwd;  // log-polynomial exponent limits per anchor
        double max_residual = 0.0;
    };
    struct BranchNorms {
        std::vector<double> P, Q;  // per (anchor, offset); NaN = unusable sample
        // phase-matched core log-norms, per (gate offset, phase)
        std::vector<std::vector<double>> gate_P, gate_Q;
    };

    const LevelData& level(int idx) const;
    const CorrectedData& corrected() const;
    int consistent_rank(const LevelData& lv, double gamma) const;
    SplittingEstimate assemble(const LevelData& lv, double gamma, int rank) const;
    const BranchNorms& branch_norms(int level_idx, int rank) const;
    bool core_growth(const BranchNorms& bn, double gamma) const;

    const Flow& flow_;
    DichotomyParams params_;
    std::vector<double> anchors_;
    mutable std::vector<std::unique_ptr<LevelData>> levels_;
    mutable std::unique_ptr<CorrectedData> corrected_;
    mutable std::map<std::pair<int, int>, BranchNorms> norm_cache_;
    mutable std::map<std::pair<int, int>, ProjectorFamily> family_cache_;
    mutable std::mutex mutex_;
};

}  // namespace ned
