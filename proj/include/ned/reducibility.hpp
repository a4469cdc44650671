#pragma once

#include <memory>

#include "ned/spectrum.hpp"

namespace ned {

// Block-diagonal symmetric factor R(t) of the polar-type factorization
// X = S R, held with one log scale per diagonal block so that strongly
// decaying and growing blocks coexist.
struct BlockDiagonalSpd {
    MatrixXd B1, B2;          // SPD blocks (unit scale)
    double log1 = 0.0, log2 = 0.0;

    int dim() const { return (int)(B1.rows() + B2.rows()); }
};

struct PolarFactorization {
    std::vector<double> times;
    int N1 = 0, N2 = 0;
    std::vector<BlockDiagonalSpd> R;
    std::vector<MatrixXd> S;  // invertible, |S| <= sqrt(2)

    double max_commutation_residual = 0.0;    // |P R - R P| / |R|
    double max_reconstruction_residual = 0.0; // |S R - X| / |X|
    double max_S_norm = 0.0;
    double max_Sinv_excess = -1e300;          // |S^-1| minus the similarity bound
    double max_projector_mismatch = 0.0;      // |S P S^-1 - X P X^-1| relative
    double min_X_condition = 0.0;             // worst conditioning seen, reported
};

// Factorizes fundamental samples X(t_j) against the normal-form projector
// diag(I_{N1}, 0): R(t_j)^2 = P X^T X P + Q X^T X Q blockwise, S = X R^{-1}.
PolarFactorization polar_factor(const std::vector<ScaledMatrix>& X,
                                const std::vector<double>& times, int N1,
                                double spd_floor = 1e-300);

// B(t_j) = Rdot R^{-1} via symmetric logarithmic differences (five-point
// stencil, fourth order in h).
std::vector<MatrixXd> reduced_coefficient(const std::function<BlockDiagonalSpd(double)>& R_at,
                                          const std::vector<double>& times, double h);

// Locally integrable coefficient of a flow at time t, second order in h.
MatrixXd flow_coefficient(const Flow& flow, double t, double h);

struct ReductionParams {
    double grid_lo = -25.0, grid_hi = 25.0;
    int grid_points = 1001;
    double fd_h = 0.01;
    double block_tol = 1e-6;
    DichotomyParams dichotomy;
    SpectrumParams spectrum;
};

struct ReductionStage {
    int offset = 0;      // leading coordinates untouched by this stage
    int split = 0;       // stable dimension split off
    double M = 1.0, eps = 0.0;
    double gamma = 0.0;
};

struct ReductionResult {
    std::vector<int> block_sizes;
    std::vector<double> times;
    std::vector<MatrixXd> S;  // transformation samples
    std::vector<MatrixXd> B;  // reduced block-diagonal coefficient samples
    double M = 1.0;           // Lyapunov bound |S|, |S^-1| <= M e^{eps|t|}
    double eps = 0.0;
    std::vector<ReductionStage> stages;
    double max_similarity_residual = 0.0;
    double mean_similarity_residual = 0.0;
    double max_offblock = 0.0;
    double lyap_violation = 0.0;  // positive = the fitted bound fails somewhere
    bool complete = true;
    std::string note;
    std::vector<std::shared_ptr<const Flow>> block_flows;
    // intermediate stage flows the block flows evaluate through
    std::vector<std::shared_ptr<const Flow>> retained;
};

// Two-block reduction at one resolvent shift: normal form at tau = 0, polar
// factorization on the grid, reduced coefficient, Lyapunov constants.
ReductionResult reduce_two_blocks(const Flow& flow, const DichotomyFit& fit,
                                  const ReductionParams& params = {});

// Same pipeline driven by an explicit invariant projector at tau = 0; used by
// the full decomposition, which transports projectors through the composed
// transformation instead of re-estimating them on reduced flows.
ReductionResult reduce_two_blocks_at(const Flow& flow, const MatrixXd& P0, double gamma,
                                     const ReductionParams& params = {});

// Full decomposition: iterates the two-block reduction across the resolvent
// witnesses, composing the transformations. Aborts with a partial result
// (complete = false) when a stage cannot be certified.
ReductionResult full_spectral_reduction(const Flow& flow, const SpectralDecomposition& decomp,
                                        const ReductionParams& params = {});

struct SimilarityReport {
    double max_residual = 0.0;
    double mean_residual = 0.0;
    double M = 1.0, eps = 0.0;
    double spectrum_mismatch = -1.0;  // endpoint mismatch vs the base system
};

// Residual of S'(t) = A(t) S - S B(t) on aligned sample grids with central
// differences of step h, plus a refit of the Lyapunov constants.
SimilarityReport verify_similarity(const std::vector<MatrixXd>& A_samples,
                                   const std::vector<MatrixXd>& B_samples,
                                   const std::vector<MatrixXd>& S_samples,
                                   const std::vector<double>& times, double h);

// Recomputes the per-block spectra of a reduction and reports the worst
// endpoint mismatch against the base system's intervals.
double reduction_spectrum_mismatch(const SpectralDecomposition& base,
                                   const ReductionResult& red, const ReductionParams& params = {});

// Evolution operator of one diagonal block of the reduced system,
// Phi_B(t,s) = R_b(t) R_b(s)^{-1}; exact similarity transport, no
// re-integration of the reduced coefficient.
class BlockFlow : public Flow {
  public:
    BlockFlow(std::shared_ptr<const Flow> base, NormalizedFundamental nf, int block);

    int dim() const override;
    ScaledMatrix flow(double s, double t) const override;

    // S(t), per-block R(t) of the underlying factorization at arbitrary t
    std::pair<MatrixXd, BlockDiagonalSpd> transform_at(double t) const;

  private:
    const BlockDiagonalSpd& R_at(double t) const;

    std::shared_ptr<const Flow> base_;
    NormalizedFundamental nf_;
    int block_;
    mutable std::map<double, BlockDiagonalSpd> cache_;
    mutable std::mutex mutex_;
};

}  // namespace ned
