#pragma once

#include <optional>

#include "ned/dichotomy.hpp"

namespace ned {

enum class GammaKind { Resolvent, Spectrum, Inconclusive };
std::string gamma_kind_name(GammaKind k);

struct GammaClassification {
    double gamma = 0.0;
    GammaKind kind = GammaKind::Inconclusive;
    int dim_S = -1;  // stable-fiber dimension when Resolvent
    DichotomyFit fit;
};

struct SpectrumParams {
    double coarse_step = 0.1;
    double endpoint_tol = 0.01;
    double pad = 0.5;
    double max_inconclusive_fraction = 0.10;
    double anchor_offset = 0.0;  // shifts the anchor grid (anchor-independence checks)
};

struct SpectralInterval {
    double a = 0.0;  // -inf for a left-unbounded component
    double b = 0.0;  // +inf for a right-unbounded component
    int dim = 0;     // spectral-manifold dimension N_i
};

struct SpectralDecomposition {
    std::vector<SpectralInterval> intervals;
    std::vector<double> witnesses;       // resolvent gamma_0 < ... < gamma_n
    std::vector<int> witness_dims;       // dim S at each witness
    std::vector<MatrixXd> manifolds;     // W_i(0), i = 0..n+1 (may have 0 columns)
    std::vector<int> manifold_dims;
    double stacked_condition = 0.0;
    int total_dimension = 0;
    bool low_confidence = false;
    std::vector<std::string> warnings;
    std::vector<GammaClassification> samples;  // coarse scan, ascending gamma
};

GammaClassification classify_gamma(const DichotomyAnalyzer& an, double gamma);
GammaClassification classify_gamma(const Flow& flow, double gamma,
                                   const DichotomyParams& params = {});

// search interval [-a - pad, a + pad] from a feasible growth bound
std::pair<double, double> search_interval_from_growth(const GrowthBound& bound, double pad = 0.5);

SpectralDecomposition compute_spectrum(const Flow& flow, std::pair<double, double> range,
                                       const SpectrumParams& sp = {},
                                       const DichotomyParams& dp = {});

// convenience: growth bound -> range -> spectrum
SpectralDecomposition compute_spectrum_auto(const Flow& flow, const SpectrumParams& sp = {},
                                            const DichotomyParams& dp = {});

// Intersection basis of two subspaces spanned by orthonormal columns, via
// principal vectors; pairs with cos(theta) above the threshold are kept.
MatrixXd subspace_intersection(const MatrixXd& U, const MatrixXd& S, double cos_tol = 0.99);

// Spectral manifolds W_i(0) for fixed witnesses; fills manifolds/stacked
// condition of an assembled decomposition. Throws DecompositionError when an
// intersection dimension mismatches the interval data.
void spectral_manifold_bases(const DichotomyAnalyzer& an, SpectralDecomposition& decomp);

}  // namespace ned
