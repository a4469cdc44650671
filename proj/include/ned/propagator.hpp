#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "ned/integrator.hpp"
#include "ned/system.hpp"
#include "ned/types.hpp"

namespace ned {

// Finite-horizon direction data of Phi(endpoint, s): per-direction exponents
// and an orthonormal frame whose leading j columns span the dominant
// j-dimensional right singular subspace.
struct DirectionData {
    VectorXd mu;  // descending
    MatrixXd V;
};

// Evaluation interface for an evolution operator Phi(t,s).
class Flow {
  public:
    virtual ~Flow() = default;
    virtual int dim() const = 0;
    // returns Phi(t,s) in log-scaled form
    virtual ScaledMatrix flow(double s, double t) const = 0;
    // Phi(t,s) * cols; overrides may chain segments so that column scales stay
    // relative rather than drowning under the dominant direction
    virtual ScaledMatrix apply(double s, double t, const MatrixXd& cols) const;
    // exponents and dominant frames; the default works from the assembled
    // matrix and is adequate for modest singular-value spreads
    virtual DirectionData direction_data(double s, double endpoint) const;
    // locally integrable coefficient at time t; the default extracts it from
    // the flow over [t-h, t+h], second order in h
    virtual MatrixXd coefficient(double t, double h) const;
};

struct PropagatorOptions {
    IntegratorOptions integrator;
    double reorth_period = 1.0;  // segment length between QR restarts
};

// ODE-backed evolution operator with a segment cache. Segments are aligned to
// the reorthonormalization lattice and stored as (Q, R, log scale) triples;
// queries assemble the product in long double so that singular values spread
// over hundreds of log-units survive.
class Propagator : public Flow {
  public:
    explicit Propagator(SystemSpec sys, PropagatorOptions opt = {});

    int dim() const override { return sys_.dimension; }
    const SystemSpec& system() const { return sys_; }
    const PropagatorOptions& options() const { return opt_; }

    ScaledMatrix flow(double s, double t) const override;

    // Phi(t,s) as a raw matrix (throws OverflowError out of double range).
    MatrixXd propagate(double s, double t) const;

    // Phi_gamma(t,s) = e^{-gamma (t-s)} Phi(t,s)
    ScaledMatrix shifted_flow(double gamma, double s, double t) const;
    MatrixXd shifted_propagate(double gamma, double s, double t) const;

    // segment-chained block propagation: column scales stay relative
    ScaledMatrix apply(double s, double t, const MatrixXd& cols) const override;

    // exponents by discrete-QR diagonal accumulation, frames by one
    // Phi^T Phi subspace-iteration pass through the segment chain
    DirectionData direction_data(double s, double endpoint) const override;
    // A(t) of the underlying system, exact
    MatrixXd coefficient(double t, double h) const override;

  private:
    struct Segment {
        MatrixXd Q;
        MatrixXd R;
        double log_scale = 0.0;
    };
    const Segment& segment(double a, double b) const;
    std::vector<double> breakline(double s, double t) const;

    SystemSpec sys_;
    PropagatorOptions opt_;
    mutable std::map<std::pair<double, double>, Segment> cache_;
    mutable std::mutex mutex_;
};

// Normal form of an invariant projector: T P T^{-1} = diag(I_{N1}, 0_{N2}),
// with the fundamental matrix reanchored as X(t) = Phi(t, tau) T^{-1}.
struct NormalizedFundamental {
    double tau = 0.0;
    MatrixXd T;
    MatrixXd T_inv;
    MatrixXd P_tilde;
    int N1 = 0, N2 = 0;
    const Flow* flow = nullptr;

    ScaledMatrix X(double t) const;
};

// Builds the change of basis for an (approximate) projector P_tau; raises
// FactorizationError when |P^2 - P| exceeds tol.
NormalizedFundamental normalize_fundamental(const Flow& flow, double tau, const MatrixXd& P_tau,
                                            double proj_tol = 1e-8);

}  // namespace ned
