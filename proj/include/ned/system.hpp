#pragma once

#include <string>
#include <vector>

#include "ned/types.hpp"

namespace ned {

enum class Family {
    Constant,
    ScalarTsin,
    DiagTsin,
    Jordan,
    CoupledConstant,
    PiecewiseSamples,
};

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Symbolic description of the coefficient function A(t).
struct SystemSpec {
    Family family = Family::Constant;
    int dimension = 1;

    MatrixXd matrix;  // Constant

    double lambda0 = 0.0, a = 0.0;  // ScalarTsin: A(t) = lambda0 + a t sin t
    double lambda = 0.0;            // DiagTsin: diag(-l - a t sin t, l + a t sin t); Jordan eigenvalue
    double lambda1 = 0.0, lambda2 = 0.0, coupling = 0.0;  // CoupledConstant upper triangular

    std::vector<double> times;      // PiecewiseSamples breakpoints (ascending)
    std::vector<MatrixXd> values;   // A on [times[k], times[k+1]), size times.size()-1

    void validate() const;
};

SystemSpec make_constant(const MatrixXd& A);
SystemSpec make_scalar_tsin(double lambda0, double a);
SystemSpec make_diag_tsin(double lambda, double a);
SystemSpec make_jordan(int n, double eigenvalue);
SystemSpec make_coupled_constant(double l1, double l2, double c);
SystemSpec make_piecewise(std::vector<double> times, std::vector<MatrixXd> values);

// A(t) for the given family; out-of-table times for piecewise systems raise
// DomainError.
MatrixXd evaluate_coefficient(const SystemSpec& sys, double t);

// Discontinuity locations of A(t) inside (lo, hi), ascending.
std::vector<double> coefficient_breakpoints(const SystemSpec& sys, double lo, double hi);

bool has_closed_form(const SystemSpec& sys);

// Exact evolution operator for families that admit one (constant, scalar_tsin,
// diag_tsin, jordan, coupled_constant, piecewise_samples).
MatrixXd analytic_propagator(const SystemSpec& sys, double s, double t);

}  // namespace ned
