#pragma once

#include <functional>

#include "ned/types.hpp"

namespace ned {

struct IntegratorOptions {
    double rtol = 1e-9;
    double atol = 1e-12;
    double max_step = 0.25;
    double min_step = 1e-12;
    long max_steps = 2000000;
};

using CoefficientFn = std::function<MatrixXd(double)>;

// Integrates the matrix ODE Y' = A(t) Y from (t0, Y0) to t1 with an adaptive
// Dormand-Prince 5(4) pair. Handles t1 < t0 by stepping backward in time.
// Throws IntegrationError on step-size underflow.
MatrixXd integrate_fundamental(const CoefficientFn& A, double t0, double t1, const MatrixXd& Y0,
                               const IntegratorOptions& opt);

}  // namespace ned
