#include "ned/integrator.hpp"

#include <cmath>

namespace ned {

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

MatrixXd integrate_fundamental(const CoefficientFn& A, double t0, double t1, const MatrixXd& Y0,
                               const IntegratorOptions& opt) {
    if (t1 == t0) return Y0;
    const double dir = (t1 > t0) ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);

    MatrixXd y = Y0;
    double t = t0;
    double h = dir * std::min(opt.max_step, std::max(span / 16.0, 16.0 * opt.min_step));

    MatrixXd k1 = A(t) * y;
    long steps = 0;
    while (dir * (t1 - t) > 0.0) {
        if (++steps > opt.max_steps) throw IntegrationError("step budget exhausted");
        if (dir * (t + h) > dir * t1) h = t1 - t;

        MatrixXd k2 = A(t + c2 * h) * (y + h * (a21 * k1));
        MatrixXd k3 = A(t + c3 * h) * (y + h * (a31 * k1 + a32 * k2));
        MatrixXd k4 = A(t + c4 * h) * (y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        MatrixXd k5 = A(t + c5 * h) * (y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        MatrixXd k6 = A(t + h) * (y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        MatrixXd ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        MatrixXd k7 = A(t + h) * ynew;
        MatrixXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double norm2 = 0.0;
        for (int i = 0; i < err.rows(); ++i)
            for (int j = 0; j < err.cols(); ++j) {
                double sc = opt.atol + opt.rtol * std::max(std::abs(y(i, j)), std::abs(ynew(i, j)));
                double q = err(i, j) / sc;
                norm2 += q * q;
            }
        double errn = std::sqrt(norm2 / (double)err.size());

        if (errn <= 1.0) {
            t += h;
            y = std::move(ynew);
            k1 = std::move(k7);
        }
        double factor = (errn == 0.0) ? 5.0 : 0.9 * std::pow(errn, -0.2);
        factor = std::min(5.0, std::max(0.2, factor));
        h *= factor;
        if (std::abs(h) > opt.max_step) h = dir * opt.max_step;
        if (std::abs(h) < opt.min_step)
            throw IntegrationError("step size underflow at t = " + std::to_string(t) +
                                   " (stiffness?)");
    }
    return y;
}

}  // namespace ned
