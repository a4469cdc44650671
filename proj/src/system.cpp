#include "ned/system.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace ned {

std::string family_name(Family f) {
    switch (f) {
        case Family::Constant: return "constant";
        case Family::ScalarTsin: return "scalar_tsin";
        case Family::DiagTsin: return "diag_tsin";
        case Family::Jordan: return "jordan";
        case Family::CoupledConstant: return "coupled_constant";
        case Family::PiecewiseSamples: return "piecewise_samples";
    }
    throw Error("unreachable family");
}

Family family_from_name(const std::string& name) {
    for (Family f : {Family::Constant, Family::ScalarTsin, Family::DiagTsin, Family::Jordan,
                     Family::CoupledConstant, Family::PiecewiseSamples})
        if (family_name(f) == name) return f;
    throw ConfigError("unknown family '" + name + "'");
}

void SystemSpec::validate() const {
    if (dimension < 1) throw ConfigError("dimension must be >= 1");
    auto finite = [](const MatrixXd& m) { return m.allFinite(); };
    switch (family) {
        case Family::Constant:
            if (matrix.rows() != dimension || matrix.cols() != dimension || !finite(matrix))
                throw ConfigError("constant family needs a finite NxN matrix");
            break;
        case Family::ScalarTsin:
            if (dimension != 1) throw ConfigError("scalar_tsin requires N = 1");
            if (!std::isfinite(lambda0) || !std::isfinite(a))
                throw ConfigError("scalar_tsin parameters must be finite");
            break;
        case Family::DiagTsin:
            if (dimension != 2) throw ConfigError("diag_tsin requires N = 2");
            if (!std::isfinite(lambda) || !std::isfinite(a))
                throw ConfigError("diag_tsin parameters must be finite");
            break;
        case Family::Jordan:
            if (!std::isfinite(lambda)) throw ConfigError("jordan eigenvalue must be finite");
            break;
        case Family::CoupledConstant:
            if (dimension != 2) throw ConfigError("coupled_constant requires N = 2");
            if (!std::isfinite(lambda1) || !std::isfinite(lambda2) || !std::isfinite(coupling))
                throw ConfigError("coupled_constant parameters must be finite");
            break;
        case Family::PiecewiseSamples: {
            if (times.size() < 2 || values.size() + 1 != times.size())
                throw ConfigError("piecewise_samples needs k+1 times for k matrices");
            if (!std::is_sorted(times.begin(), times.end()))
                throw ConfigError("piecewise_samples times must be ascending");
            for (const auto& m : values)
                if (m.rows() != dimension || m.cols() != dimension || !finite(m))
                    throw ConfigError("piecewise_samples matrices must be finite NxN");
            break;
        }
    }
}

SystemSpec make_constant(const MatrixXd& A) {
    SystemSpec s;
    s.family = Family::Constant;
    s.dimension = (int)A.rows();
    s.matrix = A;
    s.validate();
    return s;
}

SystemSpec make_scalar_tsin(double lambda0, double a) {
    SystemSpec s;
    s.family = Family::ScalarTsin;
    s.dimension = 1;
    s.lambda0 = lambda0;
    s.a = a;
    s.validate();
    return s;
}

SystemSpec make_diag_tsin(double lambda, double a) {
    SystemSpec s;
    s.family = Family::DiagTsin;
    s.dimension = 2;
    s.lambda = lambda;
    s.a = a;
    s.validate();
    return s;
}

SystemSpec make_jordan(int n, double eigenvalue) {
    SystemSpec s;
    s.family = Family::Jordan;
    s.dimension = n;
    s.lambda = eigenvalue;
    s.validate();
    return s;
}

SystemSpec make_coupled_constant(double l1, double l2, double c) {
    SystemSpec s;
    s.family = Family::CoupledConstant;
    s.dimension = 2;
    s.lambda1 = l1;
    s.lambda2 = l2;
    s.coupling = c;
    s.validate();
    return s;
}

SystemSpec make_piecewise(std::vector<double> times, std::vector<MatrixXd> values) {
    SystemSpec s;
    s.family = Family::PiecewiseSamples;
    s.dimension = values.empty() ? 1 : (int)values[0].rows();
    s.times = std::move(times);
    s.values = std::move(values);
    s.validate();
    return s;
}

namespace {

MatrixXd jordan_matrix(int n, double lambda) {
    MatrixXd m = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        m(i, i) = lambda;
        if (i + 1 < n) m(i, i + 1) = 1.0;
    }
    return m;
}

int piecewise_index(const SystemSpec& sys, double t) {
    if (t < sys.times.front() || t > sys.times.back())
        throw DomainError("t = " + std::to_string(t) + " outside the sample table [" +
                          std::to_string(sys.times.front()) + ", " +
                          std::to_string(sys.times.back()) + "]");
    auto it = std::upper_bound(sys.times.begin(), sys.times.end(), t);
    int k = (int)(it - sys.times.begin()) - 1;
    return std::min(k, (int)sys.values.size() - 1);
}

}  // namespace

MatrixXd evaluate_coefficient(const SystemSpec& sys, double t) {
    if (!std::isfinite(t)) throw DomainError("t must be finite");
    switch (sys.family) {
        case Family::Constant:
            return sys.matrix;
        case Family::ScalarTsin: {
            MatrixXd m(1, 1);
            m(0, 0) = sys.lambda0 + sys.a * t * std::sin(t);
            return m;
        }
        case Family::DiagTsin: {
            MatrixXd m = MatrixXd::Zero(2, 2);
            m(0, 0) = -sys.lambda - sys.a * t * std::sin(t);
            m(1, 1) = sys.lambda + sys.a * t * std::sin(t);
            return m;
        }
        case Family::Jordan:
            return jordan_matrix(sys.dimension, sys.lambda);
        case Family::CoupledConstant: {
            MatrixXd m = MatrixXd::Zero(2, 2);
            m(0, 0) = sys.lambda1;
            m(0, 1) = sys.coupling;
            m(1, 1) = sys.lambda2;
            return m;
        }
        case Family::PiecewiseSamples:
            return sys.values[piecewise_index(sys, t)];
    }
    throw Error("unreachable family");
}

std::vector<double> coefficient_breakpoints(const SystemSpec& sys, double lo, double hi) {
    std::vector<double> out;
    if (sys.family != Family::PiecewiseSamples) return out;
    for (double t : sys.times)
        if (t > lo && t < hi) out.push_back(t);
    return out;
}

bool has_closed_form(const SystemSpec& sys) {
    (void)sys;
    return true;  // every bundled family admits one
}

namespace {

// integral of a*tau*sin(tau) over [s,t]: a*[sin tau - tau cos tau]_s^t
double tsin_integral(double a, double s, double t) {
    return a * ((std::sin(t) - t * std::cos(t)) - (std::sin(s) - s * std::cos(s)));
}

}  // namespace

MatrixXd analytic_propagator(const SystemSpec& sys, double s, double t) {
    switch (sys.family) {
        case Family::Constant:
            return ((t - s) * sys.matrix).exp();
        case Family::ScalarTsin: {
            MatrixXd m(1, 1);
            m(0, 0) = std::exp(sys.lambda0 * (t - s) + tsin_integral(sys.a, s, t));
            return m;
        }
        case Family::DiagTsin: {
            MatrixXd m = MatrixXd::Zero(2, 2);
            double w = sys.lambda * (t - s) + tsin_integral(sys.a, s, t);
            m(0, 0) = std::exp(-w);
            m(1, 1) = std::exp(w);
            return m;
        }
        case Family::Jordan:
            return ((t - s) * jordan_matrix(sys.dimension, sys.lambda)).exp();
        case Family::CoupledConstant:
            return ((t - s) * evaluate_coefficient(sys, 0.0)).exp();
        case Family::PiecewiseSamples: {
            // product of segment exponentials, exact for the piecewise-constant rule
            piecewise_index(sys, s);
            piecewise_index(sys, t);
            double lo = std::min(s, t), hi = std::max(s, t);
            std::vector<double> pts{lo};
            for (double b : coefficient_breakpoints(sys, lo, hi)) pts.push_back(b);
            pts.push_back(hi);
            MatrixXd phi = MatrixXd::Identity(sys.dimension, sys.dimension);
            for (size_t k = 0; k + 1 < pts.size(); ++k) {
                double mid = 0.5 * (pts[k] + pts[k + 1]);
                MatrixXd seg = ((pts[k + 1] - pts[k]) * evaluate_coefficient(sys, mid)).exp();
                phi = seg * phi;  // forward product
            }
            if (t < s) return phi.inverse();
            return phi;
        }
    }
    throw Error("unreachable family");
}

}  // namespace ned
