#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ned {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatrixXl = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : Error {
    using Error::Error;
};
struct IntegrationError : Error {
    using Error::Error;
};
struct OverflowError : Error {
    using Error::Error;
};
struct FactorizationError : Error {
    using Error::Error;
};
struct SplittingError : Error {
    using Error::Error;
};
struct InsufficientDataError : Error {
    using Error::Error;
};
struct DecompositionError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

inline double spectral_norm(const MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    return Eigen::JacobiSVD<MatrixXd>(m).singularValues()(0);
}

inline double cond_number(const MatrixXd& m) {
    Eigen::JacobiSVD<MatrixXd> svd(m);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return svd.singularValues()(0) / smin;
}

// Matrix held as e^{log_scale} * mat with the stored part kept at unit size.
// Long-double storage so that singular-value spreads of several hundred in
// the log survive products over long horizons.
struct ScaledMatrix {
    MatrixXl mat;
    long double log_scale = 0.0L;

    ScaledMatrix() = default;
    explicit ScaledMatrix(const MatrixXd& m, double ls = 0.0) : mat(m.cast<long double>()), log_scale(ls) {
        normalize();
    }

    static ScaledMatrix identity(int n) {
        ScaledMatrix s;
        s.mat = MatrixXl::Identity(n, n);
        s.log_scale = 0.0L;
        return s;
    }

    void normalize() {
        long double a = mat.cwiseAbs().maxCoeff();
        if (a > 0.0L && std::isfinite((double)a)) {
            mat /= a;
            log_scale += std::log(a);
        }
    }

    ScaledMatrix operator*(const ScaledMatrix& rhs) const {
        ScaledMatrix out;
        out.mat = mat * rhs.mat;
        out.log_scale = log_scale + rhs.log_scale;
        out.normalize();
        return out;
    }

    int rows() const { return (int)mat.rows(); }

    // log of the spectral norm; -inf for the zero matrix
    double log_norm() const {
        MatrixXd m = mat.cast<double>();
        double n = spectral_norm(m);
        if (n <= 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(n) + (double)log_scale;
    }

    MatrixXd unit() const { return mat.cast<double>(); }

    // Raw matrix in double precision. Entries beyond the representable range
    // raise OverflowError; callers needing magnitudes only should use
    // log_norm() instead.
    MatrixXd raw() const {
        long double peak = log_scale + std::log(mat.cwiseAbs().maxCoeff() + 1e-300L);
        if (peak > 700.0L)
            throw OverflowError(
                "matrix entry exceeds double range (log scale " + std::to_string((double)log_scale) +
                "); use log-norm queries");
        return (mat * std::exp(log_scale)).cast<double>();
    }

    ScaledMatrix inverse() const {
        ScaledMatrix out;
        out.mat = mat.inverse();
        out.log_scale = -log_scale;
        out.normalize();
        return out;
    }
};

}  // namespace ned
