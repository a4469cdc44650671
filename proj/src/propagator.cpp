#include "ned/propagator.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <random>

namespace ned {

namespace {

// deterministic full-rank frame with no special alignment to any axis
MatrixXd generic_orthonormal(int n) {
    std::mt19937 rng(0x5eedu + (unsigned)n);
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = g(rng);
    Eigen::HouseholderQR<MatrixXd> qr(M);
    return qr.householderQ();
}

}  // namespace

ScaledMatrix Flow::apply(double s, double t, const MatrixXd& cols) const {
    ScaledMatrix phi = flow(s, t);
    ScaledMatrix out;
    out.mat = phi.mat * cols.cast<long double>();
    out.log_scale = phi.log_scale;
    out.normalize();
    return out;
}

DirectionData Flow::direction_data(double s, double endpoint) const {
    ScaledMatrix m = flow(s, endpoint);
    Eigen::JacobiSVD<MatrixXl> svd(m.mat, Eigen::ComputeFullV);
    const int n = dim();
    const double len = std::max(1e-300, std::abs(endpoint - s));
    DirectionData out;
    out.mu.resize(n);
    for (int j = 0; j < n; ++j) {
        long double sv = svd.singularValues()(j);
        out.mu(j) = sv > 0.0L ? (double)((std::log(sv) + m.log_scale) / (long double)len)
                              : -std::numeric_limits<double>::infinity();
    }
    out.V = svd.matrixV().cast<double>();
    return out;
}

MatrixXd Flow::coefficient(double t, double h) const {
    ScaledMatrix m = flow(t - h, t + h);
    MatrixXd lg = m.unit().log();
    lg += (double)m.log_scale * MatrixXd::Identity(dim(), dim());
    return lg / (2.0 * h);
}

Propagator::Propagator(SystemSpec sys, PropagatorOptions opt) : sys_(std::move(sys)), opt_(opt) {
    sys_.validate();
}

MatrixXd Propagator::coefficient(double t, double h) const {
    (void)h;
    return evaluate_coefficient(sys_, t);
}

const Propagator::Segment& Propagator::segment(double a, double b) const {
    std::pair<double, double> key{a, b};
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    auto coeff = [this](double t) { return evaluate_coefficient(sys_, t); };
    MatrixXd Y = integrate_fundamental(coeff, a, b, MatrixXd::Identity(dim(), dim()),
                                       opt_.integrator);
    Segment seg;
    double scale = Y.cwiseAbs().maxCoeff();
    if (scale > 0.0) {
        Y /= scale;
        seg.log_scale = std::log(scale);
    }
    Eigen::HouseholderQR<MatrixXd> qr(Y);
    seg.Q = qr.householderQ();
    seg.R = qr.matrixQR().triangularView<Eigen::Upper>();
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.emplace(key, std::move(seg)).first->second;
}

// split [s, t] at the reorthonormalization lattice and at coefficient
// discontinuities, traversed in integration order
std::vector<double> Propagator::breakline(double s, double t) const {
    const double period = opt_.reorth_period;
    std::vector<double> pts;
    pts.push_back(s);
    double lo = std::min(s, t), hi = std::max(s, t);
    long k0 = (long)std::ceil(lo / period), k1 = (long)std::floor(hi / period);
    for (long k = k0; k <= k1; ++k) {
        double p = k * period;
        if (p > lo && p < hi) pts.push_back(p);
    }
    for (double b : coefficient_breakpoints(sys_, lo, hi)) pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (t < s) std::reverse(pts.begin(), pts.end());
    pts.push_back(t);
    return pts;
}

ScaledMatrix Propagator::flow(double s, double t) const {
    if (t == s) return ScaledMatrix::identity(dim());
    std::vector<double> pts = breakline(s, t);
    ScaledMatrix acc = ScaledMatrix::identity(dim());
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        const Segment& seg = segment(pts[i], pts[i + 1]);
        ScaledMatrix sm;
        sm.mat = (seg.Q * seg.R).cast<long double>();
        sm.log_scale = seg.log_scale;
        acc = sm * acc;
    }
    return acc;
}

ScaledMatrix Propagator::apply(double s, double t, const MatrixXd& cols) const {
    ScaledMatrix acc;
    acc.mat = cols.cast<long double>();
    acc.normalize();
    if (t == s) return acc;
    std::vector<double> pts = breakline(s, t);
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        const Segment& seg = segment(pts[i], pts[i + 1]);
        acc.mat = (seg.Q * seg.R).cast<long double>() * acc.mat;
        acc.log_scale += seg.log_scale;
        acc.normalize();
    }
    return acc;
}

DirectionData Propagator::direction_data(double s, double endpoint) const {
    const int n = dim();
    DirectionData out;
    out.mu = VectorXd::Zero(n);
    out.V = MatrixXd::Identity(n, n);
    if (endpoint == s) return out;
    std::vector<double> pts = breakline(s, endpoint);
    const double len = std::abs(endpoint - s);

    // per-direction growth from the discrete-QR diagonals; immune to the
    // dynamic-range collapse of assembled long products
    {
        MatrixXd Q = MatrixXd::Identity(n, n);
        VectorXd logsum = VectorXd::Zero(n);
        for (size_t i = 0; i + 1 < pts.size(); ++i) {
            const Segment& seg = segment(pts[i], pts[i + 1]);
            MatrixXd Z = seg.Q * (seg.R * Q);
            Eigen::HouseholderQR<MatrixXd> qr(Z);
            Q = qr.householderQ();
            MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
            for (int j = 0; j < n; ++j)
                logsum(j) += std::log(std::abs(R(j, j)) + 1e-300) + seg.log_scale;
        }
        for (int j = 0; j < n; ++j) out.mu(j) = logsum(j) / len;
        std::sort(out.mu.data(), out.mu.data() + n, std::greater<double>());
    }

    // one Phi^T Phi subspace-iteration sweep: forward pass, then the
    // transposed chain in reverse; leading columns converge to the dominant
    // right singular directions at rate e^{-2 gap T}. A fixed generic start
    // avoids axis-locked saddles on exactly decoupled systems; plain QR keeps
    // the leading column a protected power iteration.
    {
        MatrixXd W = generic_orthonormal(n);
        for (size_t i = 0; i + 1 < pts.size(); ++i) {
            const Segment& seg = segment(pts[i], pts[i + 1]);
            MatrixXd Z = seg.Q * (seg.R * W);
            Eigen::HouseholderQR<MatrixXd> qr(Z);
            W = qr.householderQ();
        }
        for (size_t i = pts.size() - 1; i-- > 0;) {
            const Segment& seg = segment(pts[i], pts[i + 1]);
            MatrixXd Z = (seg.Q * seg.R).transpose() * W;
            Eigen::HouseholderQR<MatrixXd> qr(Z);
            W = qr.householderQ();
        }
        out.V = W;
    }
    return out;
}

MatrixXd Propagator::propagate(double s, double t) const { return flow(s, t).raw(); }

ScaledMatrix Propagator::shifted_flow(double gamma, double s, double t) const {
    ScaledMatrix m = flow(s, t);
    m.log_scale += -gamma * (t - s);
    return m;
}

MatrixXd Propagator::shifted_propagate(double gamma, double s, double t) const {
    return shifted_flow(gamma, s, t).raw();
}

ScaledMatrix NormalizedFundamental::X(double t) const {
    ScaledMatrix phi = flow->flow(tau, t);
    ScaledMatrix ti;
    ti.mat = T_inv.cast<long double>();
    ti.normalize();
    return phi * ti;
}

NormalizedFundamental normalize_fundamental(const Flow& flow, double tau, const MatrixXd& P_tau,
                                            double proj_tol) {
    const int n = (int)P_tau.rows();
    double scale = 1.0 + spectral_norm(P_tau);
    double idem = spectral_norm(P_tau * P_tau - P_tau);
    if (idem > proj_tol * scale)
        throw FactorizationError("invalid projector: |P^2 - P| = " + std::to_string(idem));

    Eigen::JacobiSVD<MatrixXd> svd(P_tau, Eigen::ComputeFullU | Eigen::ComputeFullV);
    int rank = 0;
    for (int i = 0; i < n; ++i)
        if (svd.singularValues()(i) > 0.5) ++rank;

    NormalizedFundamental nf;
    nf.tau = tau;
    nf.N1 = rank;
    nf.N2 = n - rank;
    nf.flow = &flow;
    nf.P_tilde = MatrixXd::Zero(n, n);
    for (int i = 0; i < rank; ++i) nf.P_tilde(i, i) = 1.0;

    // columns: orthonormal basis of im P (left singular vectors) then of
    // ker P (right singular vectors of the vanishing part); P acts as the
    // identity on its image, so V^{-1} P V = diag(I, 0) exactly
    MatrixXd V(n, n);
    if (rank > 0) V.leftCols(rank) = svd.matrixU().leftCols(rank);
    if (rank < n) V.rightCols(n - rank) = svd.matrixV().rightCols(n - rank);
    for (int j = 0; j < n; ++j) {
        int imax = 0;
        V.col(j).cwiseAbs().maxCoeff(&imax);
        if (V(imax, j) < 0.0) V.col(j) = -V.col(j);
    }

    Eigen::FullPivLU<MatrixXd> lu(V);
    if (!lu.isInvertible()) throw FactorizationError("projector bases do not span R^N");
    nf.T_inv = V;
    nf.T = lu.inverse();
    return nf;
}

}  // namespace ned
