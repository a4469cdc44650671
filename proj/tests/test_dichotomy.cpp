#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ned/dichotomy.hpp"
#include "ned/system.hpp"

using namespace ned;

namespace {

MatrixXd diag2(double a, double b) {
    MatrixXd m = MatrixXd::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

DichotomyParams fast_params() {
    DichotomyParams p;
    return p;
}

}  // namespace

TEST_CASE("splitting of a hyperbolic constant system") {
    Propagator prop(make_constant(diag2(-1.0, 1.0)));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.0, 40.0, p.anchors(), p.dead_band);
    REQUIRE(est.consistent);
    CHECK(est.rank == 1);
    // stable basis e1, unstable e2 at every anchor
    for (size_t i = 0; i < est.anchors.size(); ++i) {
        CHECK(std::abs(est.stable_basis[i](0, 0)) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::abs(est.unstable_basis[i](1, 0)) == doctest::Approx(1.0).epsilon(1e-9));
    }
    // exponents mu_1 >= mu_2 at anchor 0
    CHECK(est.exponents(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(est.exponents(1) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("splitting of the scalar nonuniform example") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.0, 50.0, p.anchors(), p.dead_band);
    REQUIRE(est.consistent);
    CHECK(est.rank == 1);
}

TEST_CASE("splitting of a nilpotent block needs the log-polynomial correction") {
    Propagator prop(make_jordan(2, 0.0));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.5, 40.0, p.anchors(), p.dead_band);
    REQUIRE(est.consistent);
    CHECK(est.rank == 2);

    // horizon-extrapolated exponents land on (-0.5, -0.5)
    std::vector<double> lens;
    std::vector<VectorXd> mus;
    for (double T : {40.0, 80.0, 160.0}) {
        auto e = estimate_splitting(prop, 0.5, T, {0.0}, p.dead_band);
        lens.push_back(T);
        mus.push_back(e.exponents);
    }
    double resid = 0.0;
    VectorXd corrected = correct_exponents(lens, mus, &resid);
    CHECK(corrected(0) == doctest::Approx(-0.5).epsilon(5e-3));
    CHECK(corrected(1) == doctest::Approx(-0.5).epsilon(5e-3));
    CHECK(resid <= 1e-6);  // exact-fit data: the model explains it
}

TEST_CASE("splitting ambiguity inside the dead band") {
    Propagator prop(make_jordan(2, 0.0));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.0, 40.0, p.anchors(), p.dead_band);
    CHECK(est.ambiguous);
    CHECK(!est.consistent);
}

TEST_CASE("projector family from coordinate splitting") {
    Propagator prop(make_constant(diag2(-1.0, 1.0)));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.0, 40.0, p.anchors(), p.dead_band);
    auto fam = build_projector_family(est);
    for (const auto& P : fam.P) CHECK((P - diag2(1.0, 0.0)).norm() < 1e-9);
    CHECK(fam.max_idempotency_residual < 1e-12);
    CHECK(projector_invariance_residual(prop, fam) < 1e-9);
}

TEST_CASE("projector family scalar") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.0, 50.0, p.anchors(), p.dead_band);
    auto fam = build_projector_family(est);
    for (const auto& P : fam.P) CHECK(P(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("oblique projector from a random well-separated 3D splitting") {
    std::mt19937 rng(11);
    std::normal_distribution<double> N01(0.0, 1.0);
    // build an explicit invariant splitting for a constant diagonalizable system
    MatrixXd V(3, 3);
    do {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) V(i, j) = N01(rng);
    } while (std::abs(V.determinant()) < 0.3);
    MatrixXd D = MatrixXd::Zero(3, 3);
    D.diagonal() << -1.0, -0.7, 1.2;
    MatrixXd A = V * D * V.inverse();
    Propagator prop(make_constant(A));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.0, 50.0, p.anchors(), p.dead_band);
    REQUIRE(est.consistent);
    REQUIRE(est.rank == 2);
    auto fam = build_projector_family(est);
    CHECK(fam.max_idempotency_residual < 1e-8);
    CHECK(projector_invariance_residual(prop, fam) < 1e-6);
    // oracle: the oblique projection onto the stable eigenplane along the
    // unstable eigenvector
    MatrixXd Pk = MatrixXd::Zero(3, 3);
    Pk(0, 0) = Pk(1, 1) = 1.0;
    MatrixXd P_oracle = V * Pk * V.inverse();
    size_t i0 = fam.anchors.size() / 2;
    CHECK((fam.P[i0] - P_oracle).norm() < 1e-6);
}

TEST_CASE("nonuniform dichotomy verdicts") {
    DichotomyParams p = fast_params();

    SUBCASE("hyperbolic constant system") {
        Propagator prop(make_constant(diag2(-1.0, 1.0)));
        auto fit = test_nonuniform_dichotomy(prop, 0.0, p);
        CHECK(fit.verdict == Verdict::NED);
        CHECK(fit.rank == 1);
        CHECK(fit.alpha == doctest::Approx(1.0).epsilon(0.05));
        CHECK(fit.eps <= 1e-9);
        CHECK(fit.K == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("scalar example inside its spectrum") {
        Propagator prop(make_scalar_tsin(-1.0, -0.1));
        auto fit = test_nonuniform_dichotomy(prop, -1.0, p);
        CHECK(fit.verdict == Verdict::NoNED);
    }
    SUBCASE("intro 2D example at gamma 0") {
        Propagator prop(make_diag_tsin(1.0, 0.3));
        auto fit = test_nonuniform_dichotomy(prop, 0.0, p);
        CHECK(fit.verdict == Verdict::NED);
        CHECK(fit.rank == 1);
        CHECK(fit.eps > 0.05);  // genuinely nonuniform
        CHECK(fit.eps < fit.alpha);
    }
}

TEST_CASE("uniform dichotomy verdicts") {
    DichotomyParams p = fast_params();

    SUBCASE("hyperbolic constant system stays uniform") {
        Propagator prop(make_constant(diag2(-1.0, 1.0)));
        auto fit = test_uniform_dichotomy(prop, 0.0, p);
        CHECK(fit.verdict == Verdict::NED);
        CHECK(fit.eps == 0.0);
    }
    SUBCASE("scalar example is not uniformly dichotomic") {
        Propagator prop(make_scalar_tsin(-1.0, -0.1));
        auto fit = test_uniform_dichotomy(prop, 0.0, p);
        CHECK(fit.verdict == Verdict::NoNED);
    }
    SUBCASE("intro 2D example is not uniformly dichotomic") {
        Propagator prop(make_diag_tsin(1.0, 0.3));
        auto fit = test_uniform_dichotomy(prop, 0.0, p);
        CHECK(fit.verdict == Verdict::NoNED);
    }
}

TEST_CASE("envelope fit admits the reference constants at gamma 0") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    DichotomyParams p;
    DichotomyAnalyzer an(prop, p);
    auto fit = an.test(0.0, false);
    REQUIRE(fit.verdict == Verdict::NED);
    // (K, alpha, eps) = (e^{0.2}, 0.9, 0.2) satisfies every sampled inequality
    for (const auto& s : fit.samples_P) CHECK(s.L <= 0.2 - 0.9 * s.d + 0.2 * s.u + 1e-9);
    CHECK(fit.alpha >= 0.9 - 0.05);
    CHECK(fit.eps <= 0.2 + 0.05);
}

TEST_CASE("fitted envelope is feasible on its samples") {
    Propagator prop(make_diag_tsin(1.0, 0.3));
    DichotomyParams p;
    auto fit = test_nonuniform_dichotomy(prop, 0.0, p);
    REQUIRE(fit.verdict == Verdict::NED);
    CHECK(fit.max_envelope_residual <= 1e-9);
    double logK = std::log(fit.K);
    for (const auto& s : fit.samples_P) CHECK(s.L <= logK - fit.alpha * s.d + fit.eps * s.u + 1e-9);
    for (const auto& s : fit.samples_Q) CHECK(s.L <= logK - fit.alpha * s.d + fit.eps * s.u + 1e-9);
}

TEST_CASE("uniform NED implies nonuniform NED with eps 0") {
    DichotomyParams p;
    std::vector<SystemSpec> systems = {make_constant(diag2(-1.0, 1.0)),
                                       make_coupled_constant(-1.0, 1.0, 1.0),
                                       make_jordan(2, 0.0)};
    for (const auto& sys : systems) {
        Propagator prop(sys);
        DichotomyAnalyzer an(prop, p);
        for (double g : {-0.6, 0.9}) {
            auto uf = an.test(g, true);
            if (uf.verdict != Verdict::NED) continue;
            auto nf = an.test(g, false);
            CHECK(nf.verdict == Verdict::NED);
            CHECK(nf.eps <= 0.0);
        }
    }
}

TEST_CASE("fiber identification: im P equals the stable basis") {
    Propagator prop(make_coupled_constant(-1.0, 1.0, 1.0));
    DichotomyParams p;
    auto est = estimate_splitting(prop, 0.0, p.horizon, p.anchors(), p.dead_band);
    REQUIRE(est.consistent);
    auto fam = build_projector_family(est);
    for (size_t i = 0; i < fam.anchors.size(); ++i) {
        // largest principal angle between im P(s) and the stable basis
        Eigen::JacobiSVD<MatrixXd> svd(fam.P[i], Eigen::ComputeFullU);
        MatrixXd imP = svd.matrixU().leftCols(est.rank);
        double c = Eigen::JacobiSVD<MatrixXd>(imP.transpose() * est.stable_basis[i])
                       .singularValues()
                       .minCoeff();
        CHECK(std::acos(std::min(1.0, c)) <= 1e-4);
    }
}

TEST_CASE("exponential boundedness") {
    DichotomyParams p;
    SUBCASE("scalar pure decay") {
        MatrixXd c(1, 1);
        c << -1.0;
        Propagator prop(make_constant(c));
        auto g = check_exponential_boundedness(prop, p);
        CHECK(g.feasible);
        CHECK(g.a == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(g.eps == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(g.K == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("dominant eigenvalue") {
        Propagator prop(make_constant(diag2(-1.0, 2.0)));
        auto g = check_exponential_boundedness(prop, p);
        CHECK(g.a == doctest::Approx(2.0).epsilon(1e-4));
    }
    SUBCASE("scalar nonuniform example") {
        Propagator prop(make_scalar_tsin(-1.0, -0.1));
        auto g = check_exponential_boundedness(prop, p);
        CHECK(g.feasible);
        CHECK(g.a <= 1.1 + 0.1);
        CHECK(g.eps <= 0.2 + 0.1);
    }
}

TEST_CASE("horizon stability of the fitted constants") {
    DichotomyParams p;
    DichotomyParams p2 = p;
    p2.horizon = 2.0 * p.horizon;
    std::vector<std::pair<SystemSpec, double>> cases = {
        {make_constant(diag2(-1.0, 1.0)), 0.0},
        {make_scalar_tsin(-1.0, -0.1), 0.0},
        {make_diag_tsin(1.0, 0.3), 0.0},
    };
    for (const auto& [sys, g] : cases) {
        Propagator prop(sys);
        auto f1 = test_nonuniform_dichotomy(prop, g, p);
        auto f2 = test_nonuniform_dichotomy(prop, g, p2);
        REQUIRE(f1.verdict == Verdict::NED);
        REQUIRE(f2.verdict == Verdict::NED);
        CHECK(std::abs(f1.alpha - f2.alpha) <= 0.02);
        CHECK(std::abs(f1.eps - f2.eps) <= 0.02);
    }
}
