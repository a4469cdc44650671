#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ned/spectrum.hpp"
#include "ned/system.hpp"

using namespace ned;

namespace {

MatrixXd diagm(std::initializer_list<double> v) {
    MatrixXd m = MatrixXd::Zero((long)v.size(), (long)v.size());
    int i = 0;
    for (double x : v) m(i, i) = x, ++i;
    return m;
}

}  // namespace

TEST_CASE("classify_gamma on the scalar nonuniform example") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    DichotomyAnalyzer an(prop, {});
    auto lo = classify_gamma(an, -2.0);
    CHECK(lo.kind == GammaKind::Resolvent);
    CHECK(lo.dim_S == 0);
    auto hi = classify_gamma(an, 0.0);
    CHECK(hi.kind == GammaKind::Resolvent);
    CHECK(hi.dim_S == 1);
    auto mid = classify_gamma(an, -1.0);
    CHECK(mid.kind == GammaKind::Spectrum);
}

TEST_CASE("search interval from the growth bound") {
    GrowthBound g;
    g.feasible = true;
    g.a = 2.0;
    auto r = search_interval_from_growth(g);
    CHECK(r.first == doctest::Approx(-2.5));
    CHECK(r.second == doctest::Approx(2.5));

    g.a = 0.0;
    r = search_interval_from_growth(g);
    CHECK(r.first == doctest::Approx(-0.5));
    CHECK(r.second == doctest::Approx(0.5));

    g.feasible = false;
    CHECK_THROWS(search_interval_from_growth(g));
}

TEST_CASE("search interval contains the computed spectrum") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    DichotomyAnalyzer an(prop, {});
    auto g = an.growth_bound();
    REQUIRE(g.feasible);
    auto r = search_interval_from_growth(g);
    auto spec = compute_spectrum(prop, r);
    REQUIRE(spec.intervals.size() == 1);
    CHECK(r.first <= spec.intervals[0].a);
    CHECK(spec.intervals[0].b <= r.second);
}

TEST_CASE("spectrum of a hyperbolic constant system is its eigenvalue pair") {
    Propagator prop(make_constant(diagm({-1.0, 1.0})));
    auto spec = compute_spectrum_auto(prop);
    REQUIRE(spec.intervals.size() == 2);
    CHECK(std::abs(spec.intervals[0].a - (-1.0)) <= 0.02);
    CHECK(std::abs(spec.intervals[0].b - (-1.0)) <= 0.02);
    CHECK(std::abs(spec.intervals[1].a - 1.0) <= 0.02);
    CHECK(std::abs(spec.intervals[1].b - 1.0) <= 0.02);
    CHECK(spec.intervals[0].dim == 1);
    CHECK(spec.intervals[1].dim == 1);
}

TEST_CASE("spectrum of the scalar nonuniform example") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    auto spec = compute_spectrum_auto(prop);
    REQUIRE(spec.intervals.size() == 1);
    CHECK(std::abs(spec.intervals[0].a - (-1.1)) <= 0.05);
    CHECK(std::abs(spec.intervals[0].b - (-0.9)) <= 0.05);
    CHECK(spec.intervals[0].dim == 1);
}

TEST_CASE("spectrum of a nilpotent block is a point of full multiplicity") {
    // oracle: |e^{(J - gamma)t}| = e^{-gamma t} poly(t), so every gamma != 0
    // admits a dichotomy with a trivial projector and 0 does not
    Propagator prop(make_jordan(2, 0.0));
    auto spec = compute_spectrum(prop, {-1.0, 1.0});
    REQUIRE(spec.intervals.size() == 1);
    CHECK(std::abs(spec.intervals[0].a) <= 0.02);
    CHECK(std::abs(spec.intervals[0].b) <= 0.02);
    CHECK(spec.intervals[0].dim == 2);
}

TEST_CASE("spectral manifolds of constant diagonal systems") {
    SUBCASE("two one-dimensional manifolds") {
        Propagator prop(make_constant(diagm({-1.0, 1.0})));
        auto spec = compute_spectrum_auto(prop);
        REQUIRE(spec.manifolds.size() == 4);  // W_0, W_1, W_2, W_3
        CHECK(spec.manifold_dims[0] == 0);
        CHECK(spec.manifold_dims[1] == 1);
        CHECK(spec.manifold_dims[2] == 1);
        CHECK(spec.manifold_dims[3] == 0);
        CHECK(std::abs(spec.manifolds[1](0, 0)) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::abs(spec.manifolds[2](1, 0)) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(spec.stacked_condition < 1e6);
    }
    SUBCASE("eigenspace multiplicities") {
        Propagator prop(make_constant(diagm({-2.0, -2.0, 3.0})));
        auto spec = compute_spectrum_auto(prop);
        REQUIRE(spec.intervals.size() == 2);
        CHECK(spec.intervals[0].dim == 2);
        CHECK(spec.intervals[1].dim == 1);
        int total = 0;
        for (int d : spec.manifold_dims) total += d;
        CHECK(total == 3);
        CHECK(spec.stacked_condition < 1e6);
    }
}

TEST_CASE("manifolds are independent of the witness choice") {
    Propagator prop(make_constant(diagm({-1.0, 1.0})));
    DichotomyAnalyzer an(prop, {});
    SpectralDecomposition d1, d2;
    d1.intervals = {{-1.0, -1.0, 1}, {1.0, 1.0, 1}};
    d1.witnesses = {-2.0, 0.0, 2.0};
    d1.witness_dims = {0, 1, 2};
    d2 = d1;
    d2.witnesses = {-2.0, 0.3, 2.0};
    spectral_manifold_bases(an, d1);
    spectral_manifold_bases(an, d2);
    REQUIRE(d1.manifolds.size() == d2.manifolds.size());
    for (size_t i = 0; i < d1.manifolds.size(); ++i) {
        if (d1.manifolds[i].cols() == 0) continue;
        double c = Eigen::JacobiSVD<MatrixXd>(d1.manifolds[i].transpose() * d2.manifolds[i])
                       .singularValues()
                       .minCoeff();
        CHECK(std::acos(std::min(1.0, c)) <= 1e-4);
    }
}

TEST_CASE("dimension monotonicity and openness across a scan") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    auto spec = compute_spectrum_auto(prop);
    int prev = -1;
    double prev_gamma = -1e300;
    for (const auto& c : spec.samples) {
        if (c.kind != GammaKind::Resolvent) continue;
        REQUIRE(c.gamma > prev_gamma);
        CHECK(c.dim_S >= prev);
        prev = c.dim_S;
        prev_gamma = c.gamma;
    }
}

TEST_CASE("resolvent openness spot checks") {
    DichotomyParams dp;
    std::vector<std::pair<SystemSpec, double>> spots = {
        {make_constant(diagm({-1.0, 1.0})), 0.0},
        {make_scalar_tsin(-1.0, -0.1), 0.0},
    };
    for (const auto& [sys, g] : spots) {
        Propagator prop(sys);
        DichotomyAnalyzer an(prop, dp);
        auto fit = an.test(g, false);
        REQUIRE(fit.verdict == Verdict::NED);
        if (!(fit.eps < fit.alpha / 2.0)) continue;
        for (double z : {g - fit.alpha / 2.0, g + fit.alpha / 2.0}) {
            auto c = classify_gamma(an, z);
            CHECK(c.kind == GammaKind::Resolvent);
        }
    }
}

TEST_CASE("anchor independence of spectrum endpoints") {
    Propagator prop(make_scalar_tsin(-1.0, -0.1));
    SpectrumParams s0, s3;
    s3.anchor_offset = 3.0;
    auto a = compute_spectrum(prop, {-1.6, -0.4}, s0);
    auto b = compute_spectrum(prop, {-1.6, -0.4}, s3);
    REQUIRE(a.intervals.size() == 1);
    REQUIRE(b.intervals.size() == 1);
    CHECK(std::abs(a.intervals[0].a - b.intervals[0].a) <= 2 * s0.endpoint_tol + 1e-12);
    CHECK(std::abs(a.intervals[0].b - b.intervals[0].b) <= 2 * s0.endpoint_tol + 1e-12);
}

TEST_CASE("empty-looking spectrum is flagged low confidence") {
    // scan a window of pure resolvent for diag(-1, 1)
    Propagator prop(make_constant(diagm({-1.0, 1.0})));
    auto spec = compute_spectrum(prop, {-0.6, 0.6});
    CHECK(spec.intervals.empty());
    CHECK(spec.low_confidence);
}

TEST_CASE("interval count stays within the dimension") {
    Propagator prop(make_constant(diagm({-2.0, -2.0, 3.0})));
    auto spec = compute_spectrum_auto(prop);
    CHECK((int)spec.intervals.size() <= 3);
    for (size_t i = 0; i + 1 < spec.intervals.size(); ++i)
        CHECK(spec.intervals[i].b < spec.intervals[i + 1].a);
}
