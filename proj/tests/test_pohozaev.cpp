#include "doctest.h"
#include "ldet/nonlin_op.hpp"
#include "ldet/pohozaev.hpp"

#include <cmath>
#include <numbers>

using namespace ldet;

namespace {
constexpr double pi = std::numbers::pi;

double radial_boundary_value(double a, const GammaWeights& g)
{
    return -2 * pi * pi * (9 * g.g3 * std::pow(a, 4) + (g.g2 + 12 * g.g3) * a * a + 24 * g.g3 * std::pow(a, 3));
}

std::vector<GammaWeights> gammas()
{
    return {gamma_triple(0, 6, 1), gamma_preset("conformal_laplacian"), gamma_preset("dirac_squared"),
            gamma_triple(0, 3, 0)};
}

// manufactured solution i: bump + a few plane waves
JetFn manufactured(int i)
{
    NormalStream rng(1000 + i);
    const Vec4 c(0.3 * rng.next(), 0.3 * rng.next(), 0.3 * rng.next(), 0.3 * rng.next());
    return jet_sum(gaussian_bump(0.3 + 0.2 * rng.uniform(), c, 0.5 + 0.3 * rng.uniform()),
                   plane_wave_sum(random_plane_waves(3, 1, 0.15, 2000 + i)));
}
} // namespace

TEST_CASE("flat operator from jets matches the spectral operator")
{
    Grid4 g(16, 2 * pi);
    auto waves = random_plane_waves(5, 1, 0.2, 7);
    auto jet = plane_wave_sum(waves);
    auto u = ScalarField::from_function(g, [&](const Vec4& x) { return jet(x).u; });
    for (const auto& gm : gammas()) {
        auto N = apply_N(gm, ConformalMetric::flat(g), u);
        double worst = 0.0;
        for (std::size_t s = 0; s < g.size(); s += 101)
            worst = std::max(worst, std::abs(N[s] - flat_N(jet(g.point(s)), gm)));
        CHECK(worst < 1e-10 * std::max(1.0, N.max_abs()));
    }
}

TEST_CASE("jet providers agree with finite differences")
{
    const Vec4 x(0.2, -0.1, 0.4, 0.3);
    for (const JetFn& f : {gaussian_bump(0.7, Vec4(0.1, 0, 0, -0.2), 0.6), plane_wave_sum(random_plane_waves(3, 2, 1.0, 3)),
                           radial_log(-1.3, Vec4(0.5, 0.5, 0, 0))}) {
        const Jet j = f(x);
        const double h = 1e-4;
        for (int a = 0; a < 4; ++a) {
            Vec4 e = Vec4::Zero();
            e[a] = h;
            const Jet p = f(x + e), m = f(x - e);
            CHECK(j.grad[a] == doctest::Approx((p.u - m.u) / (2 * h)).epsilon(1e-6));
            CHECK(j.grad_lap[a] == doctest::Approx((p.lap() - m.lap()) / (2 * h)).epsilon(1e-6));
            for (int b = 0; b < 4; ++b)
                CHECK(j.hess(a, b) == doctest::Approx((p.grad[b] - m.grad[b]) / (2 * h)).epsilon(1e-6));
        }
        double lap_of_lap = 0.0;
        for (int a = 0; a < 4; ++a) {
            Vec4 e = Vec4::Zero();
            e[a] = h;
            lap_of_lap += (f(x + e).grad_lap[a] - f(x - e).grad_lap[a]) / (2 * h);
        }
        CHECK(j.bilap == doctest::Approx(lap_of_lap).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("boundary term of the logarithm")
{
    for (const auto& gm : gammas()) {
        PohozaevDomain ball{Vec4::Zero(), 1.0};
        CHECK(boundary_term(radial_log(-2.0), gm, ball) ==
              doctest::Approx(-8 * pi * pi * gm.g2).epsilon(1e-12));
        for (double a : {-3.0, -1.1, 0.4, 2.5}) {
            const double want = radial_boundary_value(a, gm);
            // ε-stability: the same value on every sphere
            for (double eps : {1.0, 0.1, 0.01})
                CHECK(std::abs(boundary_term(radial_log(a), gm, PohozaevDomain{Vec4::Zero(), eps}) - want) <
                      1e-10 * std::abs(want));
        }
        // the same boundary value around an off-origin singularity
        const Vec4 p(0.3, -1.0, 2.0, 0.5);
        CHECK(boundary_term(radial_log(-2.0, p), gm, PohozaevDomain{p, 0.7}) ==
              doctest::Approx(-8 * pi * pi * gm.g2).epsilon(1e-12));
        // constants and a = 0
        CHECK(boundary_term([](const Vec4&) { return Jet{}; }, gm, PohozaevDomain{}) == 0.0);
        PohozaevDomain zero{Vec4::Zero(), 1.0, 0.0, Vec4::Zero()};
        CHECK(boundary_term(manufactured(0), gm, zero) == 0.0);
    }
    CHECK(boundary_term(radial_log(-2.0), gamma_preset("conformal_laplacian"), PohozaevDomain{}) ==
          doctest::Approx(-8 * pi * pi * -4.0));
}

TEST_CASE("translation variant is linear in the shift")
{
    const auto gm = gamma_triple(0.2, 6, 1);
    auto u = manufactured(1);
    const Vec4 a(0.3, -0.2, 0.7, 0.1), b(-1.0, 0.4, 0.2, 0.5);
    auto B = [&](const Vec4& s) { return boundary_term(u, gm, PohozaevDomain{Vec4::Zero(), 1.0, 0.0, s}); };
    const double ba = B(a), bb = B(b), bab = B(2.5 * a - 1.5 * b);
    CHECK(std::abs(bab - (2.5 * ba - 1.5 * bb)) < 1e-12 * (std::abs(ba) + std::abs(bb)));
    // translation invariance of the log profile: no boundary flux of momentum
    CHECK(std::abs(boundary_term(radial_log(-2.0), gm, PohozaevDomain{Vec4::Zero(), 1.0, 0.0, a})) < 1e-10);
}

TEST_CASE("residual for the logarithm on annuli")
{
    for (const auto& gm : gammas()) {
        for (double a : {-2.0, -0.7, 1.3}) {
            PohozaevDomain ann{Vec4(0.1, 0.2, 0.3, 0.4), 2.0, 0.25};
            auto rep = pohozaev_residual(radial_log(a, ann.center), 0.0, nullptr, gm, ann);
            const double B = std::abs(radial_boundary_value(a, gm));
            CHECK(std::abs(rep.residual) < 1e-8 * B);
            CHECK(rep.volume_terms.at("remainder_volume_metric") == 0.0);
            CHECK(rep.volume_terms.at("bulk_exp") == 0.0);
        }
    }
    // u ≡ 0, μ = 0: every term vanishes
    auto rep = pohozaev_residual([](const Vec4&) { return Jet{}; }, 0.0, nullptr, gamma_triple(0, 6, 1), PohozaevDomain{});
    CHECK(rep.residual == 0.0);
    CHECK(rep.boundary_value == 0.0);
    for (const auto& [k, v] : rep.volume_terms)
        CHECK(v == 0.0);
    auto js = rep.to_json();
    CHECK(js["domain"]["variant"] == "dilation");
    CHECK(js["volume_terms"].contains("remainder_boundary_metric"));
}

TEST_CASE("manufactured solutions on the unit ball")
{
    for (int i = 0; i < 10; ++i) {
        const auto gm = i % 2 ? gamma_triple(0, 6, 1) : gamma_preset("dirac_squared");
        auto u = manufactured(i);
        const double mu = 0.5 * (i - 4);
        auto f = [&](const Vec4& x) { return flat_N(u(x), gm) - mu * std::exp(4 * u(x).u); };
        PohozaevDomain ball{Vec4(0.05 * i, 0, -0.1, 0), 1.0};
        auto rep = pohozaev_residual(u, mu, f, gm, ball);
        CHECK(rep.relative_residual() < 1e-6);
        CHECK(rep.forcing_defect < 1e-12);
        // the translation variant, too
        ball.shift = Vec4(0.3, -0.5, 0.2, 1.0);
        auto rt = pohozaev_residual(u, mu, f, gm, ball);
        CHECK(rt.relative_residual() < 1e-6);
        CHECK(rt.volume_terms.at("bulk_exp") == 0.0);
    }
    // a wrong forcing is detected
    auto u = manufactured(0);
    const auto gm = gamma_triple(0, 6, 1);
    CHECK_THROWS_AS(pohozaev_residual(u, 1.0, nullptr, gm, PohozaevDomain{}), std::invalid_argument);
    CHECK_THROWS(PohozaevDomain{Vec4::Zero(), 1.0, 2.0}.validate());
}

TEST_CASE("polynomial roots")
{
    auto r = real_polynomial_roots({-6, 11, -6, 1}); // (x−1)(x−2)(x−3)
    REQUIRE(r.size() == 3);
    CHECK(r[0] == doctest::Approx(1.0));
    CHECK(r[2] == doctest::Approx(3.0));
    CHECK(real_polynomial_roots({1, 0, 1}).empty());
    CHECK(real_polynomial_roots({5}).empty());
}

TEST_CASE("quantization consistency")
{
    auto cl = quantization_consistency(gamma_preset("conformal_laplacian"));
    CHECK(cl.unique_minus_two);
    CHECK(cl.beta_star == doctest::Approx(-32 * pi * pi));
    CHECK(quantization_consistency(gamma_preset("dirac_squared")).unique_minus_two);
    auto g6 = quantization_consistency(gamma_triple(0, 6, 1));
    CHECK(g6.unique_minus_two);
    CHECK(g6.beta_star == doctest::Approx(48 * pi * pi));
    // every listed root really solves its polynomial
    for (double a : g6.quartic_roots)
        CHECK(pohozaev_quartic(a, 6, 1) == doctest::Approx(g6.beta_star));
    for (double a : g6.cubic_roots)
        CHECK(alpha_beta_cubic(a, 6, 1) == doctest::Approx(g6.beta_star));
    for (double ratio = 6; ratio < 100; ratio *= 1.3)
        for (double g3 : {1.0, -0.5})
            CHECK(quantization_consistency(gamma_triple(0, ratio * g3, g3)).unique_minus_two);
    CHECK(quantization_consistency(gamma_triple(0, 6, 1)).to_json()["common_nonzero"].size() == 1);
    CHECK_THROWS(quantization_consistency(gamma_triple(0, 5, 1)));
}
