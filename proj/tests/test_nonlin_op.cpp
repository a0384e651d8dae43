#include "doctest.h"
#include "ldet/functionals.hpp"
#include "ldet/nonlin_op.hpp"

#include <cmath>
#include <numbers>

using namespace ldet;

namespace {
constexpr double pi = std::numbers::pi;
Grid4 grid16() { return Grid4(16, 2 * pi); }
const RandomRecipe kField{2, 0.3, 0.25};
const RandomRecipe kTest{2, 1.0, 0.25};
} // namespace

TEST_CASE("apply_N: trivial inputs and divergence structure")
{
    Grid4 g = grid16();
    ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 1));
    auto gm = gamma_triple(0, 6, 1);
    CHECK(apply_N(gm, m, ScalarField(g, 0.0)).max_abs() == 0.0);
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto w = random_field(g, kField, 10 + s);
        auto N = apply_N(gm, m, w);
        const double l1 = integrate(m, ScalarField(g, N.values().abs()));
        CHECK(std::abs(integrate(m, N)) < 1e-8 * l1);
        // filtered variant keeps the divergence structure
        auto Nf = apply_N(gm, m, w, 0.5);
        CHECK(std::abs(integrate(m, Nf)) < 1e-8 * l1);
    }
}

TEST_CASE("weak pairing matches the strong form")
{
    Grid4 g = grid16();
    ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 2));
    for (auto gm : {gamma_triple(0, 6, 1), gamma_preset("dirac_squared"), gamma_triple(0, 1, 0)}) {
        auto w = random_field(g, kField, 20);
        auto phi = random_field(g, kTest, 21);
        const auto wp = weak_pair(gm, m, w, phi);
        const double strong = integrate(m, apply_N(gm, m, w) * phi);
        CHECK(std::abs(wp.value - strong) < 1e-8 * std::abs(strong));
        CHECK(wp.value == doctest::Approx(wp.biharmonic + wp.ricci + wp.quadratic + wp.cubic + wp.scalar));
        CHECK(std::abs(weak_pair(gm, m, w, ScalarField(g, 1.0)).value) < 1e-12 * std::abs(strong));
        CHECK(weak_pair(gm, m, ScalarField(g, 0.0), phi).value == 0.0);
        // linear in φ
        auto psi = random_field(g, kTest, 22);
        const double lin = weak_pair(gm, m, w, 2.0 * phi + (-3.0) * psi).value;
        CHECK(lin == doctest::Approx(2.0 * wp.value - 3.0 * weak_pair(gm, m, w, psi).value).epsilon(1e-11));
    }
}

TEST_CASE("linearisation against finite differences")
{
    Grid4 g = grid16();
    ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 3));
    auto gm = gamma_preset("conformal_laplacian");
    auto w = random_field(g, kField, 30);
    auto v = random_field(g, kField, 31);
    const double t = 1e-4;
    const ScalarField fd = (1.0 / (2 * t)) * (apply_N(gm, m, w + t * v) - apply_N(gm, m, w + (-t) * v));
    const ScalarField lin = linearized_N(gm, m, w, v);
    CHECK((fd.values() - lin.values()).abs().maxCoeff() < 1e-7 * lin.max_abs());
}

TEST_CASE("gradient law: 4𝒩 is the derivative of J")
{
    Grid4 g = grid16();
    ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 4));
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto w = random_field(g, kField, 40 + s);
        auto phi = random_field(g, kTest, 50 + s);
        auto r = gradient_identity_residual(gamma_preset("dirac_squared"), m, w, phi);
        CHECK(r.relative() < 1e-6);
        CHECK(r.pass());
    }
    auto r0 = gradient_identity_residual(gamma_triple(0, 6, 1), m, ScalarField(g), ScalarField(g));
    CHECK(r0.residual == 0.0);
    // quadratic regime: γ3 = 0 on the flat torus, where the central difference
    // is exact for every t (small t only adds cancellation round-off)
    auto flat = ConformalMetric::flat(g);
    auto w = random_field(g, kField, 60);
    auto phi = random_field(g, kTest, 61);
    for (double t : {1e-2, 0.1, 1.0, 10.0})
        CHECK(gradient_identity_residual(gamma_triple(0, 3, 0), flat, w, phi, t).relative() < 1e-10);
}

TEST_CASE("difference identity")
{
    Grid4 g = grid16();
    auto gm = gamma_triple(0.5, 10, 1);
    SUBCASE("w1 = w2")
    {
        ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 5));
        auto w = random_field(g, kField, 70);
        auto r = difference_identity_residual(gm, m, w, w, random_field(g, kTest, 71));
        CHECK(r.lhs == 0.0);
        CHECK(std::abs(r.rhs) < 1e-14);
    }
    SUBCASE("γ2 = 6γ3 on the flat torus keeps the three ĝ terms only")
    {
        auto m = ConformalMetric::flat(g);
        auto r = difference_identity_residual(gamma_triple(0, 6, 1), m, random_field(g, kField, 72),
                                              random_field(g, kField, 73), random_field(g, kTest, 74));
        CHECK(r.terms[3].second == 0.0);
        CHECK(r.terms[4].second == 0.0);
        CHECK(r.relative() < 1e-6);
    }
    SUBCASE("random triples on a curved torus")
    {
        ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 6));
        for (std::uint64_t s = 0; s < 3; ++s) {
            auto r = difference_identity_residual(gm, m, random_field(g, kField, 80 + s),
                                                  random_field(g, kField, 90 + s),
                                                  random_field(g, kTest, 100 + s));
            CHECK(r.relative() < 1e-6);
            const auto j = to_json(r);
            CHECK(j["identity"] == "difference");
            CHECK(j["terms"].size() == 5);
            CHECK(r.inputs_hash.size() == 16);
        }
    }
}

TEST_CASE("Bochner identity fixes the Ricci sign")
{
    Grid4 g = grid16();
    auto p = random_field(g, kTest, 110), phi = random_field(g, kTest, 111);
    CHECK(bochner_residual(ConformalMetric::flat(g), p, phi).relative() < 1e-10);
    ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 7));
    auto r = bochner_residual(m, p, phi);
    CHECK(r.relative() < 1e-6);
    // a flipped Ricci sign would leave a residual of twice the curvature term
    CHECK(std::abs(r.lhs) > 1e3 * r.residual);
}

TEST_CASE("psi profiles")
{
    for (auto p : {PsiProfile::from_name("linear"), PsiProfile::from_name("m0", 2.0),
                   PsiProfile::from_name("truncation", 0.5)}) {
        for (double s : {-3.1, -0.7, -0.2, 0.0, 0.3, 0.45, 0.9, 2.7}) {
            const double h = 1e-5;
            CHECK(p.dpsi(s) == doctest::Approx((p.psi(s + h) - p.psi(s - h)) / (2 * h)).epsilon(1e-7));
            CHECK(p.ddpsi(s) == doctest::Approx((p.dpsi(s + h) - p.dpsi(s - h)) / (2 * h)).epsilon(1e-6));
        }
    }
    auto m0 = PsiProfile::from_name("m0", 1.5);
    // ψ' even ⇒ ψ(t) + ψ(−t) = 2ψ(0) = ∫_ℝ ψ'
    CHECK(m0.psi(2.3) + m0.psi(-2.3) == doctest::Approx(2 * m0.psi(0.0)).epsilon(1e-13));
    // ψ(t) → 0 as t → −∞ (tail ∫_{−∞}^t ~ 3|t|^{−1/3})
    CHECK(m0.psi(-1e4) == doctest::Approx(3.0 * std::pow(1e4, -1.0 / 3.0)).epsilon(1e-3));
    auto tr = PsiProfile::from_name("truncation", 2.0);
    CHECK(tr.psi(2.0 - 1e-12) == doctest::Approx(tr.psi(2.0 + 1e-12)));
    CHECK(tr.dpsi(2.0 + 1e-9) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(tr.ddpsi(2.0 + 1e-9)) < 1e-6);
    CHECK(tr.psi(1e9) < 16.0); // bounded by 8k
    CHECK_THROWS(PsiProfile::from_name("cubic"));
}

TEST_CASE("localized test identity")
{
    Grid4 g = grid16();
    auto gm = gamma_triple(0, 10, 1);
    SUBCASE("unit cut-off and linear ψ reduce to the weak pairing")
    {
        auto m = ConformalMetric::flat(g);
        auto w = random_field(g, kField, 120);
        auto r = localized_identity_residual(gm, m, w, PsiProfile{}, ScalarField(g, 1.0), 0.1);
        CHECK(r.lhs == doctest::Approx(weak_pair(gm, m, w, w + (-0.1)).value).epsilon(1e-10));
        CHECK(r.relative() < 1e-10);
        CHECK(localized_identity_residual(gm, m, ScalarField(g), PsiProfile{}, ScalarField(g, 1.0), 0.0).residual
              == 0.0);
    }
    SUBCASE("bump cut-off, all profiles, curved torus")
    {
        ConformalMetric m(random_field(g, {1, 0.2, 0.3}, 8));
        auto chi = cosine_bump(g, Vec4(1.0, 2.0, 3.0, 4.0));
        for (auto p : {PsiProfile{}, PsiProfile::from_name("m0", 1.0), PsiProfile::from_name("truncation", 4.0)}) {
            auto w = random_field(g, kField, 130);
            auto r = localized_identity_residual(gm, m, w, p, chi, 0.05);
            CHECK(r.relative() < 1e-6);
        }
    }
}

TEST_CASE("Hodge decomposition")
{
    Grid4 g = grid16();
    auto p = random_field(g, {2, 1.0, 0.25}, 140), q = random_field(g, {2, 1.0, 0.25}, 141);
    SUBCASE("reconstruction and solenoidal remainder")
    {
        auto s = hodge_decompose(p, q, 0.1, 0.05);
        double rec = 0.0;
        for (int i = 0; i < 4; ++i)
            rec = std::max(rec, (s.potential_grad[i].values() + s.h[i].values() - s.field[i].values()).abs().maxCoeff());
        CHECK(rec < 1e-9);
        auto dh = divergence(s.h);
        CHECK(dh.max_abs() < 1e-9);
        CHECK(std::abs(dh.mean()) < 1e-12);
        CHECK(std::abs(s.phi.mean()) < 1e-14);
        // Δ²φ = Δ div(field) up to the Nyquist modes the first-derivative symbols drop
        auto lhs = bilaplacian(s.phi), rhs = laplacian(divergence(s.field));
        CHECK((lowpass(lhs, 0.8).values() - lowpass(rhs, 0.8).values()).abs().maxCoeff() < 1e-9 * rhs.max_abs());
    }
    SUBCASE("gradient fields have no remainder at zero exponent")
    {
        auto s = hodge_decompose(p, q, 0.5, 0.0);
        for (int i = 0; i < 4; ++i)
            CHECK(s.h[i].max_abs() < 1e-12);
    }
    SUBCASE("divergence-free fields are left alone")
    {
        VectorField F;
        auto d = gradient(p);
        F[0] = d[1];
        F[1] = -d[0];
        F[2] = ScalarField(g, 0.0);
        F[3] = ScalarField(g, 0.0);
        auto L = lambda_apply(F);
        for (int i = 0; i < 4; ++i)
            CHECK((L[i].values() - F[i].values()).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("remainder is linear in ε")
    {
        std::vector<double> r;
        for (double e : {0.1, 0.05, 0.025, 0.0125})
            r.push_back(hodge_ratio(hodge_decompose(p, q, 0.1, e), p, q));
        const double hi = *std::max_element(r.begin(), r.end()), lo = *std::min_element(r.begin(), r.end());
        CHECK(hi / lo < 2.0);
    }
    CHECK_THROWS(hodge_decompose(p, q, 0.1, 0.2));
    CHECK_THROWS(hodge_decompose(p, q, 0.0, 0.1));
}

TEST_CASE("commutator bound")
{
    Grid4 g(8, 2 * pi);
    auto F = gradient(random_field(g, {2, 1.0, 0.25}, 150));
    F[0] = F[0] + random_field(g, {2, 0.5, 0.25}, 151);
    auto Q = gradient(random_field(g, {2, 1.0, 0.25}, 152));
    auto rep = commutator_check(F, Q, {0.2, 0.1, 0.05, -0.05, -0.1, -0.2}, 0.1, 2.0, 0.25);
    CHECK(rep.ratio.size() == 6);
    CHECK(std::isfinite(rep.K));
    CHECK(rep.K > 0.0);
    // the commutator vanishes linearly in x, so the ratio stays bounded
    CHECK(rep.spread < 3.0);
    CHECK_THROWS(commutator_ratio(F, Q, 0.5, 0.1, 2.0, 0.25));
}
