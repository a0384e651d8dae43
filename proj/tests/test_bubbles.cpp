#include "doctest.h"
#include "ldet/bubbles.hpp"

#include <cmath>
#include <numbers>

using namespace ldet;

namespace {
constexpr double pi = std::numbers::pi;
constexpr double L = 2 * pi;

BubbleSpec two_points(double lambda, double delta = 0.5)
{
    return BubbleSpec::equal_masses({Vec4::Constant(pi / 2), Vec4::Constant(3 * pi / 2)}, lambda, delta);
}

std::vector<double> geometric(double a, double b, int count)
{
    std::vector<double> v;
    for (int i = 0; i < count; ++i)
        v.push_back(a * std::pow(b / a, double(i) / (count - 1)));
    return v;
}

// 2π² ∫_0^{λδ} (Δφ)²/λ⁴ s³ ds for the pure kernel log(2λ/(1+s²)), in closed form:
// with v = 1 + s² the integrand is 16π²(1/v + 1/v² − 1/v³ − 1/v⁴) dv
double core_dirichlet(double lambda, double delta)
{
    const double b = lambda * delta;
    auto P = [](double v) { return std::log(v) - 1 / v + 1 / (2 * v * v) + 1 / (3 * v * v * v); };
    return 16 * pi * pi * (P(1 + b * b) - P(1));
}
} // namespace

TEST_CASE("cutoff profile")
{
    const double d = 0.3;
    CHECK(chi_delta(d / 2, d) == d / 2);
    CHECK(chi_delta(3 * d, d) == 2 * d);
    CHECK(chi_delta(2 * d, d) == doctest::Approx(2 * d));
    double prev = 0.0;
    for (int i = 0; i <= 4000; ++i) {
        const double t = 3 * d * i / 4000.0;
        const double c = chi_delta(t, d);
        CHECK(c >= prev);
        if (t >= d && t <= 2 * d) {
            CHECK(c >= d - 1e-15);
            CHECK(c <= 2 * d + 1e-15);
        }
        prev = c;
    }
    // derivatives against central differences, and C² matching at δ and 2δ
    const double h = 1e-6;
    for (double t : {0.1, 0.35, 0.42, 0.5, 0.58, 0.7}) {
        CHECK(chi_delta_derivative(t, d, 1) ==
              doctest::Approx((chi_delta(t + h, d) - chi_delta(t - h, d)) / (2 * h)).epsilon(1e-7));
        CHECK(chi_delta_derivative(t, d, 2) ==
              doctest::Approx((chi_delta_derivative(t + h, d, 1) - chi_delta_derivative(t - h, d, 1)) / (2 * h))
                  .epsilon(1e-6)
                  .scale(1.0));
    }
    for (double t : {d, 2 * d})
        for (int k = 1; k <= 2; ++k)
            CHECK(chi_delta_derivative(t + 1e-9, d, k) == doctest::Approx(chi_delta_derivative(t - 1e-9, d, k)).scale(1.0).epsilon(1e-6));
}

TEST_CASE("BubbleSpec validation")
{
    auto s = two_points(10.0);
    CHECK_NOTHROW(s.validate(L));
    CHECK(s.regime() == doctest::Approx(5.0));
    auto bad = s;
    bad.sigma[0].t = 0.7;
    CHECK_THROWS(bad.validate(L));
    bad = s;
    bad.delta = L / 8;
    CHECK_THROWS(bad.validate(L));
    bad = s;
    bad.sigma[1].x = bad.sigma[0].x + Vec4(1.5, 0, 0, 0);
    CHECK_THROWS(bad.validate(L));
    bad.relax_separation = true;
    CHECK_NOTHROW(bad.validate(L));
    // separation is measured on the torus
    bad.sigma[1].x = bad.sigma[0].x + Vec4(L - 1.0, 0, 0, 0);
    bad.relax_separation = false;
    CHECK_THROWS(bad.validate(L));
    CHECK(s.to_json()["sigma"].size() == 2);
}

TEST_CASE("bubble values, plateau and derivatives")
{
    // at the centre of a single bubble: φ = log 2λ
    const double lam = 7.0;
    auto one = BubbleSpec::equal_masses({Vec4(1, 2, 3, 4)}, lam, 0.6);
    CHECK(bubble_point(one, Vec4(1, 2, 3, 4), L).u == doctest::Approx(std::log(2 * lam)).epsilon(1e-14));
    // inside B_δ the single bubble is the pure kernel
    for (double r : {0.01, 0.1, 0.5}) {
        const double s = lam * r;
        const auto p = bubble_point(one, Vec4(1 + r, 2, 3, 4), L);
        CHECK(p.u == doctest::Approx(std::log(2 * lam / (1 + s * s))).epsilon(1e-13));
        CHECK(p.lap == doctest::Approx(-lam * lam * (8 + 4 * s * s) / ((1 + s * s) * (1 + s * s))).epsilon(1e-12));
        const auto b = bubble_radial(one, 0, r);
        CHECK(b.lap(r) == doctest::Approx(p.lap).epsilon(1e-12));
    }
    // plateau: constant outside ∪B_{2δ}
    auto spec = two_points(5.0);
    const double c = bubble_plateau(spec);
    CHECK(c == doctest::Approx(std::log(2 * 5.0 / (1 + 25.0 * 4 * 0.25))).epsilon(1e-14));
    Grid4 g(12, L);
    auto phi = bubble_field(spec, g);
    int outside = 0;
    for (std::size_t s = 0; s < g.size(); ++s) {
        const Vec4 y = g.point(s);
        if (periodic_delta(y, spec.sigma[0].x, L).norm() >= 2 * spec.delta &&
            periodic_delta(y, spec.sigma[1].x, L).norm() >= 2 * spec.delta) {
            CHECK(phi[s] == c);
            ++outside;
        }
    }
    CHECK(outside > 0);
    // chain-rule gradient and Laplacian against finite differences, including the
    // cutoff layer and overlapping (relaxed) kernels
    auto close = BubbleSpec::equal_masses({Vec4(1, 1, 1, 1), Vec4(1.6, 1.2, 1, 1)}, 3.0, 0.4);
    close.sigma[0].t = 0.3;
    close.sigma[1].t = 0.7;
    close.relax_separation = true;
    NormalStream rng(5);
    for (const auto& sp : {spec, close}) {
        for (int i = 0; i < 20; ++i) {
            const Vec4 y = sp.sigma[i % 2].x + 0.5 * Vec4(rng.next(), rng.next(), rng.next(), rng.next());
            const auto p = bubble_point(sp, y, L);
            const double h = 1e-4;
            double lap = 0.0;
            for (int a = 0; a < 4; ++a) {
                Vec4 e = Vec4::Zero();
                e[a] = h;
                const double up = bubble_point(sp, y + e, L).u, um = bubble_point(sp, y - e, L).u;
                CHECK(p.grad[a] == doctest::Approx((up - um) / (2 * h)).epsilon(1e-6).scale(1.0));
                lap += (up - 2 * p.u + um) / (h * h);
            }
            CHECK(p.lap == doctest::Approx(lap).epsilon(1e-4).scale(1.0));
        }
    }
}

TEST_CASE("kernel Laplacian against the spectral Laplacian")
{
    // window the kernel K = 1/(1+λ²|x|²) by a narrow Gaussian η so that the product is
    // smooth and periodic, then compare Δ(Kη) with the closed form ηΔK + 2∇K·∇η + KΔη
    const double lam = 1.0, w = 0.42;
    Grid4 g(48, L);
    const Vec4 c = Vec4::Constant(pi);
    auto f = ScalarField::from_function(g, [&](const Vec4& y) {
        const Vec4 x = y - c;
        return std::exp(-x.squaredNorm() / (2 * w * w)) / (1 + lam * lam * x.squaredNorm());
    });
    auto lap = laplacian(f);
    double worst = 0.0, scale = 0.0;
    for (std::size_t s = 0; s < g.size(); ++s) {
        const Vec4 x = g.point(s) - c;
        const double r2 = x.squaredNorm(), q = 1 + lam * lam * r2;
        const double K = 1 / q, eta = std::exp(-r2 / (2 * w * w));
        const double lapK = -8 * lam * lam / (q * q * q);
        const double dK_dot_deta = (-2 * lam * lam / (q * q)) * (-1 / (w * w)) * r2 * eta; // (∇K·∇η)
        const double lap_eta = eta * (r2 / (w * w * w * w) - 4 / (w * w));
        const double want = eta * lapK + 2 * dK_dot_deta + K * lap_eta;
        worst = std::max(worst, std::abs(lap[s] - want));
        scale = std::max(scale, std::abs(want));
    }
    CHECK(worst < 1e-6 * scale);
}

TEST_CASE("analytic energies")
{
    Grid4 g(16, L);
    auto flat = ConformalMetric::flat(g);
    const auto gm = gamma_triple(0, 6, 1);
    // the core integral over B_δ of a single bubble against its closed form
    {
        const double lam = 1e4, delta = 0.5;
        auto one = BubbleSpec::equal_masses({Vec4::Constant(pi)}, lam, delta);
        const auto e = bubble_energy(gamma_triple(0, 1, 0), flat, one);
        // the cutoff layer [δ, 2δ] contributes O(1) + O((λδ)⁻²); compare increments in λ
        auto two = one.with_lambda(2 * lam);
        const auto e2 = bubble_energy(gamma_triple(0, 1, 0), flat, two);
        CHECK(e2.P_part - e.P_part ==
              doctest::Approx(core_dirichlet(2 * lam, delta) - core_dirichlet(lam, delta)).epsilon(1e-6));
        CHECK(e.III_part == 0.0);
        CHECK(e.path == "analytic");
    }
    // against the spectral grid path at a resolved λ (algebraic convergence: the cutoff is C²)
    {
        Grid4 g32(32, L);
        auto m32 = ConformalMetric::flat(g32);
        auto spec = BubbleSpec::equal_masses({Vec4::Constant(pi)}, 1.0, 0.7);
        const auto a = bubble_energy(gm, m32, spec, EnergyPath::analytic);
        const auto b = bubble_energy(gm, m32, spec, EnergyPath::grid);
        CHECK(b.path == "grid");
        CHECK(a.P_part == doctest::Approx(b.P_part).epsilon(0.01));
        CHECK(a.III_part == doctest::Approx(b.III_part).epsilon(0.01));
        CHECK(a.F == doctest::Approx(b.F).epsilon(0.01));
        CHECK(a.deficit == doctest::Approx(b.deficit).epsilon(0.03));
        CHECK(a.mass_gap == doctest::Approx(b.mass_gap).epsilon(0.01));
    }
    // the grid path guards the core resolution; the analytic path needs a flat metric
    CHECK_THROWS(bubble_energy(gm, flat, two_points(50.0), EnergyPath::grid));
    auto curved = ConformalMetric(random_field(g, RandomRecipe{1, 0.2}, 3));
    CHECK_THROWS(bubble_energy(gm, curved, two_points(5.0), EnergyPath::analytic));
    CHECK_NOTHROW(bubble_energy(gm, curved, two_points(2.0)));
}

TEST_CASE("energy growth slopes")
{
    Grid4 g(16, L);
    auto flat = ConformalMetric::flat(g);
    const auto lambdas = geometric(1e2, 1e4, 9);
    for (const auto& gm : {gamma_triple(0, 6, 1), gamma_preset("dirac_squared"), gamma_triple(0.5, 2, 0.1)}) {
        auto one = BubbleSpec::equal_masses({Vec4::Constant(pi / 2)}, 1, 0.5);
        auto e1 = energy_growth(gm, flat, one, lambdas);
        CHECK(e1.expected_slope == doctest::Approx(32 * pi * pi * gm.g2));
        CHECK(e1.relative_error() < 0.05);
        CHECK(e1.III_ratio() < 0.05);
        auto e2 = energy_growth(gm, flat, two_points(1), lambdas);
        CHECK(e2.relative_error() < 0.08);
        CHECK(e2.III_ratio() < 0.05);
        CHECK(e2.P_slope + e2.III_slope == doctest::Approx(e2.slope));
        // with a total mass T above 8π²γ2 > 0 per point, F − T(log⨍e^{4φ} − 4φ̄) → −∞
        const double T = 1.5 * 8 * pi * pi * gm.g2;
        if (gm.g2 > 0)
            CHECK(e1.rows.back().F - T * e1.rows.back().mass_gap < e1.rows.front().F - T * e1.rows.front().mass_gap - 1000);
        // and the gap itself grows like 4 log λ
        CHECK((e1.rows.back().mass_gap - e1.rows.front().mass_gap) / std::log(100.0) == doctest::Approx(4.0).epsilon(1e-3));
    }
    auto e = energy_growth(gamma_triple(0, 6, 1), flat, two_points(1), lambdas);
    const std::string csv = e.to_csv();
    CHECK(csv.rfind("lambda,F,P_part,III_part,deficit\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
    CHECK(e.to_json()["rows"].size() == 9);
    // preconditions on the λ-list
    CHECK_THROWS(energy_growth(gamma_triple(0, 6, 1), flat, two_points(1), geometric(1e2, 1e3, 5)));
    CHECK_THROWS(energy_growth(gamma_triple(0, 6, 1), flat, two_points(1), {100, 300, 10000}));
}

TEST_CASE("volume concentration")
{
    auto spec = two_points(1);
    spec.sigma[0].t = 0.3;
    spec.sigma[1].t = 0.7;
    auto vf = volume_fractions(spec.with_lambda(1e4), L);
    CHECK(std::abs(vf[0] - 0.3) < 0.02 * 0.3);
    CHECK(std::abs(vf[1] - 0.7) < 0.02 * 0.7);
    // the fractions improve with λ
    auto v1 = volume_fractions(spec.with_lambda(2), L);
    CHECK(std::abs(v1[0] - 0.3) > std::abs(vf[0] - 0.3));
    // the grid quadrature at a resolved λ agrees
    Grid4 g(24, L);
    auto f = normalized_exp4(bubble_field(spec.with_lambda(2), g));
    const ScalarField ball = ScalarField::from_function(
        g, [&](const Vec4& y) { return periodic_delta(y, spec.sigma[0].x, L).norm() < 2 * spec.delta ? 1.0 : 0.0; });
    CHECK(integrate(f, ball) == doctest::Approx(v1[0]).epsilon(0.05));
}

TEST_CASE("concentration distance surrogate")
{
    CHECK_THROWS(concentration_distance(ScalarField(Grid4(8, L), 1.0 / std::pow(L, 4)), 0));
    CHECK_THROWS(concentration_distance(ScalarField(Grid4(8, L), 1.0), 1));
    // uniform measure, j = 1: bounded below across resolutions
    for (int n : {8, 12, 16}) {
        Grid4 g(n, L);
        auto r = concentration_distance(ScalarField(g, 1.0 / g.volume()), 1);
        CHECK(r.lower_certified);
        CHECK(r.lower > 0.2);
        CHECK(r.lower <= r.value);
        CHECK(r.value <= r.upper);
    }
    // a mollified spike: within the transport bound, below twice the mollifier width
    {
        Grid4 g(16, L);
        const double w = 0.4;
        const Vec4 c(pi + 0.1, pi, pi - 0.05, pi);
        auto f = ScalarField::from_function(g, [&](const Vec4& y) { return std::exp(-(y - c).squaredNorm() / (2 * w * w)); });
        f = (1.0 / integrate(f)) * f;
        auto r = concentration_distance(f, 1);
        CHECK(r.value <= r.upper);
        CHECK(r.upper < 2 * w);
        CHECK((r.sigma[0].x - c).norm() < 0.5 * g.spacing());
    }
    // bubbles with k = j: monotone decrease over λ doublings, weights approach σ
    {
        Grid4 g(16, L);
        double prev = 1e300;
        ConcentrationResult last;
        for (double lam = 1; lam <= 32; lam *= 2) {
            auto spec = two_points(lam);
            spec.sigma[0].t = 0.4;
            spec.sigma[1].t = 0.6;
            auto r = concentration_distance(normalized_exp4(bubble_field(spec, g)), 2);
            CHECK(r.value < prev);
            CHECK(!r.lower_certified);
            prev = r.value;
            last = r;
        }
        CHECK(last.value < 1e-4);
        const double t0 = (last.sigma[0].x - Vec4::Constant(pi / 2)).norm() < 1 ? last.sigma[0].t : last.sigma[1].t;
        CHECK(t0 == doctest::Approx(0.4).epsilon(1e-3));
        CHECK(last.to_json()["sigma"].size() == 2);
    }
}

TEST_CASE("improved Moser-Trudinger scan")
{
    Grid4 g(16, L);
    auto flat = ConformalMetric::flat(g);
    const auto gm = gamma_triple(0, 6, 1);
    std::vector<ScalarField> family;
    for (double lam : {0.5, 1.0, 2.0})
        family.push_back(bubble_field(two_points(lam, 0.6), g));
    // ℓ = 0: a single region, nothing excluded, C is the plain scan maximum
    auto whole = improved_mt_check(gm, flat, family, {[](const Vec4&) { return true; }}, 0.9, 0.1);
    CHECK(whole.excluded == 0);
    CHECK(whole.regions == 1);
    double want = -1e300;
    for (const auto& w : family) {
        const double lhs = 8 * pi * pi * (std::log(g.volume()) + log_mean_exp4(flat, w) - 4 * w.mean());
        const double rhs = paneitz_form(flat, w) + eval_III(flat, w) / 6.0;
        want = std::max(want, lhs - 1.1 * rhs);
    }
    CHECK(whole.empirical_C == doctest::Approx(want).epsilon(1e-12));
    // two half-tori holding one bubble each: spreading holds; C does not grow under λ-doubling
    std::vector<Region> halves{[](const Vec4& y) { return y[0] < pi; }, [](const Vec4& y) { return y[0] >= pi; }};
    auto spread = improved_mt_check(gm, flat, family, halves, 0.3, 0.1);
    CHECK(spread.excluded == 0);
    CHECK(spread.rows[0].fractions[0] == doctest::Approx(0.5).epsilon(1e-6));
    auto doubled = family;
    doubled.push_back(bubble_field(two_points(4.0, 0.6), g));
    auto spread2 = improved_mt_check(gm, flat, doubled, halves, 0.3, 0.1);
    CHECK(spread2.empirical_C == doctest::Approx(spread.empirical_C).epsilon(1e-12));
    // a single bubble violates spreading and is excluded
    auto single = BubbleSpec::equal_masses({Vec4::Constant(pi / 2)}, 3.0, 0.6);
    doubled.push_back(bubble_field(single, g));
    auto filtered = improved_mt_check(gm, flat, doubled, halves, 0.3, 0.1);
    CHECK(filtered.excluded == 1);
    CHECK(!filtered.rows.back().included);
    CHECK(filtered.to_json()["excluded"] == 1);
    CHECK_THROWS(improved_mt_check(gm, flat, family, {[](const Vec4&) { return true; }, [](const Vec4&) { return true; }}, 0.1, 0.1));
}
