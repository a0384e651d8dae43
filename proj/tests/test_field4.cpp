#include "doctest.h"
#include "ldet/field4.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

using namespace ldet;

namespace {
constexpr double pi = std::numbers::pi;

// A fixed band-limited function that can be sampled on any grid.
double probe(const Vec4& x)
{
    return std::sin(x[0] + 0.3) * std::cos(2 * x[1]) + 0.5 * std::cos(x[2] - x[3] + 0.1)
         + 0.25 * std::sin(2 * x[0] + x[3]);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// Fourth-order central-difference Laplacian on the periodic grid.
Eigen::ArrayXd fd_laplacian(const ScalarField& f)
{
    const Grid4& g = f.grid();
    const int n = g.n();
    const double h = g.spacing();
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(g.size());
    for (std::size_t s = 0; s < g.size(); ++s) {
        auto i = g.unflatten(s);
        double acc = 0.0;
        for (int a = 0; a < 4; ++a) {
            auto at = [&](int off) {
                auto j = i;
                j[a] = (j[a] + off + n) % n;
                return f[g.index(j[0], j[1], j[2], j[3])];
            };
            acc += (-at(2) + 16 * at(1) - 30 * at(0) + 16 * at(-1) - at(-2)) / (12 * h * h);
        }
        out[s] = acc;
    }
    return out;
}
} // namespace

TEST_CASE("grid invariants")
{
    CHECK_THROWS(Grid4(7, 1.0));
    CHECK_THROWS(Grid4(6, 1.0));
    CHECK_THROWS(Grid4(8, 0.0));
    Grid4 g(8, 2.0);
    CHECK(g.spacing() == doctest::Approx(0.25));
    CHECK(g.size() == 4096u);
    for (std::size_t s : {0ul, 17ul, 4095ul}) {
        auto i = g.unflatten(s);
        CHECK(g.index(i[0], i[1], i[2], i[3]) == s);
    }
}

TEST_CASE("derive: eigenfunctions and constants")
{
    const double L = 3.0;
    Grid4 g(16, L);
    const double k = 2 * pi / L;
    auto f = ScalarField::from_function(g, [&](const Vec4& x) { return std::cos(k * x[0]); });
    auto lap = laplacian(f);
    CHECK((lap.values() + k * k * f.values()).abs().maxCoeff() < 1e-11);
    auto dx = derive(f, {1, 0, 0, 0});
    auto ex = ScalarField::from_function(g, [&](const Vec4& x) { return -k * std::sin(k * x[0]); });
    CHECK((dx.values() - ex.values()).abs().maxCoeff() < 1e-12);

    ScalarField c(g, 3.5);
    for (MultiIndex m : {MultiIndex{1, 0, 0, 0}, MultiIndex{0, 2, 0, 1}, MultiIndex{1, 1, 1, 1}})
        CHECK(derive(c, m).max_abs() < 1e-12);
    CHECK(bilaplacian(c).max_abs() < 1e-12);
    CHECK_THROWS(derive(f, {2, 2, 1, 0}));
    CHECK_THROWS(laplacian(f) + ScalarField(Grid4(8, L)));
}

TEST_CASE("derive: spectral Laplacian against fourth-order finite differences")
{
    // Error of the FD stencil is O(h^4): halving h must shrink it ~16x.
    double err[2];
    int idx = 0;
    for (int n : {16, 32}) {
        Grid4 g(n, 2 * pi);
        auto f = ScalarField::from_function(g, probe);
        auto spec = laplacian(f);
        err[idx++] = (spec.values() - fd_laplacian(f)).abs().maxCoeff();
    }
    CHECK(err[1] < err[0] / 12.0);
    CHECK(err[1] < 2e-3);
}

TEST_CASE("integrate")
{
    const double L = 2.5;
    Grid4 g(8, L);
    const double k = 2 * pi / L;
    CHECK(integrate(ScalarField(g, 1.0)) == doctest::Approx(std::pow(L, 4)).epsilon(1e-14));
    auto c = ScalarField::from_function(g, [&](const Vec4& x) { return std::cos(k * x[0]); });
    CHECK(std::abs(integrate(c)) < 1e-12);
    auto s2 = ScalarField::from_function(g, [&](const Vec4& x) { return std::pow(std::sin(k * x[0]), 2); });
    CHECK(integrate(s2) == doctest::Approx(std::pow(L, 4) / 2).epsilon(1e-13));
    // weighted form
    ScalarField two(g, 2.0);
    CHECK(integrate(s2, two) == doctest::Approx(std::pow(L, 4)).epsilon(1e-13));
}

TEST_CASE("invert_bilaplacian")
{
    const double L = 2.0;
    Grid4 g(16, L);
    const double k = 2 * pi / L;
    auto f = ScalarField::from_function(g, [&](const Vec4& x) { return std::cos(k * x[0]); });
    auto u = invert_bilaplacian(f);
    CHECK((u.values() - std::pow(L / (2 * pi), 4) * f.values()).abs().maxCoeff() < 1e-14);
    CHECK(invert_bilaplacian(ScalarField(g, 0.0)).max_abs() == 0.0);

    Grid4 g2(16, 2 * pi);
    auto r = random_field(g2, {3, 1.0, 0.1}, 11);
    auto v = invert_bilaplacian(r);
    CHECK((bilaplacian(v).values() - r.values()).abs().maxCoeff() < 1e-10 * r.max_abs());
    CHECK(std::abs(v.mean()) < 1e-14);
    CHECK_THROWS(invert_bilaplacian(r + 0.1));
}

TEST_CASE("Parseval, integration by parts and flat Bochner")
{
    Grid4 g(16, 2 * pi);
    auto f = random_field(g, {2, 0.7, 0.2}, 1);
    auto h = random_field(g, {2, 1.3, 0.2}, 2);
    CHECK(rel(integrate(f * h), spectral_inner(f, h)) < 1e-12);

    const double a = integrate(f * laplacian(h));
    const double b = integrate(h * laplacian(f));
    const VectorField df = gradient(f), dh = gradient(h);
    double c = 0.0;
    for (int i = 0; i < 4; ++i)
        c -= integrate(df[i] * dh[i]);
    CHECK(rel(a, b) < 1e-10);
    CHECK(rel(a, c) < 1e-10);

    const double lhs = integrate(laplacian(f) * laplacian(h));
    const double rhs = integrate_values(g, hessian(f).contract(hessian(h)));
    CHECK(rel(lhs, rhs) < 1e-10);
}

TEST_CASE("divergence and lowpass")
{
    Grid4 g(16, 2 * pi);
    auto f = random_field(g, {2, 1.0, 0.2}, 5);
    CHECK((divergence(gradient(f)).values() - laplacian(f).values()).abs().maxCoeff() < 1e-11);
    CHECK((lowpass(f, 0.5).values() - f.values()).abs().maxCoeff() < 1e-13);
    auto hi = ScalarField::from_function(g, [](const Vec4& x) { return std::cos(7 * x[1]); });
    CHECK(lowpass(hi, 2.0 / 3.0).max_abs() < 1e-13);
}

TEST_CASE("random fields are seeded and normalised")
{
    Grid4 g(8, 2 * pi);
    RandomRecipe r{2, 0.4, 0.3};
    auto a = random_field(g, r, 42), b = random_field(g, r, 42), c = random_field(g, r, 43);
    CHECK((a.values() == b.values()).all());
    CHECK(!(a.values() == c.values()).all());
    CHECK(a.max_abs() == doctest::Approx(0.4));
    CHECK(std::abs(a.mean()) < 1e-15);
    CHECK_THROWS(random_field(g, {4, 1.0, 0.1}, 1));
}

TEST_CASE("interpolate reproduces the trigonometric interpolant")
{
    Grid4 g(16, 2 * pi);
    auto f = ScalarField::from_function(g, probe);
    std::vector<Vec4> pts = {g.point(123), Vec4(0.31, 1.7, 4.4, 2.2), Vec4(6.1, 0.05, 3.3, 5.9)};
    auto v = interpolate(f, pts);
    CHECK(v[0] == doctest::Approx(f[123]).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(probe(pts[1])).epsilon(1e-12));
    CHECK(v[2] == doctest::Approx(probe(pts[2])).epsilon(1e-12));
}

TEST_CASE("Gauss-Legendre exactness")
{
    auto r = gauss_legendre(6, 0.0, 2.0);
    double s = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i)
        s += r.w[i] * std::pow(r.x[i], 11);
    CHECK(s == doctest::Approx(std::pow(2.0, 12) / 12).epsilon(1e-13));
    auto one = gauss_legendre(1, 1.0, 3.0);
    CHECK(one.w[0] == doctest::Approx(2.0));
}

TEST_CASE("sphere_integral")
{
    const double eps = 0.37;
    CHECK(sphere_integral([](const Vec4&, const Vec4&) { return 1.0; }, eps)
          == doctest::Approx(2 * pi * pi * std::pow(eps, 3)).epsilon(1e-13));
    CHECK(std::abs(sphere_integral([](const Vec4& x, const Vec4&) { return x[0] / x.norm(); }, 1.3)) < 1e-14);
    CHECK(sphere_integral([](const Vec4& x, const Vec4&) { return std::pow(x[0] / x.norm(), 2); }, 1.0)
          == doctest::Approx(2 * pi * pi / 4).epsilon(1e-13));
    // degree-8 monomials: x_a^2 ~ Beta(1/2, 3/2) under the uniform measure on S^3
    auto moment = [](int m) {
        return std::exp(std::lgamma(m + 0.5) + std::lgamma(2.0) - std::lgamma(0.5) - std::lgamma(m + 2.0));
    };
    for (int a = 0; a < 4; ++a) {
        const double v = sphere_integral([a](const Vec4&, const Vec4& nu) { return std::pow(nu[a], 8); }, 1.0);
        CHECK(v == doctest::Approx(2 * pi * pi * moment(4)).epsilon(1e-12));
    }
    // off-centre sphere, radial function of |x - c|
    Vec4 c(1, 2, 3, 4);
    CHECK(sphere_integral([&](const Vec4& x, const Vec4&) { return (x - c).squaredNorm(); }, 2.0, c)
          == doctest::Approx(4.0 * 2 * pi * pi * 8).epsilon(1e-13));
    // ball volume π² r^4 / 2
    CHECK(ball_integral([](const Vec4&) { return 1.0; }, 0.0, 1.5)
          == doctest::Approx(pi * pi * std::pow(1.5, 4) / 2).epsilon(1e-13));
}

TEST_CASE("RadialProfile: monotone cubic Hermite")
{
    std::vector<double> r, v;
    for (int i = 1; i <= 20; ++i) {
        r.push_back(0.05 * i);
        v.push_back(-2.0 * std::log(0.05 * i));
    }
    RadialProfile p(r, v);
    CHECK(p(0.35) == doctest::Approx(-2.0 * std::log(0.35)).epsilon(1e-3));
    // no overshoot: the interpolant of monotone data stays monotone
    double prev = p(r.front());
    for (double x = r.front(); x <= r.back(); x += 1e-3) {
        CHECK(p(x) <= prev + 1e-14);
        prev = p(x);
    }
    RadialProfile lin({1.0, 2.0, 3.0}, {1.0, 3.0, 5.0});
    CHECK(lin(2.5) == doctest::Approx(4.0));
    CHECK(lin.derivative(1.7) == doctest::Approx(2.0));
    CHECK_THROWS(RadialProfile({1.0, 1.0}, {0.0, 1.0}));
    CHECK_THROWS(RadialProfile({0.0, 1.0}, {0.0, 1.0}));
    CHECK_THROWS(lin(3.5));
}

TEST_CASE("binary container and CSV slices")
{
    Grid4 g(8, 1.5);
    auto f = random_field(g, {2, 1.0, 0.2}, 9);
    const std::string path = "test_field4_roundtrip.ldf";
    write_field(path, f);
    FieldKind kind;
    auto back = read_field(path, &kind);
    REQUIRE(back.size() == 1);
    CHECK(kind == FieldKind::scalar);
    CHECK(back[0].grid() == g);
    CHECK((back[0].values() == f.values()).all());
    write_field(path, gradient(f));
    back = read_field(path, &kind);
    CHECK(kind == FieldKind::vector);
    CHECK(back.size() == 4);
    std::remove(path.c_str());
    write_slice_csv("test_field4_slice.csv", f, 2);
    std::remove("test_field4_slice.csv");
}
